"""Command-line interface: ``ctmboost {fit,predict,quantile,diagnose,simulate}``.

Exit codes: 0 ok, 2 usage/config error, 3 data error, 4 numeric error,
5 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .basis import BasisSpec, PenaltySpec, neighbors_from_levels
from .boost import BoostConfig, Resampling, fit_tuned, make_grid
from .data import dataset_from_table, read_table, write_table
from .errors import ConfigError, CtmError, DataError, ModelFormatError, NumericError
from .learner import TensorLearner
from .model import deserialize, diagnostics, monotonicity_check, serialize
from . import sim

logger = logging.getLogger("ctmboost")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_IO = 5

CONFIG_VERSION = 1
TRACE_HEADER = ("iteration", "selected", "risk", "oob_mean_risk")


# -- config ------------------------------------------------------------------


def load_config(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    if doc.get("version") != CONFIG_VERSION:
        raise ConfigError(f"{path}: unsupported config version {doc.get('version')!r}")
    for key in ("response", "learners"):
        if key not in doc:
            raise ConfigError(f"{path}: missing required key '{key}'")
    return doc


def _basis_from(d: dict, column=None, levels=None) -> BasisSpec:
    d = dict(d)
    kind = d.get("kind")
    if kind in ("linear", "bspline", "cyclic_bspline") and d.get("domain") is None:
        if column is None:
            raise ConfigError(f"{kind} basis needs a domain")
        d["domain"] = (float(np.min(column)), float(np.max(column)))
    if kind == "dummy" and d.get("levels") is None:
        d["levels"] = levels
    return BasisSpec.from_dict(d)


def _penalty_from(d: dict | None, basis: BasisSpec) -> PenaltySpec:
    if d is None:
        return PenaltySpec()
    d = dict(d)
    if d.get("kind") == "adjacency" and isinstance(d.get("neighbors"), dict):
        d["neighbors"] = neighbors_from_levels(basis.levels, d["neighbors"])
    return PenaltySpec.from_dict(d)


def build(doc: dict, table: dict):
    """Dataset, learners, boost config and grid from a config document."""
    covs = []
    for spec in doc["learners"]:
        c = spec.get("covariate", "intercept")
        if c != "intercept" and c not in covs:
            covs.append(c)
    for name in [doc["response"], *covs] + ([doc["weights"]] if doc.get("weights") else []):
        if name not in table:
            raise ConfigError(f"config refers to column '{name}' which is not in the data")
    data = dataset_from_table(table, doc["response"], covs, doc.get("weights"))

    g = doc.get("grid", {})
    res = doc.get("resampling", {"kind": "none"})
    config = BoostConfig(
        max_iterations=int(doc.get("max_iterations", 500)),
        step_size=float(doc.get("step_size", 0.1)),
        loss=doc.get("loss", "bin"),
        link=doc.get("link", "probit"),
        grid_size=g.get("n"),
        grid_margin=float(g.get("margin", 0.05)),
        grid_kind=g.get("kind", "equidistant"),
        df_target=float(doc.get("df_target", 4.0)),
        resampling=Resampling(res.get("kind", "none"), int(res.get("replications", 0))),
        seed=int(doc.get("seed", 0)),
    )
    grid = make_grid(data.y, config.grid_size, config.grid_margin, config.grid_kind)

    default_y = doc.get("response_basis", {"kind": "bspline", "degree": 3, "num_interior_knots": 20})
    default_y_pen = doc.get("response_penalty", {"kind": "difference", "order": 2})
    learners = []
    for k, spec in enumerate(doc["learners"]):
        c = spec.get("covariate", "intercept")
        col = None if c == "intercept" else data.covariates[c]
        levels = None
        if col is not None and col.dtype == object:
            levels = sorted(set(col.tolist()))
        xb_doc = spec.get("basis", {"kind": "intercept"} if c == "intercept" else None)
        if xb_doc is None:
            raise ConfigError(f"learner {k} ('{c}') needs a basis")
        xb = _basis_from(xb_doc, col, levels)
        yb_doc = dict(spec.get("response_basis", default_y))
        if yb_doc.get("kind") in ("linear", "bspline", "cyclic_bspline") and yb_doc.get("domain") is None:
            yb_doc["domain"] = grid.range
        yb = BasisSpec.from_dict(yb_doc)
        lam = spec.get("lambda")
        learners.append(
            TensorLearner(
                label=spec.get("label", c),
                covariate=None if c == "intercept" else c,
                x_basis=xb,
                x_penalty=_penalty_from(spec.get("penalty"), xb),
                y_basis=yb,
                y_penalty=_penalty_from(spec.get("response_penalty", default_y_pen), yb),
                df_target=spec.get("df"),
                lam=lam,
                fixed_lambda=lam is not None,
            )
        )
    return data, learners, config, grid


# -- helpers -------------------------------------------------------------------


def _read_model(path):
    return deserialize(Path(path).read_text(encoding="utf-8"))


def _newdata(model, path, categorical=()):
    cats = set(categorical)
    for L in model.learners:
        if L.x_basis.kind == "dummy":
            cats.add(L.covariate)
    table = read_table(path, cats)
    missing = [c for c in model.covariates if c not in table]
    if missing:
        raise DataError(f"{path}: missing covariate column(s) {', '.join(missing)}")
    return table


def _row_ok(model, X, r) -> str | None:
    xr = {k: v[r: r + 1] for k, v in X.items()}
    try:
        model.transform(xr, model.grid[:1])
    except CtmError as exc:
        return str(exc)
    return None


def _good_rows(model, X, skip_bad):
    m = len(next(iter(X.values()))) if X else 1
    bad = [(r, msg) for r in range(m) if (msg := _row_ok(model, X, r))]
    if bad and not skip_bad:
        detail = "; ".join(f"row {r + 1}: {msg}" for r, msg in bad[:10])
        raise DataError(f"{len(bad)} row(s) outside model domains: {detail}")
    for r, msg in bad:
        logger.warning("skipping row %d: %s", r + 1, msg)
    return [r for r in range(m) if r not in {b for b, _ in bad}]


# -- commands ------------------------------------------------------------------


def cmd_fit(args) -> int:
    doc = load_config(args.config)
    table = read_table(args.data, doc.get("categorical", ()))
    data, learners, config, grid = build(doc, table)
    model, trace = fit_tuned(data, learners, config, grid)
    model.metadata["response"] = doc["response"]
    Path(args.out).write_text(serialize(model), encoding="utf-8")
    trace_path = args.trace or str(Path(args.out).with_suffix("")) + ".trace.csv"
    M = config.max_iterations
    oob = trace.oob_curves.mean(axis=0) if trace.oob_curves is not None else np.full(M + 1, np.nan)
    write_table(
        trace_path,
        {
            "iteration": range(M + 1),
            "selected": [""] + [learners[j].label for j in trace.selected],
            "risk": trace.risk,
            "oob_mean_risk": oob,
        },
    )
    if config.resampling.kind != "none":
        print(f"selected mstop: {trace.mstop}")
    print(f"model written to {args.out}; trace written to {trace_path}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = _read_model(args.model)
    X = _newdata(model, args.newdata)
    grid = model.grid
    if args.grid:
        grid = np.asarray([float(v) for v in args.grid.split(",")])
    elif args.grid_size:
        lo, hi = model.response_range
        grid = np.linspace(lo, hi, args.grid_size)
    rows = _good_rows(model, X, args.skip_bad)
    Xr = {k: v[rows] for k, v in X.items()}
    P = model.cdf_lattice(Xr, grid) if rows else np.zeros((grid.size, 0))
    out = {"row": [], "v": [], "cdf": []}
    for j, r in enumerate(rows):
        out["row"].extend([r + 1] * grid.size)
        out["v"].extend(grid.tolist())
        out["cdf"].extend(P[:, j].tolist())
    write_table(args.out, out)
    return EXIT_OK


def cmd_quantile(args) -> int:
    model = _read_model(args.model)
    X = _newdata(model, args.newdata)
    if args.interval is not None:
        a = float(args.interval)
        if not 0 < a < 0.5:
            raise ConfigError("--interval must lie in (0, 0.5)")
        taus = [a, 1 - a]
        names = [f"lower_{a:g}", f"upper_{1 - a:g}"]
    else:
        taus = [float(t) for t in args.taus.split(",")]
        names = [f"q_{t:g}" for t in taus]
    rows = _good_rows(model, X, args.skip_bad)
    out = {"row": [], **{n: [] for n in names}, "status": []}
    failed = 0
    for r in rows:
        xr = {k: v[r: r + 1] for k, v in X.items()}
        try:
            q = model.quantile(xr, taus, tails=args.tails)
            status = "ok"
        except CtmError as exc:
            q = [float("nan")] * len(taus)
            status = type(exc).__name__
            failed += 1
            logger.warning("row %d: %s", r + 1, exc)
        out["row"].append(r + 1)
        for n, val in zip(names, q):
            out[n].append(float(val))
        out["status"].append(status)
    write_table(args.out, out)
    return EXIT_NUMERIC if failed and not args.skip_bad else EXIT_OK


def cmd_diagnose(args) -> int:
    model = _read_model(args.model)
    doc_cats = [L.covariate for L in model.learners if L.x_basis.kind == "dummy"]
    table = read_table(args.data, doc_cats)
    resp = args.response or model.metadata.get("response", "y")
    data = dataset_from_table(table, resp, model.covariates)
    rep = diagnostics(model, data)
    print(f"KS statistic: {rep.ks_statistic:.6g} (p = {rep.ks_pvalue:.4g}, vs {model.link.kind} link)")
    print(f"rank correlation(residuals, response): {rep.rank_correlation:.6g}")
    if rep.violations:
        rows = sorted({v.row for v in rep.violations})
        print(f"monotonicity violations: {len(rep.violations)} in {len(rows)} row(s)")
        for v in rep.violations[:20]:
            print(f"  row {v.row + 1}: h decreases between v={v.v_lower:.6g} and v={v.v_upper:.6g}")
    else:
        print("monotone on checked sample")
    out = args.out or str(Path(args.model).with_suffix("")) + ".residuals.csv"
    write_table(out, {"row": range(1, data.N + 1), "response": data.y, "residual": rep.residuals})
    return EXIT_OK


def cmd_simulate(args) -> int:
    noise = [int(p) for p in args.noise.split(",")] if args.noise else [0]
    cfg = sim.SimStudyConfig(
        N=args.n,
        replications=100 if args.full else args.replications,
        noise_vars=tuple(noise),
        grid_points=args.grid_points,
        seed=args.seed,
        max_iterations=args.max_iterations,
        step_size=args.step_size,
        df_target=args.df,
        bootstrap=args.bootstrap,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()

    def progress(r):
        if r.mad is None:
            logger.warning("p=%d replication %d failed: %s", r.p, r.replication, r.error)
        else:
            logger.info("p=%d replication %d: median MAD %.4f (mstop %d)",
                        r.p, r.replication, r.mad.median, r.mstop)

    results = sim.replicate_study(cfg, progress)
    write_table(out / "mad.csv", sim.mad_table(results))
    write_table(out / "quantiles.csv", sim.quantile_table(results))
    summary = sim.summarize(results)
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump({"config": sim.config_dict(cfg), "by_p": {str(k): v for k, v in summary.items()}},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    for p, s in summary.items():
        print(f"p={p}: median MAD over replications {s['median_of_median']:.4f} "
              f"(min {s['median_of_min']:.4f}, max {s['median_of_max']:.4f}); "
              f"monotone in {s['monotone_replications']}/{s['replications']}")
    logger.info("study finished in %.1fs", time.perf_counter() - t0)
    return EXIT_OK


# -- entry point -----------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctmboost", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a model from a CSV file and a JSON config")
    f.add_argument("data")
    f.add_argument("config")
    f.add_argument("out", help="model document to write")
    f.add_argument("--trace", help="trace CSV (default: <out>.trace.csv)")
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", help="conditional CDF values on a response grid")
    pr.add_argument("model")
    pr.add_argument("newdata")
    pr.add_argument("-o", "--out", required=True)
    pr.add_argument("--grid", help="comma-separated response values (default: training grid)")
    pr.add_argument("--grid-size", type=int, help="equidistant grid over the training range")
    pr.add_argument("--skip-bad", action="store_true", help="drop rows outside model domains")
    pr.set_defaults(func=cmd_predict)

    q = sub.add_parser("quantile", help="conditional quantiles or prediction intervals")
    q.add_argument("model")
    q.add_argument("newdata")
    q.add_argument("-o", "--out", required=True)
    q.add_argument("--taus", default="0.1,0.5,0.9")
    q.add_argument("--interval", type=float, help="emit (Q(a), Q(1-a)) pairs")
    q.add_argument("--tails", choices=("raise", "clip"), default="raise")
    q.add_argument("--skip-bad", action="store_true")
    q.set_defaults(func=cmd_quantile)

    d = sub.add_parser("diagnose", help="residual diagnostics and monotonicity check")
    d.add_argument("model")
    d.add_argument("data")
    d.add_argument("--response", help="response column (default: stored in the model)")
    d.add_argument("-o", "--out", help="residual CSV (default: <model>.residuals.csv)")
    d.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("simulate", help="varying-coefficient simulation study")
    s.add_argument("--out-dir", default="sim_out")
    sd = sim.SimStudyConfig()
    s.add_argument("--n", type=int, default=sd.N)
    s.add_argument("--replications", type=int, default=sd.replications)
    s.add_argument("--full", action="store_true", help="100 replications")
    s.add_argument("--noise", default="0", help="comma-separated noise-variable counts, e.g. 0,1,2,3,4,5")
    s.add_argument("--grid-points", type=int, default=sd.grid_points)
    s.add_argument("--seed", type=int, default=sd.seed)
    s.add_argument("--max-iterations", type=int, default=sd.max_iterations)
    s.add_argument("--step-size", type=float, default=sd.step_size)
    s.add_argument("--df", type=float, default=sd.df_target)
    s.add_argument("--bootstrap", type=int, default=sd.bootstrap)
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ModelFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
