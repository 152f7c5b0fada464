"""Heteroscedastic varying-coefficient simulation study.

Data follow ``Y = (x2 + Z) / (x1 + 0.5)`` with ``Z`` standard normal,
``X1 ~ U[0, 1]`` and ``X2 ~ U[-2, 2]``, so the true conditional CDF is
``Phi(v * (x1 + 0.5) - x2)``.  Optional noise columns ``z1..zp ~ U[0, 1]``
carry no information about ``Y``.  Each replication fits a boosted model
with one spline-by-spline learner per covariate and records how far its
conditional CDFs are from the truth over a covariate grid.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .basis import BasisSpec, PenaltySpec
from .boost import BoostConfig, Resampling, fit_tuned, make_grid
from .data import Dataset
from .errors import CtmError
from .learner import TensorLearner
from .model import CtmModel, monotonicity_check

logger = logging.getLogger(__name__)

X1_RANGE = (0.0, 1.0)
X2_RANGE = (-2.0, 2.0)
NOISE_RANGE = (0.0, 1.0)
NOISE_EVAL = 0.5
QUANTILE_TAUS = (0.5, 0.75, 0.9)


def simulate_hvc(N: int, p: int = 0, seed=None) -> Dataset:
    """Draw ``N`` observations, with ``p`` extra noise columns.

    The covariates and response are drawn before the noise columns, so for a
    fixed seed the informative part of the sample is the same for every ``p``.
    """
    rng = np.random.default_rng(seed)
    x1 = rng.uniform(*X1_RANGE, size=N)
    x2 = rng.uniform(*X2_RANGE, size=N)
    y = hvc_response(x1, x2, rng)
    cov = {"x1": x1, "x2": x2}
    for k in range(1, p + 1):
        cov[f"z{k}"] = rng.uniform(*NOISE_RANGE, size=N)
    return Dataset(y, cov)


def hvc_response(x1, x2, rng) -> np.ndarray:
    """Responses at given covariates: ``(x2 + Z) / (x1 + 0.5)`` with ``Z ~ N(0, 1)``."""
    x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
    z = special.ndtri(rng.uniform(size=x1.shape))
    return (x2 + z) / (x1 + 0.5)


def true_cdf_hvc(x1, x2, v):
    return special.ndtr(np.asarray(v) * (np.asarray(x1) + 0.5) - np.asarray(x2))


def true_quantile_hvc(x1, x2, tau):
    return (np.asarray(x2) + special.ndtri(tau)) / (np.asarray(x1) + 0.5)


def hvc_learners(grid_range, p: int = 0, degree: int = 3, knots: int = 20) -> list[TensorLearner]:
    """Spline-by-spline learners for ``x1``, ``x2`` and each noise column."""
    pen = PenaltySpec("difference", order=2)
    yb = BasisSpec("bspline", degree, knots, domain=grid_range)
    cols = [("x1", X1_RANGE), ("x2", X2_RANGE)] + [(f"z{k}", NOISE_RANGE) for k in range(1, p + 1)]
    return [
        TensorLearner(name, BasisSpec("bspline", degree, knots, domain=dom), yb, pen, pen, covariate=name)
        for name, dom in cols
    ]


def covariate_grid(points: int = 10, p: int = 0) -> dict[str, np.ndarray]:
    """Cartesian ``(x1, x2)`` evaluation grid; noise columns held at 0.5."""
    a, b = np.meshgrid(np.linspace(*X1_RANGE, points), np.linspace(*X2_RANGE, points), indexing="ij")
    X = {"x1": a.ravel(), "x2": b.ravel()}
    for k in range(1, p + 1):
        X[f"z{k}"] = np.full(a.size, NOISE_EVAL)
    return X


@dataclass
class MadSummary:
    mad: np.ndarray
    x: dict
    min: float
    median: float
    max: float


def mad_surface(
    model_cdf: Callable,
    oracle_cdf: Callable,
    X: dict,
    v_grid,
) -> MadSummary:
    """Mean absolute CDF deviation over ``v_grid`` at every covariate row.

    Both callables take ``(X, v_grid)`` and return a ``(len(v_grid), rows)``
    array of probabilities.
    """
    v = np.asarray(v_grid, dtype=float)
    est = np.asarray(model_cdf(X, v))
    tru = np.asarray(oracle_cdf(X, v))
    mad = np.abs(tru - est).mean(axis=0)
    return MadSummary(mad, X, float(mad.min()), float(np.median(mad)), float(mad.max()))


def hvc_oracle(X, v):
    return true_cdf_hvc(np.asarray(X["x1"])[None, :], np.asarray(X["x2"])[None, :], np.asarray(v)[:, None])


def model_mad(model: CtmModel, points: int = 10, p: int = 0) -> MadSummary:
    X = covariate_grid(points, p)
    return mad_surface(model.cdf_lattice, hvc_oracle, X, model.grid)


@dataclass(frozen=True)
class SimStudyConfig:
    N: int = 200
    replications: int = 10
    noise_vars: tuple[int, ...] = (0,)
    grid_points: int = 10
    seed: int = 2012
    max_iterations: int = 1000
    step_size: float = 0.3
    df_target: float = 4.0
    bootstrap: int = 10
    response_grid: int | None = None
    knots: int = 20

    def __post_init__(self):
        object.__setattr__(self, "noise_vars", tuple(int(p) for p in self.noise_vars))
        if any(p < 0 for p in self.noise_vars):
            raise ValueError("noise_vars must be non-negative")
        if self.N < 1 or self.replications < 1 or self.grid_points < 1:
            raise ValueError("N, replications and grid_points must be positive")

    def boost_config(self, seed: int) -> BoostConfig:
        return BoostConfig(
            max_iterations=self.max_iterations,
            step_size=self.step_size,
            loss="bin",
            link="probit",
            grid_size=self.response_grid,
            df_target=self.df_target,
            resampling=Resampling("bootstrap", self.bootstrap) if self.bootstrap else Resampling(),
            seed=seed,
        )


def replication_seeds(seed: int, replications: int) -> list[int]:
    """Per-replication seeds derived from the master seed."""
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1)[0]) for c in ss.spawn(replications)]


@dataclass
class ReplicationResult:
    replication: int
    p: int
    seed: int
    mstop: int | None
    mad: MadSummary | None
    quantiles: list = field(default_factory=list)
    violations: int | None = None
    error: str | None = None


def run_replication(cfg: SimStudyConfig, rep: int, seed: int, p: int, monotone_points: int = 50):
    data = simulate_hvc(cfg.N, p, seed)
    try:
        bc = cfg.boost_config(seed)
        grid = make_grid(data.y, bc.grid_size, bc.grid_margin)
        learners = hvc_learners(grid.range, p, knots=cfg.knots)
        model, trace = fit_tuned(data, learners, bc, grid)
    except CtmError as exc:
        logger.warning("replication %d (p=%d) failed: %s", rep, p, exc)
        return ReplicationResult(rep, p, seed, None, None, error=str(exc)), None
    summary = model_mad(model, cfg.grid_points, p)

    X = covariate_grid(cfg.grid_points, p)
    qrows = []
    for r in range(X["x1"].size):
        xr = {k: v[r: r + 1] for k, v in X.items()}
        try:
            ests = model.quantile(xr, QUANTILE_TAUS)
        except CtmError:
            ests = []
            for tau in QUANTILE_TAUS:
                try:
                    ests.append(float(model.quantile(xr, tau)[0]))
                except CtmError:
                    ests.append(float("nan"))
        for tau, est in zip(QUANTILE_TAUS, ests):
            truth = float(true_quantile_hvc(xr["x1"][0], xr["x2"][0], tau))
            qrows.append((r, float(xr["x1"][0]), float(xr["x2"][0]), tau, truth, float(est)))

    rng = np.random.default_rng([seed, 7])
    Xm = {"x1": rng.uniform(*X1_RANGE, monotone_points), "x2": rng.uniform(*X2_RANGE, monotone_points)}
    for k in range(1, p + 1):
        Xm[f"z{k}"] = rng.uniform(*NOISE_RANGE, monotone_points)
    viol = monotonicity_check(model, Xm)
    n_bad_rows = len({v.row for v in viol})
    return ReplicationResult(rep, p, seed, trace.mstop, summary, qrows, n_bad_rows), model


def replicate_study(cfg: SimStudyConfig, progress: Callable | None = None) -> list[ReplicationResult]:
    """Run every ``(p, replication)`` cell; failures are recorded, not raised.

    Replication ``r`` uses the same informative sample for every ``p``.
    """
    seeds = replication_seeds(cfg.seed, cfg.replications)
    out = []
    for p in cfg.noise_vars:
        for rep, s in enumerate(seeds):
            res, _ = run_replication(cfg, rep, s, p)
            out.append(res)
            if progress is not None:
                progress(res)
    return out


MAD_HEADER = ("replication", "p", "seed", "mstop", "mad_min", "mad_median", "mad_max", "monotone_violations")
QUANTILE_HEADER = ("replication", "p", "point", "x1", "x2", "tau", "true_quantile", "ctm_quantile")


def mad_table(results: Sequence[ReplicationResult]) -> dict[str, list]:
    cols = {h: [] for h in MAD_HEADER}
    for r in results:
        nan = float("nan")
        row = (
            r.replication, r.p, r.seed, -1 if r.mstop is None else r.mstop,
            r.mad.min if r.mad else nan, r.mad.median if r.mad else nan, r.mad.max if r.mad else nan,
            -1 if r.violations is None else r.violations,
        )
        for h, val in zip(MAD_HEADER, row):
            cols[h].append(val)
    return cols


def quantile_table(results: Sequence[ReplicationResult]) -> dict[str, list]:
    cols = {h: [] for h in QUANTILE_HEADER}
    for r in results:
        for point, x1, x2, tau, truth, est in r.quantiles:
            for h, val in zip(QUANTILE_HEADER, (r.replication, r.p, point, x1, x2, tau, truth, est)):
                cols[h].append(val)
    return cols


def summarize(results: Sequence[ReplicationResult]) -> dict[int, dict]:
    """Per-``p`` median over replications of the min/median/max MAD."""
    out = {}
    for p in sorted({r.p for r in results}):
        rs = [r for r in results if r.p == p and r.mad is not None]
        if not rs:
            continue
        out[p] = {
            "replications": len(rs),
            "median_of_min": float(np.median([r.mad.min for r in rs])),
            "median_of_median": float(np.median([r.mad.median for r in rs])),
            "median_of_max": float(np.median([r.mad.max for r in rs])),
            "monotone_replications": sum(1 for r in rs if r.violations == 0),
        }
    return out


def config_dict(cfg: SimStudyConfig) -> dict:
    d = asdict(cfg)
    d["noise_vars"] = list(cfg.noise_vars)
    return d
