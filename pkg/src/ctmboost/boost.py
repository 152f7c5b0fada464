"""Component-wise boosting of tensor-product transformation learners.

One iteration: evaluate the negative gradient of the loss on the
(grid x observation) lattice at the current transformation, fit every
learner to it by penalized least squares, keep the learner with the smallest
weighted residual sum of squares and move its coefficients a fraction
``step_size`` towards that fit.  The number of iterations is chosen on
out-of-sample risk from bootstrap or k-fold replications.
"""

from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .data import Dataset
from .errors import ConfigError, DataError, DegeneracyError, MarginError, NumericError
from .learner import DEFAULT_DF, LearnerWork, TensorLearner, calibrate_lambda, precompute
from .loss import LINK_KINDS, Link, check_loss_kind, warn_if_degenerate
from .model import CtmModel

logger = logging.getLogger(__name__)

THREADS_ENV = "CTMBOOST_THREADS"


@dataclass(frozen=True)
class Grid:
    """Strictly increasing response grid."""

    values: np.ndarray
    kind: str = "equidistant"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size < 2 or np.any(np.diff(v) <= 0):
            raise ConfigError("grid must hold at least 2 strictly increasing values")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def range(self) -> tuple[float, float]:
        return float(self.values[0]), float(self.values[-1])


def make_grid(y, n: int | None = None, margin: float = 0.05, kind: str = "equidistant") -> Grid:
    """Response grid for the integrated loss.

    The equidistant grid runs from ``min(y) - margin * range(y)`` to
    ``max(y)`` with ``n`` points (default ``min(N, 100)``); the first point
    must lie strictly below every response.  ``kind="observed_support"``
    returns the sorted distinct responses, for discrete data.
    """
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0 or not np.all(np.isfinite(y)):
        raise DataError("response must be non-empty and finite")
    lo, hi = float(y.min()), float(y.max())
    if hi <= lo:
        raise DegeneracyError("constant response; cannot build a grid")
    if kind == "observed_support":
        return Grid(np.unique(y), kind)
    if kind != "equidistant":
        raise ConfigError(f"unknown grid kind {kind!r}")
    n = min(y.size, 100) if n is None else int(n)
    if n < 2:
        raise ConfigError("grid needs n >= 2")
    if not margin > 0:
        raise MarginError(f"margin must be positive so the grid starts below min(y), got {margin!r}")
    start = lo - margin * (hi - lo)
    values = np.linspace(start, hi, n)
    values[-1] = hi
    return Grid(values, kind)


@dataclass(frozen=True)
class Resampling:
    kind: str = "none"
    replications: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "bootstrap", "kfold"):
            raise ConfigError(f"unknown resampling {self.kind!r}")
        if self.kind != "none" and self.replications < 2:
            raise ConfigError(f"{self.kind} resampling needs at least 2 replications")


@dataclass(frozen=True)
class BoostConfig:
    max_iterations: int = 500
    step_size: float = 0.1
    loss: str = "bin"
    link: str = "probit"
    grid_size: int | None = None
    grid_margin: float = 0.05
    grid_kind: str = "equidistant"
    df_target: float = DEFAULT_DF
    resampling: Resampling = field(default_factory=Resampling)
    seed: int = 0

    def __post_init__(self):
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 0:
            raise ConfigError("max_iterations must be a non-negative integer")
        if not 0 < self.step_size < 1:
            raise ConfigError(f"step_size must lie in (0, 1), got {self.step_size!r}")
        check_loss_kind(self.loss)
        if self.link not in LINK_KINDS:
            raise ConfigError(f"unknown link {self.link!r}")
        if not self.df_target > 0:
            raise ConfigError("df_target must be positive")
        if isinstance(self.resampling, dict):
            object.__setattr__(self, "resampling", Resampling(**self.resampling))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BoostConfig":
        d = dict(d)
        if isinstance(d.get("resampling"), dict):
            d["resampling"] = Resampling(**d["resampling"])
        return cls(**d)


@dataclass
class FitTrace:
    """Per-iteration record of one boosting run.

    ``risk[m]`` is the in-sample risk after ``m`` updates (so ``risk[0]`` is the
    initial risk); ``selected[m]`` is the learner picked in update ``m + 1``.
    """

    selected: np.ndarray
    risk: np.ndarray
    eval_risk: np.ndarray | None = None
    mstop: int | None = None
    oob_curves: np.ndarray | None = None


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _covariate(data: Dataset, learner: TensorLearner):
    if learner.x_basis.kind == "intercept":
        return None
    return data.column(learner.covariate)


def _prepare(data, learners, config, grid, weights) -> list[LearnerWork]:
    works = []
    for L in learners:
        work = precompute(L, _covariate(data, L), grid.values, weights)
        if L.fixed_lambda:
            if L.lam is None or L.lam < 0:
                raise ConfigError(f"learner '{L.label}' marked fixed_lambda without a valid lam")
            work.lam = float(L.lam)
        else:
            target = config.df_target if L.df_target is None else L.df_target
            work.lam = calibrate_lambda(work, target)
        works.append(work)
    return works


def _boost(data, learners, config, grid, weights, eval_weights=(), mstop=None, verify_every=0):
    """Core loop.  Returns (gammas at mstop, lambdas, trace, eval risk curves)."""
    if not learners:
        raise ConfigError("at least one learner is required")
    y = data.y
    v = grid.values
    kind, link = config.loss, Link(config.link)
    works = _prepare(data, learners, config, grid, weights)
    gammas = [np.zeros(L.size) for L in learners]
    H = np.zeros((grid.n, data.N))
    M = int(config.max_iterations)
    nu = float(config.step_size)
    eval_weights = [np.asarray(w, float) for w in eval_weights]

    risk = np.empty(M + 1)
    eval_risk = np.empty((len(eval_weights), M + 1))
    selected = np.empty(M, dtype=int)
    snapshot = None

    def record(m, cols):
        risk[m] = cols @ weights / grid.n
        for r, we in enumerate(eval_weights):
            eval_risk[r, m] = cols @ we / grid.n

    if mstop == 0:
        snapshot = [g.copy() for g in gammas]
    for m in range(M):
        U, cols = _kernels.gradient_and_loss(H, y, v, kind, link)
        record(m, cols)
        if not np.all(np.isfinite(U)):
            raise NumericError(f"non-finite negative gradient at iteration {m + 1}")
        # largest RSS reduction == smallest RSS; strict ">" keeps the lowest index on ties
        best = None
        for j, work in enumerate(works):
            beta, gain = work.solve_scored(U)
            if best is None or gain > best[0]:
                best = (gain, j, beta)
        _, j, beta = best
        fit = works[j].fitted(beta)
        gammas[j] += nu * beta
        H += nu * fit
        selected[m] = j
        if verify_every and (m + 1) % verify_every == 0:
            full = lattice_from_gammas(works, gammas)
            err = float(np.max(np.abs(full - H)))
            if err > 1e-10:
                raise NumericError(f"lattice drift {err:.3g} at iteration {m + 1}")
        if mstop is not None and m + 1 == mstop:
            snapshot = [g.copy() for g in gammas]
    record(M, _kernels.loss_columns(H, y, v, kind, link))
    if snapshot is None:
        snapshot = gammas
    lams = [w.lam for w in works]
    return snapshot, lams, FitTrace(selected, risk, eval_risk if eval_weights else None), H


def lattice_from_gammas(works: Sequence[LearnerWork], gammas) -> np.ndarray:
    """Recompute the transformation lattice from scratch."""
    H = None
    for w, g in zip(works, gammas):
        F = w.fitted(g)
        H = F if H is None else H + F
    return H


def _check(data: Dataset, learners):
    if data.N == 0:
        raise DataError("empty data")
    for L in learners:
        if L.x_basis.kind != "intercept" and L.covariate not in data.covariates:
            raise DataError(f"learner '{L.label}' refers to missing column '{L.covariate}'")


def fit(
    data: Dataset,
    learners: Sequence[TensorLearner],
    config: BoostConfig,
    grid: Grid | None = None,
    mstop: int | None = None,
    verify_every: int = 0,
) -> tuple[CtmModel, FitTrace]:
    """Run ``config.max_iterations`` boosting updates on ``data``.

    With ``mstop`` set, the returned model holds the coefficients after
    ``mstop`` updates while the trace still covers all iterations.
    """
    _check(data, learners)
    if config.loss == "abe":
        warn_if_degenerate("abe")
    if grid is None:
        grid = make_grid(data.y, config.grid_size, config.grid_margin, config.grid_kind)
    if mstop is not None and not 0 <= mstop <= config.max_iterations:
        raise ConfigError("mstop must lie between 0 and max_iterations")
    gammas, lams, trace, _ = _boost(
        data, learners, config, grid, data.weights, mstop=mstop, verify_every=verify_every
    )
    trace.mstop = config.max_iterations if mstop is None else mstop
    fitted = [
        TensorLearner(
            label=L.label, x_basis=L.x_basis, y_basis=L.y_basis, x_penalty=L.x_penalty,
            y_penalty=L.y_penalty, covariate=L.covariate,
            df_target=config.df_target if L.df_target is None else L.df_target,
            lam=lam, fixed_lambda=L.fixed_lambda, gamma=g,
        )
        for L, lam, g in zip(learners, lams, gammas)
    ]
    meta = {
        "N": int(data.N),
        "iterations": int(trace.mstop),
        "initial_risk": float(trace.risk[0]),
        "final_risk": float(trace.risk[trace.mstop]),
    }
    model = CtmModel(fitted, config.link, config.loss, grid.values, grid.kind, config.to_dict(), meta)
    return model, trace


def resampling_weights(N: int, resampling: Resampling, seed: int, base=None):
    """Fit and evaluation weight pairs for each replication.

    Bootstrap fit weights are multinomial counts with equal cell
    probabilities; evaluation weights flag the observations drawn zero
    times.  k-fold uses a seeded random partition.  ``base`` (observation
    weights) is scaled by ``N`` so uniform ``1/N`` weights reduce to counts.
    """
    scale = np.ones(N) if base is None else np.asarray(base, float) * N
    ss = np.random.SeedSequence(seed)
    pairs = []
    if resampling.kind == "bootstrap":
        for child in ss.spawn(resampling.replications):
            rng = np.random.default_rng(child)
            counts = rng.multinomial(N, np.full(N, 1.0 / N)).astype(float)
            pairs.append((counts * scale, (counts == 0) * scale))
    elif resampling.kind == "kfold":
        rng = np.random.default_rng(ss)
        folds = np.array_split(rng.permutation(N), resampling.replications)
        for idx in folds:
            held = np.zeros(N, dtype=bool)
            held[idx] = True
            pairs.append(((~held) * scale, held * scale))
    else:
        raise ConfigError("resampling is disabled in this config")
    return pairs


def oob_risk_curve(
    data: Dataset,
    learners: Sequence[TensorLearner],
    config: BoostConfig,
    grid: Grid | None = None,
    n_jobs: int | None = None,
) -> np.ndarray:
    """Out-of-sample risk after each of ``0..M`` updates, one row per replication.

    Replications without held-out observations are dropped with a warning.
    """
    _check(data, learners)
    if grid is None:
        grid = make_grid(data.y, config.grid_size, config.grid_margin, config.grid_kind)
    pairs = resampling_weights(data.N, config.resampling, config.seed, data.weights)

    def one(pair):
        w_fit, w_eval = pair
        if not np.any(w_eval > 0):
            return None
        _, _, trace, _ = _boost(data, learners, config, grid, w_fit, eval_weights=[w_eval])
        return trace.eval_risk[0]

    n_jobs = default_threads() if n_jobs is None else n_jobs
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            rows = list(ex.map(one, pairs))
    else:
        rows = [one(p) for p in pairs]
    kept = [r for r in rows if r is not None]
    if len(kept) < len(rows):
        warnings.warn(f"{len(rows) - len(kept)} replication(s) without held-out observations skipped")
    if not kept:
        raise NumericError("no usable resampling replication")
    return np.vstack(kept)


def select_mstop(curves) -> int:
    """Iteration minimising the mean held-out risk; ties go to the smallest."""
    C = np.atleast_2d(np.asarray(curves, dtype=float))
    if C.size == 0:
        raise ConfigError("no risk curves given")
    return int(np.argmin(C.mean(axis=0)))


def fit_tuned(
    data: Dataset,
    learners: Sequence[TensorLearner],
    config: BoostConfig,
    grid: Grid | None = None,
    n_jobs: int | None = None,
) -> tuple[CtmModel, FitTrace]:
    """Fit with the number of iterations chosen by resampling.

    Without resampling this is :func:`fit`.
    """
    if config.resampling.kind == "none":
        return fit(data, learners, config, grid)
    if grid is None:
        grid = make_grid(data.y, config.grid_size, config.grid_margin, config.grid_kind)
    curves = oob_risk_curve(data, learners, config, grid, n_jobs)
    m = select_mstop(curves)
    logger.info("selected mstop=%d of %d", m, config.max_iterations)
    model, trace = fit(data, learners, config, grid, mstop=m)
    trace.oob_curves = curves
    model.metadata["oob_mean_risk"] = float(curves.mean(axis=0)[m])
    return model, trace
