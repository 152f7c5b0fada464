"""Tensor-product base-learners on the (grid x observation) lattice.

A learner pairs a covariate basis ``b_x`` (``K_x`` functions) with a response
basis ``b_0`` (``K_0`` functions) and represents

    h_j(v | x) = (b_x(x) kron b_0(v)) @ gamma,

with ``gamma`` ordered covariate-index major: entry ``(k1, k0)`` sits at
``k1 * K_0 + k0``.  Fitting to a gradient lattice ``U`` of shape
``(n_grid, N)`` only ever touches the marginal design matrices; the
``n_grid * N`` by ``K_x * K_0`` expanded design is never built.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg
from scipy.linalg.blas import dtrsv

from .basis import BasisSpec, PenaltySpec, evaluate_basis, marginal_penalty
from .errors import CalibrationError, DimensionError, SolveError

LOG10_LAMBDA_RANGE = (-20.0, 20.0)
DF_TOL = 1e-6
DEFAULT_DF = 4.0
NULL_TOL = 1e-9


@dataclass
class TensorLearner:
    """One partial transformation function.

    ``covariate`` names the data column feeding ``x_basis``; it is ``None``
    for an intercept covariate basis.  ``lam`` is either fixed by the user
    (``fixed_lambda=True``) or filled in by calibration against
    ``df_target``; a ``df_target`` of ``None`` defers to the fit config.
    """

    label: str
    x_basis: BasisSpec
    y_basis: BasisSpec
    x_penalty: PenaltySpec = field(default_factory=PenaltySpec)
    y_penalty: PenaltySpec = field(default_factory=PenaltySpec)
    covariate: str | None = None
    df_target: float | None = None
    lam: float | None = None
    fixed_lambda: bool = False
    gamma: np.ndarray | None = None

    def __post_init__(self):
        if self.gamma is None:
            self.gamma = np.zeros(self.size)
        else:
            self.gamma = np.asarray(self.gamma, dtype=float).ravel()
            if self.gamma.size != self.size:
                raise DimensionError(
                    f"learner '{self.label}': gamma has {self.gamma.size} entries, expected {self.size}"
                )
        if self.x_basis.kind != "intercept" and self.covariate is None:
            raise DimensionError(f"learner '{self.label}' needs a covariate column")

    @property
    def shape(self) -> tuple[int, int]:
        return self.x_basis.size, self.y_basis.size

    @property
    def size(self) -> int:
        return self.x_basis.size * self.y_basis.size

    def coef_matrix(self, beta=None) -> np.ndarray:
        """``(K_x, K_0)`` view of ``beta`` (defaults to ``gamma``)."""
        b = self.gamma if beta is None else np.asarray(beta, float)
        return b.reshape(self.shape)

    def penalties(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            marginal_penalty(self.x_basis, self.x_penalty),
            marginal_penalty(self.y_basis, self.y_penalty),
        )

    def x_design(self, x) -> np.ndarray:
        if self.x_basis.kind == "intercept":
            n = np.size(x) if x is not None else 1
            return np.ones((max(n, 1), 1))
        return evaluate_basis(self.x_basis, x, name=self.covariate).matrix

    def y_design(self, v) -> np.ndarray:
        return evaluate_basis(self.y_basis, v, name="response").matrix

    def with_gamma(self, gamma) -> "TensorLearner":
        return replace(self, gamma=np.array(gamma, dtype=float))


def combined_penalty(P_x: np.ndarray, P_0: np.ndarray) -> np.ndarray:
    """Unscaled tensor penalty ``P_x kron I + I kron P_0``."""
    return np.kron(P_x, np.eye(P_0.shape[0])) + np.kron(np.eye(P_x.shape[0]), P_0)


class LearnerWork:
    """Precomputed marginal quantities of one learner for one weight vector.

    Holds ``B_x`` (N x K_x), ``B_0`` (n_grid x K_0), the weighted cross
    products ``A_x = B_x' W B_x`` and ``A_0 = B_0' B_0``, the tensor penalty,
    and a factorization cache keyed by the smoothing parameter.
    """

    def __init__(self, learner: TensorLearner, B_x, B_0, weights):
        self.learner = learner
        self.B_x = np.ascontiguousarray(B_x, dtype=float)
        self.B_0 = np.ascontiguousarray(B_0, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        if self.B_x.shape[0] != self.weights.size:
            raise DimensionError("covariate design and weight vector disagree in length")
        self.A_x = self.B_x.T @ (self.weights[:, None] * self.B_x)
        self.A_0 = self.B_0.T @ self.B_0
        P_x, P_0 = learner.penalties()
        self.P_x, self.P_0 = P_x, P_0
        self.penalty = combined_penalty(P_x, P_0)
        self.lam = learner.lam
        self._gram = None
        self._spectrum = None
        self._factor = {}

    @property
    def gram(self) -> np.ndarray:
        """``A_x kron A_0``, the normal matrix of the expanded design."""
        if self._gram is None:
            self._gram = np.kron(self.A_x, self.A_0)
        return self._gram

    def _generalized_spectrum(self):
        # A v = theta (A + s P) v with s balancing the two traces; then
        # trace((A + lam P)^-1 A) = sum theta / (theta + (lam / s) (1 - theta))
        if self._spectrum is None:
            A = self.gram
            P = self.penalty
            tp = np.trace(P)
            s = np.trace(A) / tp if tp > 0 else 1.0
            M = A + s * P
            jitter = 0.0
            for _ in range(8):
                try:
                    theta, V = linalg.eigh(A, M + jitter * np.eye(M.shape[0]))
                    break
                except linalg.LinAlgError:
                    jitter = max(jitter * 100, 1e-12 * np.trace(M) / M.shape[0])
            else:
                raise SolveError(f"learner '{self.learner.label}': cannot diagonalize normal equations")
            theta = np.clip(theta, 0.0, 1.0)
            # penalty null space has theta == 1 exactly; rounding leaves 1 - eps,
            # which (lam / s) * (1 - theta) would inflate at large lam
            theta[1.0 - theta <= NULL_TOL] = 1.0
            self._spectrum = (theta, V, s)
        return self._spectrum

    def degrees_of_freedom(self, lam: float) -> float:
        """Trace of the ridge hat matrix at smoothing parameter ``lam``."""
        theta, _, s = self._generalized_spectrum()
        if lam == 0:
            return float(np.count_nonzero(theta > 1e-12))
        denom = theta + (lam / s) * (1.0 - theta)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(denom > 0, theta / denom, 0.0)
        return float(r.sum())

    def _factorize(self, lam):
        key = float(lam)
        if key not in self._factor:
            S = self.gram + key * self.penalty
            try:
                self._factor[key] = ("chol", linalg.cho_factor(S, lower=False, check_finite=False))
            except linalg.LinAlgError:
                if key == 0:
                    raise SolveError(
                        f"learner '{self.learner.label}': singular normal equations with "
                        "lambda = 0; use a positive smoothing parameter"
                    ) from None
                theta, V, s = self._generalized_spectrum()
                self._factor[key] = ("eig", (V, 1.0 / (theta + (key / s) * (1.0 - theta))))
        return self._factor[key]

    def rhs(self, U: np.ndarray) -> np.ndarray:
        """``vec(B_0' U W B_x)`` in gamma ordering."""
        R = self.B_0.T @ (U * self.weights[None, :]) @ self.B_x
        return np.ascontiguousarray(R.T).ravel()

    def solve(self, U: np.ndarray, lam: float | None = None) -> np.ndarray:
        lam = self.lam if lam is None else lam
        if lam is None:
            raise SolveError(f"learner '{self.learner.label}' has no smoothing parameter")
        U = np.asarray(U, dtype=float)
        if U.shape != (self.B_0.shape[0], self.B_x.shape[0]):
            raise DimensionError(f"gradient lattice {U.shape} does not match "
                                 f"({self.B_0.shape[0]}, {self.B_x.shape[0]})")
        return self._solve_rhs(self.rhs(U), lam)

    def _solve_rhs(self, b: np.ndarray, lam: float) -> np.ndarray:
        kind, fac = self._factorize(lam)
        if kind == "chol":
            # S = R'R with R upper triangular
            R = fac[0]
            return dtrsv(R, dtrsv(R, b, trans=1))
        V, d = fac
        return V @ (d * (V.T @ b))

    def solve_scored(self, U: np.ndarray) -> tuple[np.ndarray, float]:
        """Solve and return ``(beta, ||U||_w^2 - rss)``.

        The reduction in weighted RSS is ``2 beta'b - beta'(A_x kron A_0)beta``,
        which avoids forming the fitted lattice for losing candidates.
        """
        if self.lam is None:
            raise SolveError(f"learner '{self.learner.label}' has no smoothing parameter")
        b = self.rhs(np.asarray(U, dtype=float))
        beta = self._solve_rhs(b, self.lam)
        C = beta.reshape(self.learner.shape).T
        quad = float(np.sum(C * (self.A_0 @ C @ self.A_x)))
        return beta, 2.0 * float(beta @ b) - quad

    def fitted(self, beta) -> np.ndarray:
        """Lattice ``B_0 mat(beta) B_x'`` of shape ``(n_grid, N)``."""
        G = np.asarray(beta, float).reshape(self.learner.shape)
        return (self.B_0 @ G.T) @ self.B_x.T

    def rss(self, beta, U) -> float:
        U = np.asarray(U, dtype=float)
        if U.shape != (self.B_0.shape[0], self.B_x.shape[0]):
            raise DimensionError("gradient lattice shape mismatch")
        R = U - self.fitted(beta)
        return float(((R * R) @ self.weights).sum())


def precompute(learner: TensorLearner, x, grid, weights) -> LearnerWork:
    """Evaluate both marginal designs for the training data and grid.

    ``x`` is the learner's covariate column (ignored for intercept bases).
    """
    weights = np.asarray(weights, dtype=float)
    if learner.x_basis.kind == "intercept":
        B_x = np.ones((weights.size, 1))
    else:
        B_x = learner.x_design(x)
    B_0 = learner.y_design(grid)
    return LearnerWork(learner, B_x, B_0, weights)


def calibrate_lambda(work: LearnerWork, df_target: float, tol: float = DF_TOL) -> float:
    """Smoothing parameter giving the requested degrees of freedom.

    Bisection on ``log10(lambda)`` over ``LOG10_LAMBDA_RANGE``; degrees of
    freedom decrease monotonically in ``lambda``.

    Raises
    ------
    CalibrationError
        ``df_target`` lies outside the attainable range.
    """
    lo, hi = LOG10_LAMBDA_RANGE
    df_lo = work.degrees_of_freedom(10.0**hi)  # smallest attainable
    df_hi = work.degrees_of_freedom(10.0**lo)  # largest attainable
    if df_target > df_hi + tol or df_target < df_lo - tol:
        raise CalibrationError(df_target, df_lo, df_hi)
    # a target on the boundary (e.g. the null-space dimension) is only reached
    # as lam -> inf or 0; aim half a tolerance inside so lam stays moderate
    goal = min(max(df_target, df_lo + 0.5 * tol), df_hi - 0.5 * tol)
    a, b = lo, hi
    mid = 0.5 * (a + b)
    for _ in range(200):
        mid = 0.5 * (a + b)
        d = work.degrees_of_freedom(10.0**mid)
        if abs(d - goal) <= tol * 1e-3 or b - a < 1e-13:
            break
        if d > goal:
            a = mid
        else:
            b = mid
    lam = 10.0**mid
    if abs(work.degrees_of_freedom(lam) - df_target) > tol:
        raise CalibrationError(df_target, df_lo, df_hi)
    return lam


def ridge_fit(work: LearnerWork, U, lam: float | None = None) -> np.ndarray:
    """Penalized least-squares coefficients for gradient lattice ``U``.

    Solves ``(A_x kron A_0 + lam P) beta = vec(B_0' U W B_x)``.
    """
    return work.solve(U, lam)


def learner_rss(work: LearnerWork, beta, U) -> float:
    """Weighted residual sum of squares of ``beta`` on lattice ``U``."""
    return work.rss(beta, U)


def predict_increment(learner: TensorLearner, beta, x, v) -> np.ndarray:
    """Evaluate ``(b_x(x) kron b_0(v)) @ beta`` pointwise over paired ``x``, ``v``."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if learner.x_basis.kind == "intercept":
        Bx = np.ones((v.size, 1))
    else:
        x = np.atleast_1d(np.asarray(x) if learner.x_basis.kind == "dummy" else np.asarray(x, float))
        Bx = learner.x_design(x)
        if Bx.shape[0] == 1 and v.size > 1:
            Bx = np.repeat(Bx, v.size, axis=0)
        elif v.size == 1 and Bx.shape[0] > 1:
            v = np.repeat(v, Bx.shape[0])
    B0 = learner.y_design(v)
    if Bx.shape[0] != B0.shape[0]:
        raise DimensionError("x and v must have equal length or length 1")
    G = np.asarray(beta, float).reshape(learner.shape)
    return np.einsum("rk,kl,rl->r", Bx, G, B0)
