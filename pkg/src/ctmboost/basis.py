"""Marginal bases and roughness penalties.

Two kinds of marginal bases are combined into tensor-product learners: one
along the response grid and one along an explanatory variable.  Splines use
equidistant knots over a declared interval with the knot sequence extended
``degree`` spans past each boundary, so every basis function is a shifted
copy of the same uniform B-spline.  Points outside the declared interval are
rejected rather than extrapolated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import BSpline

from .errors import ConfigError, DomainError, LevelError, SizeError, StructureError

BASIS_KINDS = ("intercept", "linear", "bspline", "cyclic_bspline", "dummy")
PENALTY_KINDS = ("none", "difference", "adjacency")

# relative slack for points that miss a domain edge by rounding only
_EDGE_SLACK = 1e-12


@dataclass(frozen=True)
class BasisSpec:
    """Declarative description of one marginal basis.

    ``domain`` is a closed interval ``(lo, hi)`` for the numeric kinds and is
    ignored by ``intercept`` and ``dummy``; ``levels`` orders the categories of
    a ``dummy`` basis.
    """

    kind: str
    degree: int = 3
    num_interior_knots: int = 20
    domain: tuple[float, float] | None = None
    levels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in BASIS_KINDS:
            raise ConfigError(f"unknown basis kind {self.kind!r}; expected one of {BASIS_KINDS}")
        if self.kind in ("bspline", "cyclic_bspline"):
            if int(self.degree) != self.degree or self.degree < 0:
                raise ConfigError(f"degree must be a non-negative integer, got {self.degree!r}")
            if int(self.num_interior_knots) != self.num_interior_knots or self.num_interior_knots < 1:
                raise ConfigError("num_interior_knots must be an integer >= 1")
            object.__setattr__(self, "degree", int(self.degree))
            object.__setattr__(self, "num_interior_knots", int(self.num_interior_knots))
            if self.kind == "cyclic_bspline" and self.num_interior_knots <= self.degree:
                raise ConfigError("cyclic_bspline needs num_interior_knots > degree")
        if self.kind in ("linear", "bspline", "cyclic_bspline"):
            if self.domain is None:
                raise ConfigError(f"{self.kind} basis needs a domain")
            lo, hi = (float(v) for v in self.domain)
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ConfigError(f"invalid domain {self.domain!r}")
            object.__setattr__(self, "domain", (lo, hi))
        if self.kind == "dummy":
            if not self.levels:
                raise ConfigError("dummy basis needs a non-empty level list")
            levels = tuple(str(v) for v in self.levels)
            if len(set(levels)) != len(levels):
                raise ConfigError("dummy levels must be distinct")
            object.__setattr__(self, "levels", levels)

    @property
    def size(self) -> int:
        """Number of basis functions K."""
        if self.kind == "intercept":
            return 1
        if self.kind == "linear":
            return 2
        if self.kind == "bspline":
            return self.num_interior_knots + self.degree + 1
        if self.kind == "cyclic_bspline":
            return self.num_interior_knots
        return len(self.levels)

    @property
    def is_numeric(self) -> bool:
        return self.kind != "dummy"

    def knots(self) -> np.ndarray:
        """Full extended knot vector of a spline basis."""
        lo, hi = self.domain
        d = self.degree
        if self.kind == "bspline":
            spans = self.num_interior_knots + 1
        elif self.kind == "cyclic_bspline":
            spans = self.num_interior_knots
        else:
            raise ConfigError(f"{self.kind} basis has no knots")
        step = (hi - lo) / spans
        t = lo + step * np.arange(-d, spans + d + 1)
        # exact endpoints keep the base interval of the design equal to [lo, hi]
        t[d] = lo
        t[d + spans] = hi
        return t

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind in ("bspline", "cyclic_bspline"):
            out["degree"] = self.degree
            out["num_interior_knots"] = self.num_interior_knots
        if self.domain is not None and self.kind in ("linear", "bspline", "cyclic_bspline"):
            out["domain"] = list(self.domain)
        if self.kind == "dummy":
            out["levels"] = list(self.levels)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSpec":
        d = dict(d)
        if "domain" in d and d["domain"] is not None:
            d["domain"] = tuple(d["domain"])
        if "levels" in d and d["levels"] is not None:
            d["levels"] = tuple(d["levels"])
        unknown = set(d) - {"kind", "degree", "num_interior_knots", "domain", "levels"}
        if unknown:
            raise ConfigError(f"unknown basis fields {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class PenaltySpec:
    """Roughness penalty attached to a marginal basis.

    ``neighbors`` is only used by the adjacency kind: ``neighbors[k]`` lists
    the indices of levels adjacent to level ``k``.
    """

    kind: str = "none"
    order: int = 2
    neighbors: tuple[tuple[int, ...], ...] | None = field(default=None)

    def __post_init__(self):
        if self.kind not in PENALTY_KINDS:
            raise ConfigError(f"unknown penalty kind {self.kind!r}; expected one of {PENALTY_KINDS}")
        if self.kind == "difference" and self.order not in (1, 2):
            raise ConfigError(f"difference order must be 1 or 2, got {self.order!r}")
        if self.kind == "adjacency":
            if self.neighbors is None:
                raise ConfigError("adjacency penalty needs a neighbour list")
            nb = tuple(tuple(int(j) for j in row) for row in self.neighbors)
            object.__setattr__(self, "neighbors", nb)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "difference":
            out["order"] = self.order
        if self.kind == "adjacency":
            out["neighbors"] = [list(r) for r in self.neighbors]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "PenaltySpec":
        d = dict(d)
        unknown = set(d) - {"kind", "order", "neighbors"}
        if unknown:
            raise ConfigError(f"unknown penalty fields {sorted(unknown)}")
        if d.get("neighbors") is not None:
            d["neighbors"] = tuple(tuple(r) for r in d["neighbors"])
        return cls(**d)


@dataclass(frozen=True)
class EvaluatedBasis:
    matrix: np.ndarray
    points: np.ndarray

    @property
    def shape(self):
        return self.matrix.shape


def _check_interval(x: np.ndarray, lo: float, hi: float, name=None) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        bad = x[~np.isfinite(x)][0]
        raise DomainError(float(bad), lo, hi, name)
    slack = _EDGE_SLACK * (hi - lo)
    out = (x < lo - slack) | (x > hi + slack)
    if np.any(out):
        raise DomainError(float(x[out][0]), lo, hi, name)
    return np.clip(x, lo, hi)


def evaluate_basis(spec: BasisSpec, points, name: str | None = None) -> EvaluatedBasis:
    """Evaluate ``spec`` at ``points``, one row per point.

    Raises
    ------
    DomainError
        A numeric point lies outside ``spec.domain``.
    LevelError
        A dummy point is not one of ``spec.levels``.
    """
    if spec.kind == "dummy":
        pts = np.asarray(points, dtype=object).ravel()
        index = {lev: k for k, lev in enumerate(spec.levels)}
        B = np.zeros((pts.size, spec.size))
        for r, p in enumerate(pts):
            k = index.get(str(p))
            if k is None:
                raise LevelError(p, name)
            B[r, k] = 1.0
        return EvaluatedBasis(B, pts)

    x = np.asarray(points, dtype=float).ravel()
    if spec.kind == "intercept":
        return EvaluatedBasis(np.ones((x.size, 1)), x)
    lo, hi = spec.domain
    x = _check_interval(x, lo, hi, name)
    if spec.kind == "linear":
        return EvaluatedBasis(np.column_stack([np.ones_like(x), x]), x)

    B = BSpline.design_matrix(x, spec.knots(), spec.degree).toarray()
    if spec.kind == "cyclic_bspline":
        K = spec.size
        wrapped = B[:, :K].copy()
        wrapped[:, : B.shape[1] - K] += B[:, K:]
        B = wrapped
    return EvaluatedBasis(B, x)


def difference_matrix(K: int, order: int, cyclic: bool = False) -> np.ndarray:
    """Order-``order`` finite-difference operator on ``K`` coefficients.

    The open version has ``K - order`` rows; the cyclic version has ``K`` rows
    with column indices taken modulo ``K``.
    """
    if order < 1 or K <= order:
        raise SizeError(f"difference matrix needs K > order >= 1, got K={K}, order={order}")
    stencil = np.diff(np.eye(order + 1), n=order, axis=0)[0]
    rows = K if cyclic else K - order
    D = np.zeros((rows, K))
    for r in range(rows):
        for s, c in enumerate(stencil):
            D[r, (r + s) % K] += c
    return D


def penalty_matrix(spec: PenaltySpec, K: int, cyclic: bool = False) -> np.ndarray:
    """Symmetric PSD penalty matrix of size ``K x K``."""
    if spec.kind == "none":
        return np.zeros((K, K))
    if spec.kind == "difference":
        D = difference_matrix(K, spec.order, cyclic=cyclic)
        return D.T @ D
    nb = spec.neighbors
    if len(nb) != K:
        raise StructureError(f"neighbour list has {len(nb)} entries, basis has {K} levels")
    P = np.zeros((K, K))
    for k, row in enumerate(nb):
        for j in row:
            if not 0 <= j < K or j == k:
                raise StructureError(f"invalid neighbour {j} of level {k}")
            if k not in nb[j]:
                raise StructureError(f"neighbour list not symmetric: {k}->{j} without {j}->{k}")
            P[k, j] = -1.0
        P[k, k] = len(set(row))
    return P


def marginal_penalty(basis: BasisSpec, penalty: PenaltySpec) -> np.ndarray:
    """Penalty matrix for a basis/penalty pair, validating the combination."""
    if basis.kind == "dummy" and penalty.kind == "difference":
        raise ConfigError("difference penalties are not defined across unordered levels")
    if penalty.kind == "adjacency" and basis.kind != "dummy":
        raise ConfigError("adjacency penalties apply to dummy bases only")
    return penalty_matrix(penalty, basis.size, cyclic=basis.kind == "cyclic_bspline")


def neighbors_from_levels(levels: Sequence[str], mapping: dict) -> tuple[tuple[int, ...], ...]:
    """Translate a level-name neighbour mapping into index form."""
    index = {str(lev): k for k, lev in enumerate(levels)}
    out = [[] for _ in levels]
    for a, bs in mapping.items():
        if str(a) not in index:
            raise StructureError(f"neighbour list names unknown level {a!r}")
        for b in bs:
            if str(b) not in index:
                raise StructureError(f"neighbour list names unknown level {b!r}")
            out[index[str(a)]].append(index[str(b)])
    return tuple(tuple(r) for r in out)
