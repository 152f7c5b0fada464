"""Link distributions, binary-event losses and the integrated empirical risk.

A fitted transformation ``h`` is turned into a probability by a link CDF
``F``.  The loss of that probability for the event ``Y <= v`` is one of

* ``bin``: binomial negative log-likelihood,
* ``sqe``: half the squared error (Brier score),
* ``abe``: absolute error.

Probabilities are clamped to ``[PROB_EPS, 1 - PROB_EPS]`` wherever they are
logged or divided by.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ConfigError, DimensionError

PROB_EPS = 1e-10

LOSS_KINDS = ("bin", "sqe", "abe")
LINK_KINDS = ("probit", "logit", "identity")


class DegenerateLossWarning(UserWarning):
    """The absolute-error loss has no finite population minimiser."""


_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class Link:
    """Link distribution ``F`` with density and quantile function.

    The identity link uses ``F(h) = h`` with unit density everywhere; its CDF
    is clamped to ``[0, 1]`` only by :meth:`prob`, which is what model
    evaluation calls.
    """

    kind: str

    def __post_init__(self):
        if self.kind not in LINK_KINDS:
            raise ConfigError(f"unknown link {self.kind!r}; expected one of {LINK_KINDS}")

    @property
    def code(self) -> int:
        return LINK_KINDS.index(self.kind)

    def cdf(self, h):
        h = np.asarray(h, dtype=float)
        if self.kind == "probit":
            return special.ndtr(h)
        if self.kind == "logit":
            return special.expit(h)
        return h.copy() if h.ndim else h

    def pdf(self, h):
        h = np.asarray(h, dtype=float)
        if self.kind == "probit":
            return np.exp(-0.5 * h * h) / _SQRT_2PI
        if self.kind == "logit":
            p = special.expit(h)
            return p * (1.0 - p)
        return np.ones_like(h)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "probit":
            return special.ndtri(u)
        if self.kind == "logit":
            return special.logit(u)
        return u.copy() if u.ndim else u

    def prob(self, h):
        """CDF value clamped to the unit interval."""
        return np.clip(self.cdf(h), 0.0, 1.0)


def as_link(link) -> Link:
    return link if isinstance(link, Link) else Link(str(link))


def check_loss_kind(kind: str) -> str:
    if kind not in LOSS_KINDS:
        raise ConfigError(f"unknown loss {kind!r}; expected one of {LOSS_KINDS}")
    return kind


def warn_if_degenerate(kind: str) -> None:
    if kind == "abe":
        warnings.warn(
            "absolute-error loss is minimised by h = -inf/+inf pointwise; "
            "fits rely entirely on early stopping",
            DegenerateLossWarning,
            stacklevel=3,
        )


def loss_value(kind: str, link, indicator, h):
    """Loss of ``F(h)`` for the binary outcome ``indicator``."""
    link = as_link(link)
    check_loss_kind(kind)
    ind = np.asarray(indicator, dtype=float)
    p = link.cdf(h)
    if kind == "bin":
        p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
        return -(ind * np.log(p) + (1.0 - ind) * np.log1p(-p))
    if kind == "sqe":
        return 0.5 * (ind - p) ** 2
    return np.abs(ind - p)


def negative_gradient(kind: str, link, indicator, h):
    """Negative derivative of :func:`loss_value` with respect to ``h``."""
    link = as_link(link)
    check_loss_kind(kind)
    ind = np.asarray(indicator, dtype=float)
    f = link.pdf(h)
    if kind == "sqe":
        return (ind - link.cdf(h)) * f
    if kind == "abe":
        return (2.0 * ind - 1.0) * f
    p = np.clip(link.cdf(h), PROB_EPS, 1.0 - PROB_EPS)
    return (ind / p - (1.0 - ind) / (1.0 - p)) * f


def indicator_lattice(y, grid) -> np.ndarray:
    """``I(y_i <= grid_k)`` laid out as an ``(n_grid, N)`` array."""
    return (np.asarray(y, float)[None, :] <= np.asarray(grid, float)[:, None]).astype(float)


def empirical_risk(predictions, y, grid, weights, kind: str, link) -> float:
    """Weighted integrated risk over a response grid.

    Parameters
    ----------
    predictions : ndarray, shape (n_grid, N)
        Transformation values ``h(grid_k | x_i)``.
    y, weights : ndarray, shape (N,)
    grid : ndarray, shape (n_grid,)

    Returns
    -------
    float
        ``n_grid**-1 * sum_i sum_k w_i * rho(I(y_i <= grid_k), h_ki)``
    """
    H = np.asarray(predictions, dtype=float)
    y = np.asarray(y, dtype=float)
    grid = np.asarray(grid, dtype=float)
    w = np.asarray(weights, dtype=float)
    if H.shape != (grid.size, y.size) or w.shape != y.shape:
        raise DimensionError(
            f"prediction lattice {H.shape} does not match grid {grid.size} x data {y.size} "
            f"(weights {w.shape})"
        )
    rho = loss_value(kind, link, indicator_lattice(y, grid), H)
    return float((rho @ w).sum() / grid.size)
