"""Lattice kernels: negative gradients and per-observation integrated loss.

They run once per boosting iteration over the full ``(n_grid, N)`` lattice,
which is the only object in the fit that grows with ``n_grid * N``.  A numba
implementation is used when numba imports and ``CTMBOOST_DISABLE_NUMBA`` is
unset or ``0``; otherwise the vectorised numpy path from :mod:`ctmboost.loss`
is used.  The two paths agree to rounding error.

``gradient_and_loss`` fuses both kernels so the link is evaluated once per
lattice cell.
"""

from __future__ import annotations

import math
import os

import numpy as np

from . import loss as _loss

_DISABLE = os.environ.get("CTMBOOST_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    if _DISABLE:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"

_LOSS_CODES = {k: i for i, k in enumerate(_loss.LOSS_KINDS)}
_LINK_CODES = {k: i for i, k in enumerate(_loss.LINK_KINDS)}


# --------------------------------------------------------------------------
# numpy path


def gradient_lattice_numpy(H, y, grid, kind, link):
    ind = _loss.indicator_lattice(y, grid)
    return _loss.negative_gradient(kind, link, ind, H)


def loss_columns_numpy(H, y, grid, kind, link):
    ind = _loss.indicator_lattice(y, grid)
    return _loss.loss_value(kind, link, ind, H).sum(axis=0)


def gradient_and_loss_numpy(H, y, grid, kind, link):
    ind = _loss.indicator_lattice(y, grid)
    return _loss.negative_gradient(kind, link, ind, H), _loss.loss_value(kind, link, ind, H).sum(axis=0)


# --------------------------------------------------------------------------
# numba path

if HAVE_NUMBA:
    _INV_SQRT2 = 1.0 / math.sqrt(2.0)
    _INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
    _EPS = _loss.PROB_EPS

    @njit(cache=True, fastmath=False)
    def _cdf_pdf(h, link):
        if link == 0:
            return 0.5 * math.erfc(-h * _INV_SQRT2), math.exp(-0.5 * h * h) * _INV_SQRT_2PI
        if link == 1:
            if h >= 0.0:
                p = 1.0 / (1.0 + math.exp(-h))
            else:
                e = math.exp(h)
                p = e / (1.0 + e)
            return p, p * (1.0 - p)
        return h, 1.0

    @njit(cache=True)
    def _gradient_lattice_nb(H, y, grid, loss, link):
        n, N = H.shape
        U = np.empty((n, N))
        for k in range(n):
            g = grid[k]
            for i in range(N):
                ind = 1.0 if y[i] <= g else 0.0
                p, f = _cdf_pdf(H[k, i], link)
                if loss == 1:
                    U[k, i] = (ind - p) * f
                elif loss == 2:
                    U[k, i] = (2.0 * ind - 1.0) * f
                else:
                    p = min(max(p, _EPS), 1.0 - _EPS)
                    U[k, i] = (ind / p - (1.0 - ind) / (1.0 - p)) * f
        return U

    @njit(cache=True)
    def _loss_columns_nb(H, y, grid, loss, link):
        n, N = H.shape
        out = np.zeros(N)
        for k in range(n):
            g = grid[k]
            for i in range(N):
                ind = 1.0 if y[i] <= g else 0.0
                p, _ = _cdf_pdf(H[k, i], link)
                if loss == 1:
                    r = 0.5 * (ind - p) * (ind - p)
                elif loss == 2:
                    r = abs(ind - p)
                else:
                    p = min(max(p, _EPS), 1.0 - _EPS)
                    r = -(ind * math.log(p) + (1.0 - ind) * math.log1p(-p))
                out[i] += r
        return out

    @njit(cache=True)
    def _gradient_and_loss_nb(H, y, grid, loss, link):
        n, N = H.shape
        U = np.empty((n, N))
        out = np.zeros(N)
        for k in range(n):
            g = grid[k]
            for i in range(N):
                ind = 1.0 if y[i] <= g else 0.0
                p, f = _cdf_pdf(H[k, i], link)
                if loss == 1:
                    U[k, i] = (ind - p) * f
                    out[i] += 0.5 * (ind - p) * (ind - p)
                elif loss == 2:
                    U[k, i] = (2.0 * ind - 1.0) * f
                    out[i] += abs(ind - p)
                else:
                    p = min(max(p, _EPS), 1.0 - _EPS)
                    # only one of the two terms is live in each cell
                    if ind == 1.0:
                        U[k, i] = f / p
                        out[i] -= math.log(p)
                    else:
                        U[k, i] = -f / (1.0 - p)
                        out[i] -= math.log1p(-p)
        return U, out

    def _args(H, y, grid, kind, link):
        return (
            np.ascontiguousarray(H, dtype=np.float64),
            np.ascontiguousarray(y, dtype=np.float64),
            np.ascontiguousarray(grid, dtype=np.float64),
            _LOSS_CODES[kind],
            _LINK_CODES[_loss.as_link(link).kind],
        )

    def gradient_and_loss_numba(H, y, grid, kind, link):
        return _gradient_and_loss_nb(*_args(H, y, grid, kind, link))

    def gradient_lattice_numba(H, y, grid, kind, link):
        return _gradient_lattice_nb(*_args(H, y, grid, kind, link))

    def loss_columns_numba(H, y, grid, kind, link):
        return _loss_columns_nb(*_args(H, y, grid, kind, link))

    gradient_lattice = gradient_lattice_numba
    loss_columns = loss_columns_numba
    gradient_and_loss = gradient_and_loss_numba
else:
    gradient_lattice = gradient_lattice_numpy
    loss_columns = loss_columns_numpy
    gradient_and_loss = gradient_and_loss_numpy


def lattice_risk(H, y, grid, weights, kind, link) -> float:
    """Weighted integrated risk of a lattice, via :func:`loss_columns`."""
    return float(loss_columns(H, y, grid, kind, link) @ np.asarray(weights, float) / len(grid))
