"""
Exhaustive active-set solver for small separable box-plus-balance QPs.

Used as an independent reference for the bisection kernels: every
assignment of each variable to {lower, upper, free} is enumerated, the
equality-constrained stationary point on that face is computed in closed
form, and the best primal-feasible candidate wins. Cost is ``3**n`` per
column, so keep ``n <= 8``.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

AT_LOWER, AT_UPPER, FREE = 0, 1, 2


@lru_cache(maxsize=None)
def _patterns(n):
    pats = np.array(list(itertools.product((AT_LOWER, AT_UPPER, FREE), repeat=n)),
                    dtype=np.int8)
    pats.setflags(write=False)
    return pats


def solve_column(weight, center, lower, upper, target, tol=1e-12):
    """
    Minimize ``sum_i w_i (x_i - c_i)^2`` over ``lower <= x <= upper``, ``sum x = target``.

    Returns the minimizer as a 1-d array. Raises ValueError if no pattern
    yields a feasible point.
    """
    w = np.asarray(weight, dtype=float)
    c = np.asarray(center, dtype=float)
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    n = c.shape[0]
    pats = _patterns(n)
    is_lo, is_hi, is_free = pats == AT_LOWER, pats == AT_UPPER, pats == FREE

    fixed_sum = (is_lo * lo).sum(axis=1) + (is_hi * hi).sum(axis=1)
    inv = 1.0 / (2.0 * w)
    free_inv = (is_free * inv).sum(axis=1)
    free_c = (is_free * c).sum(axis=1)
    has_free = free_inv > 0
    # stationarity 2 w_i (x_i - c_i) + mu = 0 on the free set
    mu = np.where(has_free, (free_c - (target - fixed_sum)) / np.where(has_free, free_inv, 1.0), 0.0)
    x = np.where(is_lo, lo, np.where(is_hi, hi, c - mu[:, None] * inv))

    scale = max(1.0, abs(target), np.abs(lo).max(initial=0.0), np.abs(hi).max(initial=0.0))
    feasible = np.all((x >= lo - tol * scale) & (x <= hi + tol * scale), axis=1)
    feasible &= np.abs(x.sum(axis=1) - target) <= tol * scale * max(1, n)
    if not feasible.any():
        raise ValueError("no feasible face found")
    obj = np.where(feasible, (w * (x - c) ** 2).sum(axis=1), np.inf)
    best = int(np.argmin(obj))
    return np.clip(x[best], lo, hi)


def project(v, lower, upper, target):
    """Column-wise brute-force Euclidean projection of an N x R matrix."""
    v = np.atleast_2d(np.asarray(v, dtype=float))
    lower = np.broadcast_to(np.asarray(lower, dtype=float), v.shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), v.shape)
    target = np.atleast_1d(target)
    out = np.empty_like(v)
    ones = np.ones(v.shape[0])
    for j in range(v.shape[1]):
        out[:, j] = solve_column(ones, v[:, j], lower[:, j], upper[:, j], target[j])
    return out


def dispatch(curvature, target, lower, upper, supply):
    """Brute-force minimizer of ``sum a (p - d)^2`` under box and balance."""
    a = np.atleast_2d(np.asarray(curvature, dtype=float))
    d = np.atleast_2d(np.asarray(target, dtype=float))
    out = np.empty_like(d)
    supply = np.atleast_1d(supply)
    for j in range(d.shape[1]):
        out[:, j] = solve_column(a[:, j], d[:, j], lower[:, j], upper[:, j], supply[j])
    return out
