"""
Euclidean projection onto box-plus-balance polyhedra.

The set ``{q : lower <= q <= upper, sum_i q_i = target}`` splits into
independent columns, one per resource coordinate. Each column is solved by
bisection on a scalar shift ``mu`` such that ``sum_i clip(v_i - mu)`` hits
the target; the clipped sum is nonincreasing in ``mu`` so bisection always
converges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RESIDUAL_RTOL = 1e-12
WIDTH_RTOL = 1e-15
FEASIBILITY_RTOL = 1e-12
MAX_ITER = 2000


class InfeasibleProjectionError(ValueError):
    """The target lies outside ``[sum(lower), sum(upper)]``."""


def project_box(v, lower, upper):
    """Clamp `v` componentwise into ``[lower, upper]``."""
    v = np.asarray(v, dtype=float)
    lower = np.broadcast_to(np.asarray(lower, dtype=float), v.shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), v.shape)
    if np.any(lower > upper):
        raise ValueError("box bounds out of order: lower > upper")
    return np.minimum(np.maximum(v, lower), upper)


def balance_shift(alpha, beta, lower, upper, target):
    r"""
    Find the shift that balances a clipped affine response.

    Solves for the scalar :math:`\mu` with

        .. math:: \sum_i \mathrm{clip}(\alpha_i - \beta_i \mu,\ l_i,\ u_i) = t

    where every :math:`\beta_i > 0`. With :math:`\beta = 1` this is the
    projection of :math:`\alpha` onto the box-plus-sum set; with
    :math:`\alpha = d`, :math:`\beta = 1/(2a)` it is the dual of a separable
    quadratic dispatch column.

    Parameters
    ----------
    alpha, beta, lower, upper : ndarray
        1-d arrays of equal length.
    target : float
        Required sum.

    Returns
    -------
    x : ndarray
        The balanced, clipped response.
    mu : float
        The shift.
    iterations : int
        Bisection steps taken.

    Raises
    ------
    InfeasibleProjectionError
        If `target` falls outside the reachable interval.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    target = float(target)
    scale = max(1.0, abs(target))
    lo_sum, hi_sum = lower.sum(), upper.sum()
    slack = FEASIBILITY_RTOL * max(scale, np.abs(lower).sum(), np.abs(upper).sum())
    if lo_sum > target + slack or hi_sum < target - slack:
        raise InfeasibleProjectionError(
            f"target {target!r} outside [{lo_sum!r}, {hi_sum!r}]")

    def response(mu):
        return np.minimum(np.maximum(alpha - beta * mu, lower), upper)

    # response(mu_lo) sits at the upper bounds, response(mu_hi) at the lower
    mu_lo = float(np.min((alpha - upper) / beta))
    mu_hi = float(np.max((alpha - lower) / beta))
    width0 = mu_hi - mu_lo
    tol = RESIDUAL_RTOL * scale
    mu = 0.5 * (mu_lo + mu_hi)
    x = response(mu)
    resid = x.sum() - target
    it = 0
    while abs(resid) > tol and (mu_hi - mu_lo) > WIDTH_RTOL * width0 and it < MAX_ITER:
        if resid > 0:
            mu_lo = mu
        else:
            mu_hi = mu
        mu = 0.5 * (mu_lo + mu_hi)
        x = response(mu)
        resid = x.sum() - target
        it += 1

    # solve the identified piece exactly
    free = (alpha - beta * mu > lower) & (alpha - beta * mu < upper)
    if free.any():
        fixed = x[~free].sum()
        mu_exact = (alpha[free].sum() - (target - fixed)) / beta[free].sum()
        x_exact = response(mu_exact)
        resid_exact = x_exact.sum() - target
        if abs(resid_exact) <= abs(resid):
            mu, x = float(mu_exact), x_exact
    return x, float(mu), it


@dataclass(frozen=True)
class ProjectionTask:
    """Point ``v`` (N x R) to project onto the box-plus-balance set."""

    v: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.v, dtype=float))
        lower = np.broadcast_to(np.asarray(self.lower, dtype=float), v.shape)
        upper = np.broadcast_to(np.asarray(self.upper, dtype=float), v.shape)
        target = np.atleast_1d(np.asarray(self.target, dtype=float))
        if target.shape != (v.shape[1],):
            raise ValueError(f"target must have length {v.shape[1]}, got {target.shape}")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "target", target)


@dataclass(frozen=True)
class ProjectionResult:
    q: np.ndarray
    shift: np.ndarray
    iterations: tuple


def project_polyhedron(task):
    """
    Project ``task.v`` onto ``{lower <= q <= upper, sum_i q_i = target}``.

    Returns a `ProjectionResult` with ``q = clip(v - shift)`` column-wise.
    Raises `InfeasibleProjectionError` if some column target is unreachable
    and `ValueError` if box bounds are out of order.
    """
    if np.any(task.lower > task.upper):
        raise ValueError("box bounds out of order: lower > upper")
    n, r = task.v.shape
    q = np.empty((n, r))
    shift = np.empty(r)
    iters = []
    ones = np.ones(n)
    for j in range(r):
        q[:, j], shift[j], it = balance_shift(
            task.v[:, j], ones, task.lower[:, j], task.upper[:, j], task.target[j])
        iters.append(it)
    return ProjectionResult(q, shift, tuple(iters))


def solve_reduced_qp(m, lower, upper, d):
    """
    Minimize ``sum_i (dq_i + m_i)^2`` s.t. ``lower <= dq <= upper``, ``sum(dq) = d``.

    This is the operator-side redistribution problem of the cooperative
    projection; it is the same clipped-shift problem with ``v = -m``.
    """
    m = np.atleast_1d(np.asarray(m, dtype=float))
    if m.size == 0:
        if d != 0:
            raise InfeasibleProjectionError(f"no variables to absorb d={d!r}")
        return m.copy()
    x, _, _ = balance_shift(-m, np.ones_like(m), lower, upper, d)
    return x
