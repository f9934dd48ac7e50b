"""
Exact centralized solutions of each dispatch time slice.

For separable quadratics, stationarity of the Lagrangian gives
``p_i(nu) = clip(d_i - nu / (2 a_i), lower_i, upper_i)`` per coordinate,
and the balance multiplier ``nu`` is found with the same clipped-shift
bisection used by the projection kernel. The per-node consistency
multipliers of the split problem are ``lambda_i = -grad f_i(p_i)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .model import QuadraticObjective
from .projection import InfeasibleProjectionError, balance_shift


@dataclass(frozen=True)
class OracleSolution:
    k: int
    p_star: np.ndarray
    lambda_star: np.ndarray
    nu_star: np.ndarray
    objective: float

    @property
    def q_star(self):
        return self.p_star


def solve_instance(instance):
    """Solve one time slice exactly; see module docstring."""
    for obj in instance.objectives:
        if not isinstance(obj, QuadraticObjective):
            raise NotImplementedError("the oracle only handles quadratic objectives")
    a = np.stack([o.curvature for o in instance.objectives])
    d = np.stack([o.target for o in instance.objectives])
    n, r = d.shape
    p = np.empty((n, r))
    nu = np.empty(r)
    for j in range(r):
        try:
            p[:, j], nu[j], _ = balance_shift(
                d[:, j], 1.0 / (2.0 * a[:, j]), instance.lower[:, j],
                instance.upper[:, j], instance.supply[j])
        except InfeasibleProjectionError as exc:
            raise ValueError(f"instance k={instance.k} infeasible: {exc}") from exc
    lam = -2.0 * a * (p - d)
    return OracleSolution(instance.k, p, lam, nu, instance.total_objective(p))


def kkt_residuals(instance, sol, atol=1e-9):
    """
    Return the KKT residuals of an oracle solution.

    Keys: ``balance`` (max |sum p - supply|), ``box`` (max bound violation),
    ``stationarity`` (max |grad f + nu + mu_up - mu_lo| using the implied
    bound multipliers) and ``dual_sign`` (largest negative bound multiplier).
    """
    p = sol.p_star
    grad = instance.gradients(p)
    balance = np.abs(p.sum(axis=0) - instance.supply).max()
    box = max(0.0, (instance.lower - p).max(), (p - instance.upper).max())
    # bound multipliers implied by stationarity on each active bound
    slack = -grad - sol.nu_star
    at_hi = np.isclose(p, instance.upper, rtol=0, atol=atol)
    at_lo = np.isclose(p, instance.lower, rtol=0, atol=atol) & ~at_hi
    free = ~(at_hi | at_lo)
    mu_up = np.where(at_hi, slack, 0.0)
    mu_lo = np.where(at_lo, -slack, 0.0)
    stationarity = np.abs(grad + sol.nu_star + mu_up - mu_lo).max()
    free_stat = np.abs(np.where(free, slack, 0.0)).max()
    dual_sign = max(0.0, -mu_up.min(initial=0.0), -mu_lo.min(initial=0.0))
    return {"balance": float(balance), "box": float(box),
            "stationarity": float(max(stationarity, free_stat)),
            "dual_sign": float(dual_sign)}


def multipliers_from_balance(instance, sol, atol=1e-9):
    """
    Rebuild the consistency multipliers from ``nu`` and the bound multipliers.

    Interior coordinates get ``nu``; coordinates on a bound add the bound
    multiplier. This is the linear-combination form of the optimal duals
    and must agree with ``sol.lambda_star``.
    """
    p = sol.p_star
    grad = instance.gradients(p)
    at_hi = np.isclose(p, instance.upper, rtol=0, atol=atol)
    at_lo = np.isclose(p, instance.lower, rtol=0, atol=atol) & ~at_hi
    mu_up = np.where(at_hi, np.maximum(-grad - sol.nu_star, 0.0), 0.0)
    mu_lo = np.where(at_lo, np.maximum(grad + sol.nu_star, 0.0), 0.0)
    return sol.nu_star + mu_up - mu_lo


def delta_max(sigma, lipschitz):
    """Contraction margin ``1 / sqrt(L / sigma)``."""
    return 1.0 / math.sqrt(lipschitz / sigma)


def tracking_constants(g, rho, delta):
    """Return ``(c1, c2)`` for drift aggregate `g`, penalty `rho`, margin `delta`."""
    c1 = g / (math.sqrt(1.0 + delta) - 1.0)
    c2 = 3.0 * c1 ** 2 + g ** 2 / rho + 3.0 * c1 * g / math.sqrt(rho)
    return c1, c2


@dataclass(frozen=True)
class DriftStats:
    """
    Drift of the optimal primal/dual pair over consecutive time slices.

    ``dp`` and ``dlam`` are per-step drift series; ``du_g`` is the per-step
    drift in the weighted norm ``sqrt(rho |dp|^2 + |dlam|^2 / rho)``.
    """

    dp: np.ndarray
    dlam: np.ndarray
    du_g: np.ndarray
    dp_max: float
    dlam_max: float
    g: float
    c1: float
    c2: float
    rho: float
    delta: float


def drift_stats(solutions, rho, delta):
    """Drift series, running maxima and tracking constants."""
    solutions = list(solutions)
    if len(solutions) < 2:
        raise ValueError("drift statistics need at least two solutions")
    if rho <= 0:
        raise ValueError("rho must be positive")
    dp = np.array([np.linalg.norm(b.p_star - a.p_star)
                   for a, b in zip(solutions, solutions[1:])])
    dlam = np.array([np.linalg.norm(b.lambda_star - a.lambda_star)
                     for a, b in zip(solutions, solutions[1:])])
    du_g = np.sqrt(rho * dp ** 2 + dlam ** 2 / rho)
    dp_max, dlam_max = float(dp.max()), float(dlam.max())
    g = math.sqrt(rho * dp_max ** 2 + dlam_max ** 2 / rho)
    c1, c2 = tracking_constants(g, rho, delta)
    return DriftStats(dp, dlam, du_g, dp_max, dlam_max, g, c1, c2, rho, delta)


def dump_solutions_csv(solutions, fh):
    """Write ``k,node,coordinate,p_star,lambda_star,nu_star`` rows."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["k", "node", "coordinate", "p_star", "lambda_star", "nu_star"])
    for sol in solutions:
        n, r = sol.p_star.shape
        for i in range(n):
            for j in range(r):
                w.writerow([sol.k, i + 1, j + 1, repr(float(sol.p_star[i, j])),
                            repr(float(sol.lambda_star[i, j])), repr(float(sol.nu_star[j]))])
