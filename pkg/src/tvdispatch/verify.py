"""Randomized property suites behind ``tvdispatch verify``."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import bruteforce
from .coop import run_coop_projection
from .engines import TotalFeasibilityEngine, select_rho
from .metrics import g_norm
from .model import QuadraticObjective, curvature_bounds, quadratic_instance
from .oracle import delta_max, kkt_residuals, solve_instance
from .projection import ProjectionTask, project_polyhedron

PROJECTION_ATOL = 1e-8
CONTRACTION_SLACK = 1e-9
CONTRACTION_STOP = 1e-8
CONVERGENCE_ATOL = 1e-6
CONVERGENCE_STEPS = 200
GRADIENT_RTOL = 1e-6
FD_STEP = 1e-5


@dataclass
class SuiteResult:
    name: str
    passed: bool
    cases: int
    metric: float
    threshold: float
    seconds: float
    detail: str = ""


def random_task(rng, max_nodes=8, max_resources=3):
    """Random feasible projection task with strictly interior targets."""
    n = int(rng.integers(1, max_nodes + 1))
    r = int(rng.integers(1, max_resources + 1))
    lower = rng.uniform(-5, 5, (n, r))
    upper = lower + rng.uniform(0, 5, (n, r))
    # a few degenerate boxes
    upper = np.where(rng.random((n, r)) < 0.05, lower, upper)
    span = (upper - lower).sum(axis=0)
    target = lower.sum(axis=0) + rng.uniform(0.05, 0.95, r) * span
    target = np.where(span > 0, target, lower.sum(axis=0))
    return n, r, lower, upper, target


def projection_suite(cases=1000, seed=42):
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(cases):
        n, r, lo, hi, target = random_task(rng)
        v = rng.uniform(-10, 10, (n, r))
        q = project_polyhedron(ProjectionTask(v, lo, hi, target)).q
        worst = max(worst, float(np.abs(q - bruteforce.project(v, lo, hi, target)).max()))
    return SuiteResult("projection", worst <= PROJECTION_ATOL, cases, worst,
                       PROJECTION_ATOL, time.perf_counter() - t0,
                       "kernel vs exhaustive active-set QP, max-abs")


def protocol_suite(cases=1000, seed=42):
    rng = np.random.default_rng(seed + 1)
    t0 = time.perf_counter()
    worst, bad = 0.0, 0
    for _ in range(cases):
        n, r, lo, hi, target = random_task(rng)
        p = rng.uniform(-10, 10, (n, r))
        lam = rng.normal(0, 3, (n, r))
        rho = float(rng.uniform(0.1, 10))
        q, tr = run_coop_projection(p, lam, rho, lo, hi, target)
        ref = project_polyhedron(ProjectionTask(p + lam / rho, lo, hi, target)).q
        worst = max(worst, float(np.abs(q - ref).max()))
        bad += not tr.accounting_ok()
    ok = worst <= PROJECTION_ATOL and bad == 0
    return SuiteResult("protocol", ok, cases, worst, PROJECTION_ATOL,
                       time.perf_counter() - t0,
                       f"protocol vs kernel, max-abs; accounting failures: {bad}")


def reference_instance(seed=42, n_nodes=10, supply=12.0):
    """Static 10-node slice with unit curvature and boxes [0, supply]."""
    rng = np.random.default_rng(seed)
    d = rng.uniform(0.5, 3.5, n_nodes)
    return quadratic_instance(0, np.ones(n_nodes), d, np.zeros(n_nodes),
                              np.full(n_nodes, supply), [supply])


def contraction_run(instance, rho=None, max_steps=CONVERGENCE_STEPS):
    """
    Iterate the total-feasibility engine on a frozen slice.

    Returns ``(ratios_ok, worst_ratio, steps, final_p_err, errors)`` where
    the per-step test is ``G[k+1]^2 <= G[k]^2 / (1 + delta) + slack``,
    checked until ``G <= CONTRACTION_STOP``.
    """
    sigma, lip = curvature_bounds(instance)
    if rho is None:
        rho = select_rho(sigma, lip, instance.n_nodes, instance.n_resources)
    factor = 1.0 / (1.0 + delta_max(sigma, lip))
    sol = solve_instance(instance)
    eng = TotalFeasibilityEngine(instance, rho)
    err = [g_norm(eng.state.p - sol.p_star, eng.state.lam - sol.lambda_star, rho)]
    ok, worst = True, 0.0
    k = 0
    for k in range(1, max_steps + 1):
        eng.step(instance.with_k(k))
        err.append(g_norm(eng.state.p - sol.p_star, eng.state.lam - sol.lambda_star, rho))
        if err[-2] > CONTRACTION_STOP:
            ok &= err[-1] ** 2 <= factor * err[-2] ** 2 + CONTRACTION_SLACK
            if err[-2] > 0:
                worst = max(worst, err[-1] ** 2 / err[-2] ** 2)
        if np.abs(eng.state.p - sol.p_star).max() <= CONVERGENCE_ATOL and err[-1] <= CONTRACTION_STOP:
            break
    p_err = float(np.abs(eng.state.p - sol.p_star).max())
    return ok, worst, factor, k, p_err, err


def contraction_suite(cases=1000, seed=42):
    t0 = time.perf_counter()
    inst = reference_instance(seed)
    ok, worst, factor, steps, p_err, _ = contraction_run(inst)
    passed = ok and p_err <= CONVERGENCE_ATOL
    return SuiteResult("contraction", passed, 1, worst, factor, time.perf_counter() - t0,
                       f"worst G^2 ratio vs 1/(1+delta); converged to {p_err:.2e} in {steps} steps")


def oracle_suite(cases=1000, seed=42):
    rng = np.random.default_rng(seed + 2)
    t0 = time.perf_counter()
    worst, worst_kkt = 0.0, 0.0
    for k in range(cases):
        n, r, lo, hi, target = random_task(rng, max_nodes=6, max_resources=2)
        a = rng.uniform(0.2, 3, (n, r))
        d = rng.uniform(-6, 6, (n, r))
        if np.any(hi.sum(axis=0) <= target) or np.any(lo.sum(axis=0) >= target):
            continue
        inst = quadratic_instance(k, a, d, lo, hi, target)
        sol = solve_instance(inst)
        ref = bruteforce.dispatch(a, d, lo, hi, target)
        worst = max(worst, float(np.abs(sol.p_star - ref).max()))
        res = kkt_residuals(inst, sol)
        worst_kkt = max(worst_kkt, res["balance"], res["box"])
    ok = worst <= PROJECTION_ATOL and worst_kkt <= 1e-9
    return SuiteResult("oracle", ok, cases, worst, PROJECTION_ATOL, time.perf_counter() - t0,
                       f"oracle vs exhaustive QP; worst feasibility residual {worst_kkt:.1e}")


def central_difference(obj, p, h=FD_STEP):
    g = np.empty_like(p)
    for j in range(p.shape[0]):
        e = np.zeros_like(p)
        e[j] = h
        g[j] = (obj.value(p + e) - obj.value(p - e)) / (2 * h)
    return g


def gradient_suite(cases=100, seed=42):
    rng = np.random.default_rng(seed + 3)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(cases):
        r = int(rng.integers(1, 5))
        obj = QuadraticObjective(rng.uniform(0.1, 5, r), rng.uniform(-5, 5, r),
                                 rng.uniform(-1, 1, r))
        p = rng.uniform(-10, 10, r)
        g = obj.gradient(p)
        fd = central_difference(obj, p)
        rel = np.abs(g - fd).max() / max(1.0, np.abs(g).max())
        worst = max(worst, float(rel))
    return SuiteResult("gradient", worst <= GRADIENT_RTOL, cases, worst, GRADIENT_RTOL,
                       time.perf_counter() - t0, "analytic vs central differences, relative")


SUITES = {
    "projection": projection_suite,
    "protocol": protocol_suite,
    "contraction": contraction_suite,
    "oracle": oracle_suite,
    "gradient": gradient_suite,
}


def run_suites(names, cases=1000, seed=42):
    out = []
    for name in names:
        fn = SUITES[name]
        n = min(cases, 100) if name == "gradient" else cases
        out.append(fn(cases=n, seed=seed))
    return out
