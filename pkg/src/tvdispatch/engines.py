"""
Time-varying ADMM engines for economic dispatch.

Both engines run exactly one iteration per time slice.

`PartialFeasibilityEngine`
    Nodes take a proximal step inside their own boxes against the broadcast
    price plus an inertia term; the suppliers update the price from the
    measured imbalance. Boxes hold at every step, the balance does not.
`TotalFeasibilityEngine`
    The auxiliary iterate ``q`` is the cooperative projection of
    ``p + lam/rho`` onto the box-plus-balance set, so it is feasible at
    every step. Nodes then take an unconstrained proximal step toward
    ``q`` and update their own multipliers.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import netsim
from .coop import run_coop_projection
from .netsim import Message, StarNetwork
from .projection import ProjectionTask, project_box, project_polyhedron


def select_rho(sigma, lipschitz, n_nodes, n_resources, override=None):
    """
    Penalty ``sqrt(L * sigma / (N * R))``, or `override` when given.
    """
    if override is not None:
        if override <= 0:
            raise ValueError("rho override must be positive")
        return float(override)
    if sigma <= 0 or lipschitz <= 0 or n_nodes <= 0 or n_resources <= 0:
        raise ValueError("sigma, L, N and R must be positive")
    return math.sqrt(lipschitz * sigma / (n_nodes * n_resources))


@dataclass(frozen=True)
class PartialState:
    k: int
    p: np.ndarray
    price: np.ndarray
    price_prev: np.ndarray
    rho: float


@dataclass(frozen=True)
class TotalState:
    k: int
    p: np.ndarray
    q: np.ndarray
    lam: np.ndarray
    rho: float


@dataclass(frozen=True)
class StepReport:
    k: int
    e: np.ndarray  # sum(p) - supply for the partial engine, sum(q) - supply for the total one
    transcript: object = None
    wall_time: float = 0.0


def _check_next(state, instance):
    if instance.k != state.k + 1:
        raise ValueError(f"expected instance k={state.k + 1}, got k={instance.k}")


def partial_node_step(state, i, instance):
    """
    New primal iterate of node `i` for the partial-feasibility scheme.

    Minimizes ``f_i(p) + (2 price - price_prev).p + rho/2 |p - p_i|^2``
    over node i's box in `instance`; separable, so the box minimizer is the
    clamped unconstrained one.
    """
    obj = instance.objectives[i]
    linear = 2.0 * state.price - state.price_prev
    p = obj.prox_linear(linear, state.rho, state.p[i])
    return project_box(p, instance.lower[i], instance.upper[i])


def partial_price_step(price, p, supply, rho):
    """``price + rho/N * (sum_i p_i - supply)``."""
    p = np.atleast_2d(p)
    return price + rho / p.shape[0] * (p.sum(axis=0) - supply)


class PartialFeasibilityEngine:
    """
    Price-broadcast ADMM with primal-dual inertia.

    Parameters
    ----------
    instance : DispatchInstance
        The time slice at ``k = 0``; p starts at the box midpoints and the
        price at zero.
    rho : float
        Constant penalty.
    network : StarNetwork, optional
        Receives one price broadcast per step.
    """

    name = "partial"

    def __init__(self, instance, rho, network=None):
        if rho <= 0:
            raise ValueError("rho must be positive")
        r = instance.n_resources
        self.network = network
        self.state = PartialState(instance.k, instance.box_midpoints().copy(),
                                  np.zeros(r), np.zeros(r), float(rho))
        self.primal_updates = {}

    def step(self, instance):
        _check_next(self.state, instance)
        t0 = time.perf_counter()
        st = self.state
        p = np.stack([partial_node_step(st, i, instance) for i in range(instance.n_nodes)])
        self.primal_updates[instance.k] = instance.n_nodes
        price = partial_price_step(st.price, p, instance.supply, st.rho)
        if self.network is not None:
            self.network.begin_step(instance.k)
            self.network.broadcast(Message(1, netsim.OPERATOR, netsim.BROADCAST,
                                           netsim.PRICE_BROADCAST,
                                           {"price": [float(x) for x in price]}))
            for node in range(1, instance.n_nodes + 1):
                self.network.receive(node)
        self.state = PartialState(instance.k, p, price, st.price, st.rho)
        e = p.sum(axis=0) - instance.supply
        return StepReport(instance.k, e, None, time.perf_counter() - t0)


def total_node_step(state, i, instance, q_i):
    """Unconstrained proximal step of node `i` toward its fresh ``q_i``."""
    obj = instance.objectives[i]
    return obj.prox_linear(state.lam[i], state.rho, q_i)


class TotalFeasibilityEngine:
    """
    ADMM whose auxiliary iterate stays feasible at every step.

    Parameters
    ----------
    instance : DispatchInstance
        Time slice ``k = 0``. Initial p is the box midpoint, lam is zero and
        q is the centralized projection of p.
    rho : float
        Constant penalty.
    network : StarNetwork, optional
        Fabric carrying the cooperative projection; created if omitted.
    """

    name = "total"

    def __init__(self, instance, rho, network=None):
        if rho <= 0:
            raise ValueError("rho must be positive")
        self.network = StarNetwork(instance.n_nodes) if network is None else network
        p0 = instance.box_midpoints().copy()
        q0 = project_polyhedron(ProjectionTask(p0, instance.lower, instance.upper,
                                               instance.supply)).q
        self.state = TotalState(instance.k, p0, q0, np.zeros_like(p0), float(rho))
        self.primal_updates = {}

    def step(self, instance):
        _check_next(self.state, instance)
        t0 = time.perf_counter()
        st = self.state
        self.network.begin_step(instance.k)
        q, transcript = run_coop_projection(st.p, st.lam, st.rho, instance.lower,
                                            instance.upper, instance.supply,
                                            network=self.network)
        p = np.stack([total_node_step(st, i, instance, q[i])
                      for i in range(instance.n_nodes)])
        self.primal_updates[instance.k] = instance.n_nodes
        lam = st.lam + st.rho * (p - q)
        self.state = TotalState(instance.k, p, q, lam, st.rho)
        e = q.sum(axis=0) - instance.supply
        return StepReport(instance.k, e, transcript, time.perf_counter() - t0)


ENGINES = {"partial": PartialFeasibilityEngine, "total": TotalFeasibilityEngine}


def make_engine(algorithm, instance, rho, network=None):
    try:
        cls = ENGINES[algorithm]
    except KeyError:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {sorted(ENGINES)}") from None
    return cls(instance, rho, network)

