"""End-to-end simulation of one engine over a scenario."""

from __future__ import annotations

from dataclasses import dataclass

from .engines import make_engine, select_rho
from .metrics import DEFAULT_BURN_IN, Tracker, check_bounds
from .model import curvature_bounds
from .netsim import StarNetwork
from .oracle import delta_max, solve_instance


@dataclass
class RunResult:
    algorithm: str
    rho: float
    delta: float
    records: list
    solutions: list
    steps: list
    network: StarNetwork
    engine: object
    report: object = None


def scenario_curvature(scenario):
    bounds = [curvature_bounds(inst) for inst in scenario]
    return min(s for s, _ in bounds), max(lip for _, lip in bounds)


def resolve_rho(scenario, rho=None):
    """`rho` if given, else the curvature-based formula."""
    sigma, lip = scenario_curvature(scenario)
    return select_rho(sigma, lip, scenario.n_nodes, scenario.n_resources, override=rho)


def simulate(scenario, algorithm="total", rho=None, burn_in=DEFAULT_BURN_IN,
             solutions=None, check=True):
    """
    Run `algorithm` for one iteration per time slice and track the oracle.

    Parameters
    ----------
    scenario : Scenario
    algorithm : {"total", "partial"}
    rho : float, optional
        Fixed penalty; the curvature formula is used when omitted.
    burn_in : int
        Steps skipped by the bound check.
    solutions : list of OracleSolution, optional
        Precomputed oracle series.
    check : bool
        Run `check_bounds` at the end when the run is long enough.
    """
    rho = resolve_rho(scenario, rho)
    sigma, lip = scenario_curvature(scenario)
    delta = delta_max(sigma, lip)
    if solutions is None:
        solutions = [solve_instance(inst) for inst in scenario]
    network = StarNetwork(scenario.n_nodes)
    network.begin_step(0)
    engine = make_engine(algorithm, scenario[0], rho, network)
    tracker = Tracker(algorithm, rho, delta)
    tracker.record_step(engine.state, solutions[0], network.step_counters(0))
    steps = []
    for inst in scenario.instances[1:]:
        steps.append(engine.step(inst))
        tracker.record_step(engine.state, solutions[inst.k], network.step_counters(inst.k))
    result = RunResult(algorithm, rho, delta, tracker.records, solutions, steps, network, engine)
    if check and len(tracker.records) > max(burn_in, 1):
        result.report = check_bounds(tracker.records, solutions, rho, delta, burn_in)
    return result
