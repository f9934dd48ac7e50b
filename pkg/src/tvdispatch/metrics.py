"""
Tracking metrics, bound checks and output files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .oracle import tracking_constants

BOUND_RTOL = 1e-6
ZERO_DRIFT_ATOL = 1e-6
DEFAULT_BURN_IN = 50


def g_norm(p, lam, rho):
    """Weighted norm ``sqrt(rho |p|^2 + |lam|^2 / rho)``."""
    return math.sqrt(rho * float(np.sum(np.square(p))) + float(np.sum(np.square(lam))) / rho)


@dataclass(frozen=True)
class TrackRecord:
    k: int
    algorithm: str
    p_err: float
    u_err_g: float
    e: np.ndarray
    sum_pstar: np.ndarray
    sum_p: np.ndarray
    node_p_err: np.ndarray
    q_err: float | None = None
    q_err_sq: float | None = None
    sum_q: np.ndarray | None = None
    node_q_err: np.ndarray | None = None
    g_run: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    reals_up: int = 0
    reals_down: int = 0
    bits: int = 0


class Tracker:
    """
    Accumulates `TrackRecord` rows for one run.

    Drift maxima are running maxima over the steps seen so far, so the
    ``c1``/``c2`` columns are valid bound instantiations at every row.
    """

    def __init__(self, algorithm, rho, delta):
        self.algorithm = algorithm
        self.rho = rho
        self.delta = delta
        self.records = []
        self._prev = None
        self._dp_max = 0.0
        self._dlam_max = 0.0

    def record_step(self, state, solution, counters=None):
        if state.k != solution.k:
            raise ValueError(f"state k={state.k} but oracle solution k={solution.k}")
        rho = self.rho
        if self._prev is not None:
            self._dp_max = max(self._dp_max, float(np.linalg.norm(solution.p_star - self._prev.p_star)))
            self._dlam_max = max(self._dlam_max,
                                 float(np.linalg.norm(solution.lambda_star - self._prev.lambda_star)))
        self._prev = solution
        g = math.sqrt(rho * self._dp_max ** 2 + self._dlam_max ** 2 / rho)
        c1, c2 = tracking_constants(g, rho, self.delta)

        dp = state.p - solution.p_star
        supply = solution.p_star.sum(axis=0)
        if self.algorithm == "total":
            dq = state.q - solution.q_star
            u_err = g_norm(dp, state.lam - solution.lambda_star, rho)
            extra = dict(q_err=float(np.linalg.norm(dq)), q_err_sq=float(np.sum(dq ** 2)),
                         sum_q=state.q.sum(axis=0), node_q_err=np.linalg.norm(dq, axis=1))
            e = state.q.sum(axis=0) - supply
        else:
            # the price plays the role of the balance multiplier
            u_err = g_norm(dp, state.price - solution.nu_star, rho)
            extra = {}
            e = state.p.sum(axis=0) - supply
        c = counters
        rec = TrackRecord(
            k=state.k, algorithm=self.algorithm,
            p_err=float(np.linalg.norm(dp)), u_err_g=u_err, e=e,
            sum_pstar=supply, sum_p=state.p.sum(axis=0),
            node_p_err=np.linalg.norm(dp, axis=1),
            g_run=g, c1=c1, c2=c2,
            reals_up=c.reals_up if c else 0, reals_down=c.reals_down if c else 0,
            bits=c.bits if c else 0, **extra)
        self.records.append(rec)
        return rec


@dataclass
class BoundReport:
    algorithm: str
    burn_in: int
    n_records: int
    rho: float
    delta: float
    dp_max: float
    dlam_max: float
    g: float
    c1: float
    c2: float
    sup_u_err_g: float
    sup_p_err: float
    sup_q_err: float | None
    sup_q_err_sq: float | None
    recursion_residual: float | None
    sup_abs_e: list = field(default_factory=list)
    u_ok: bool = True
    q_ok: bool = True

    @property
    def passed(self):
        return self.u_ok and self.q_ok

    def to_dict(self):
        d = {k: v for k, v in self.__dict__.items()}
        d["passed"] = self.passed
        return d


def check_bounds(records, solutions, rho, delta, burn_in=DEFAULT_BURN_IN,
                 rtol=BOUND_RTOL, atol=ZERO_DRIFT_ATOL):
    """
    Compare post-burn-in tracking errors with the drift-based bounds.

    ``c1`` and ``c2`` are built from the largest optimal-point drifts over
    the whole run. The primal-dual error ``sup |u - u*|_G`` is compared with
    ``c1`` and the squared feasible-iterate error ``sup |q - q*|^2`` with
    ``c2``; each passes if it is at most ``bound * (1 + rtol) + atol``.
    ``recursion_residual`` is the largest excess of
    ``|u[k+1] - u*[k+1]|_G`` over ``(|u[k] - u*[k]|_G + |u*[k+1] - u*[k]|_G) / sqrt(1 + delta)``;
    it is informational.
    """
    records = list(records)
    solutions = list(solutions)
    if len(records) <= burn_in or len(records) < 2:
        raise ValueError(f"need more than burn_in={burn_in} records, got {len(records)}")
    if len(solutions) != len(records):
        raise ValueError("records and oracle solutions differ in length")
    dp = [np.linalg.norm(b.p_star - a.p_star) for a, b in zip(solutions, solutions[1:])]
    dl = [np.linalg.norm(b.lambda_star - a.lambda_star) for a, b in zip(solutions, solutions[1:])]
    dp_max, dl_max = float(max(dp)), float(max(dl))
    g = math.sqrt(rho * dp_max ** 2 + dl_max ** 2 / rho)
    c1, c2 = tracking_constants(g, rho, delta)

    window = records[burn_in:]
    sup_u = max(r.u_err_g for r in window)
    sup_p = max(r.p_err for r in window)
    total = records[0].algorithm == "total"
    sup_q = max(r.q_err for r in window) if total else None
    sup_q2 = max(r.q_err_sq for r in window) if total else None

    resid = None
    if total:
        du = np.sqrt(rho * np.square(dp) + np.square(dl) / rho)
        factor = 1.0 / math.sqrt(1.0 + delta)
        excess = [records[t + 1].u_err_g - factor * (records[t].u_err_g + du[t])
                  for t in range(burn_in, len(records) - 1)]
        resid = float(max(excess)) if excess else None

    sup_e = np.max(np.abs(np.stack([r.e for r in window])), axis=0).tolist()
    rep = BoundReport(records[0].algorithm, burn_in, len(records), rho, delta,
                      dp_max, dl_max, g, c1, c2, sup_u, sup_p, sup_q, sup_q2, resid, sup_e)
    if total:
        rep.u_ok = sup_u <= c1 * (1 + rtol) + atol
        rep.q_ok = sup_q2 <= c2 * (1 + rtol) + atol
    else:
        # the tracking bounds are stated for the total-feasibility scheme only
        rep.u_ok = rep.q_ok = all(math.isfinite(x) for x in sup_e)
    return rep


def metrics_header(n_resources):
    r = range(1, n_resources + 1)
    return (["k", "p_err", "q_err", "q_err_sq", "u_err_G"]
            + [f"e_{j}" for j in r] + [f"sum_pstar_{j}" for j in r]
            + [f"sum_q_{j}" for j in r]
            + ["g_run", "c1", "c2", "reals_up", "reals_down", "bits"])


def _fmt(x):
    return "" if x is None else repr(float(x))


def metrics_rows(records):
    for rec in records:
        r = rec.e.shape[0]
        sum_q = rec.sum_q if rec.sum_q is not None else [None] * r
        yield ([rec.k, _fmt(rec.p_err), _fmt(rec.q_err), _fmt(rec.q_err_sq), _fmt(rec.u_err_g)]
               + [_fmt(x) for x in rec.e] + [_fmt(x) for x in rec.sum_pstar]
               + [_fmt(x) for x in sum_q]
               + [_fmt(rec.g_run), _fmt(rec.c1), _fmt(rec.c2),
                  rec.reals_up, rec.reals_down, rec.bits])


def write_metrics_csv(records, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(metrics_header(records[0].e.shape[0]))
    w.writerows(metrics_rows(records))


def write_node_errors_csv(records, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["k", "node", "p_err", "q_err"])
    for rec in records:
        for i, pe in enumerate(rec.node_p_err):
            qe = None if rec.node_q_err is None else rec.node_q_err[i]
            w.writerow([rec.k, i + 1, _fmt(pe), _fmt(qe)])


def plot_tracking(records, path, title=None):
    """Overlay the optimal aggregate and the iterate aggregate versus k."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "tvdispatch"
    ks = [r.k for r in records]
    total = records[0].algorithm == "total"
    fig, axes = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax = axes[0]
    pstar = np.array([r.sum_pstar for r in records])
    ax.plot(ks, pstar[:, 0], color="tab:blue", label=r"$p^{\star T}\mathbf{1}$")
    if total:
        agg = np.array([r.sum_q for r in records])
        ax.plot(ks, agg[:, 0], color="tab:red", linestyle="--", label=r"$q^{T}\mathbf{1}$")
    else:
        agg = np.array([r.sum_p for r in records])
        ax.plot(ks, agg[:, 0], color="tab:red", linestyle="--", label=r"$p^{T}\mathbf{1}$")
    ax.set_ylabel("aggregate power")
    ax.legend(loc="best")
    if title:
        ax.set_title(title)
    ax = axes[1]
    if total:
        ax.semilogy(ks, [max(r.q_err, 1e-16) for r in records], label=r"$\|q - q^\star\|$")
    else:
        ax.plot(ks, [r.e[0] for r in records], label=r"$e^{[k]}$ (imbalance)")
    ax.plot(ks, [max(r.p_err, 1e-16) for r in records], label=r"$\|p - p^\star\|$")
    ax.set_xlabel("time step k")
    ax.set_ylabel("tracking error")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_outputs(records, out_dir, report=None):
    """
    Write ``metrics.csv``, ``node_errors.csv``, ``tracking.svg`` and
    optionally ``bounds.json`` into `out_dir`. Nothing is written if
    `records` is empty.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to emit")
    out = Path(out_dir)
    buf = io.StringIO()
    write_metrics_csv(records, buf)
    nbuf = io.StringIO()
    write_node_errors_csv(records, nbuf)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"metrics": out / "metrics.csv", "node_errors": out / "node_errors.csv",
             "plot": out / "tracking.svg"}
    paths["metrics"].write_text(buf.getvalue())
    paths["node_errors"].write_text(nbuf.getvalue())
    plot_tracking(records, paths["plot"])
    if report is not None:
        paths["bounds"] = out / "bounds.json"
        paths["bounds"].write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return paths
