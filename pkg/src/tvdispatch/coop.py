"""
Cooperative projection between user nodes and the system operator.

Users first project ``v_i = p_i + lam_i / rho`` onto their own boxes and
upload the result. The operator computes the balance residual
``d = supply - sum_i proj_i`` and broadcasts its sign. Nodes whose box
mismatch ``m_i = proj_i - v_i`` agrees in sign with ``d`` (or is zero)
return ``(m_i, headroom)``, the operator solves a small redistribution QP
per coordinate and sends back the moves ``dq``. The result equals the
centralized Euclidean projection onto the box-plus-balance set.

Rounds within one call:

1. partial-sum uploads (R reals per node)
2. sign broadcast (R ternary symbols, counted once)
3. conditional payload uploads (2 reals per transmitted coordinate)
4. delta downlinks (1 real per transmitted coordinate)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import netsim
from .netsim import Message, StarNetwork
from .projection import InfeasibleProjectionError, project_box, solve_reduced_qp


class ProtocolError(RuntimeError):
    pass


def node_prepare(p, lam, rho, lower, upper):
    """Return the box projection of ``p + lam/rho`` and the mismatch ``m``."""
    v = np.asarray(p, dtype=float) + np.asarray(lam, dtype=float) / rho
    proj = project_box(v, lower, upper)
    return proj, proj - v


@dataclass(frozen=True)
class OperatorBroadcast:
    d: np.ndarray
    signs: np.ndarray


def operator_aggregate(projections, supply, n_nodes=None):
    """
    Compute the balance residual from the uploaded box projections.

    `projections` maps node id to its uploaded vector. When `n_nodes` is
    given, every node ``1..n_nodes`` must be present.
    """
    if n_nodes is not None:
        missing = sorted(set(range(1, n_nodes + 1)) - set(projections))
        if missing:
            raise ProtocolError(f"missing partial-sum uploads from nodes {missing}")
    supply = np.atleast_1d(np.asarray(supply, dtype=float))
    total = np.zeros_like(supply)
    for node in sorted(projections):
        total = total + np.asarray(projections[node], dtype=float)
    d = supply - total
    return OperatorBroadcast(d, np.sign(d).astype(int))


def node_respond(m, signs, lower, upper, proj):
    """
    Decide which coordinates a node reports to the operator.

    Returns ``{j: (m_j, headroom_j)}``. Upward headroom ``upper - proj`` is
    sent when ``sign(d_j) > 0`` and downward headroom ``lower - proj`` when
    ``sign(d_j) < 0``; coordinates with ``d_j = 0`` are never reported.
    """
    m = np.atleast_1d(m)
    lower = np.atleast_1d(lower)
    upper = np.atleast_1d(upper)
    proj = np.atleast_1d(proj)
    out = {}
    for j, s in enumerate(np.atleast_1d(signs)):
        if s == 0:
            continue
        if np.sign(m[j]) == s or m[j] == 0:
            room = upper[j] - proj[j] if s > 0 else lower[j] - proj[j]
            out[j] = (float(m[j]), float(room))
    return out


def transmit_sets(payloads, n_resources):
    """Nodes reporting on each coordinate, sorted by node id."""
    return tuple(tuple(sorted(n for n, e in payloads.items() if j in e))
                 for j in range(n_resources))


def operator_redistribute(payloads, d):
    """
    Solve the per-coordinate redistribution QP.

    Parameters
    ----------
    payloads : dict
        ``{node: {j: (m, headroom)}}`` as produced by `node_respond`.
    d : array_like
        Balance residual per coordinate.

    Returns
    -------
    dict
        ``{node: {j: dq}}`` for every node in the transmit set of ``j``.
    """
    d = np.atleast_1d(np.asarray(d, dtype=float))
    moves = {}
    for j, members in enumerate(transmit_sets(payloads, d.shape[0])):
        if d[j] == 0:
            continue
        if not members:
            raise ProtocolError(f"coordinate {j}: residual {d[j]!r} but no node reported")
        m = np.array([payloads[n][j][0] for n in members])
        room = np.array([payloads[n][j][1] for n in members])
        if d[j] > 0:
            lo, hi = np.zeros_like(room), room
        else:
            lo, hi = room, np.zeros_like(room)
        try:
            dq = solve_reduced_qp(m, lo, hi, d[j])
        except InfeasibleProjectionError as exc:
            raise ProtocolError(
                f"coordinate {j}: insufficient headroom for d={d[j]!r} "
                f"(instance infeasible?)") from exc
        for n, delta in zip(members, dq):
            moves.setdefault(n, {})[j] = float(delta)
    return moves


@dataclass(frozen=True)
class ProtocolTranscript:
    """Messages and bookkeeping of one cooperative projection."""

    step: int
    n_nodes: int
    n_resources: int
    messages: tuple
    d: np.ndarray
    signs: np.ndarray
    transmit_sets: tuple
    moves: dict

    @property
    def reals_up(self):
        return sum(m.n_reals for m in self.messages if m.recipient == netsim.OPERATOR)

    @property
    def reals_down(self):
        return sum(m.n_reals for m in self.messages if m.recipient != netsim.OPERATOR)

    @property
    def n_bits(self):
        return sum(m.n_bits for m in self.messages)

    @property
    def n_sign_symbols(self):
        return sum(len(m.payload["signs"]) for m in self.messages
                   if m.kind == netsim.SIGN_BROADCAST)

    @property
    def n_transmitting(self):
        return sum(len(t) for t in self.transmit_sets)

    def expected_reals_up(self):
        return self.n_resources * self.n_nodes + 2 * self.n_transmitting

    def accounting_ok(self):
        nr = self.n_resources * self.n_nodes
        return (self.reals_up == self.expected_reals_up()
                and self.reals_down == self.n_transmitting
                and self.reals_up + self.reals_down <= 4 * nr
                and self.n_sign_symbols == self.n_resources)

    def records(self):
        return [m.record(self.step) for m in self.messages]


def _floats(a):
    return [float(x) for x in a]


def run_coop_projection(p, lam, rho, lower, upper, supply, network=None):
    """
    Run the cooperative projection of ``p + lam/rho`` over a star network.

    Parameters
    ----------
    p, lam : ndarray
        N x R primal iterates and per-node multipliers.
    rho : float
        ADMM penalty.
    lower, upper : ndarray
        N x R box bounds of the target time slice.
    supply : ndarray
        Balance target (length R).
    network : StarNetwork, optional
        Fabric to send messages on; a private one is created if omitted.

    Returns
    -------
    q : ndarray
        The projected N x R matrix.
    transcript : ProtocolTranscript
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    lower = np.broadcast_to(np.asarray(lower, dtype=float), p.shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), p.shape)
    n, r = p.shape
    net = StarNetwork(n) if network is None else network
    if net.n_nodes != n:
        raise ProtocolError(f"network has {net.n_nodes} nodes, problem has {n}")
    start = len(net.transcript)
    op = netsim.OPERATOR

    # round 1: box projections and uploads
    local = {}
    for i in range(n):
        proj, m = node_prepare(p[i], lam[i], rho, lower[i], upper[i])
        local[i + 1] = (proj, m)
        net.send(Message(1, i + 1, op, netsim.PARTIAL_SUM_UPLOAD,
                         {"projection": _floats(proj)}))

    # round 2: operator aggregates and broadcasts sign(d)
    uploads = {}
    for msg in net.receive(op):
        if msg.kind != netsim.PARTIAL_SUM_UPLOAD or msg.sender in uploads:
            raise ProtocolError(f"unexpected message in round 1: {msg}")
        uploads[msg.sender] = msg.payload["projection"]
    bc = operator_aggregate(uploads, supply, n_nodes=n)
    net.broadcast(Message(2, op, netsim.BROADCAST, netsim.SIGN_BROADCAST,
                          {"signs": [int(s) for s in bc.signs]}))

    # round 3: conditional payloads
    for node in range(1, n + 1):
        (msg,) = net.receive(node)
        signs = np.array(msg.payload["signs"])
        proj, m = local[node]
        entries = node_respond(m, signs, lower[node - 1], upper[node - 1], proj)
        if entries:
            net.send(Message(3, node, op, netsim.PAYLOAD_UPLOAD,
                             {"entries": [[j, mj, h] for j, (mj, h) in sorted(entries.items())]}))

    # round 4: redistribution and downlink
    payloads = {}
    for msg in net.receive(op):
        payloads[msg.sender] = {int(j): (mj, h) for j, mj, h in msg.payload["entries"]}
    moves = operator_redistribute(payloads, bc.d)
    for node in sorted(moves):
        net.send(Message(4, op, node, netsim.DELTA_DOWNLINK,
                         {"entries": [[j, dq] for j, dq in sorted(moves[node].items())]}))

    q = np.empty((n, r))
    for node in range(1, n + 1):
        proj = local[node][0].copy()
        for msg in net.receive(node):
            for j, dq in msg.payload["entries"]:
                proj[int(j)] += dq
        # moves are bounded by the headroom, so clamping only removes rounding
        q[node - 1] = np.minimum(np.maximum(proj, lower[node - 1]), upper[node - 1])

    transcript = ProtocolTranscript(
        step=net.step, n_nodes=n, n_resources=r,
        messages=tuple(m for _, _, m in net.transcript[start:]),
        d=bc.d, signs=bc.signs,
        transmit_sets=transmit_sets(payloads, r),
        moves=moves)
    return q, transcript
