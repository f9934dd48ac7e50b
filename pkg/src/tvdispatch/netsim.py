"""
Deterministic star network between user nodes and a system operator.

Endpoint 0 is the operator and endpoints ``1..N`` are users. Delivery is
synchronous, in order and lossless. Broadcasts from the operator are
counted once (bus semantics) but delivered to every user.
"""

from __future__ import annotations

import csv
import json
from collections import deque
from dataclasses import asdict, dataclass

OPERATOR = 0
BROADCAST = -1

PARTIAL_SUM_UPLOAD = "partial-sum-upload"
SIGN_BROADCAST = "sign-broadcast"
PAYLOAD_UPLOAD = "payload-upload"
DELTA_DOWNLINK = "delta-downlink"
PRICE_BROADCAST = "price-broadcast"
MESSAGE_KINDS = (PARTIAL_SUM_UPLOAD, SIGN_BROADCAST, PAYLOAD_UPLOAD,
                 DELTA_DOWNLINK, PRICE_BROADCAST)

# sign(d) is ternary, so each coordinate takes two bits on the wire
BITS_PER_SIGN = 2


class NetworkError(RuntimeError):
    pass


def expected_size(kind, payload):
    """Return ``(n_reals, n_bits)`` implied by a payload of the given kind."""
    if kind == PARTIAL_SUM_UPLOAD:
        return len(payload["projection"]), 0
    if kind == SIGN_BROADCAST:
        return 0, BITS_PER_SIGN * len(payload["signs"])
    if kind == PAYLOAD_UPLOAD:
        # (coordinate, m, headroom): the coordinate index is addressing only
        return 2 * len(payload["entries"]), 0
    if kind == DELTA_DOWNLINK:
        return len(payload["entries"]), 0
    if kind == PRICE_BROADCAST:
        return len(payload["price"]), 0
    raise NetworkError(f"unknown message kind {kind!r}")


@dataclass(frozen=True)
class Message:
    round: int
    sender: int
    recipient: int
    kind: str
    payload: dict
    n_reals: int = None
    n_bits: int = None

    def __post_init__(self):
        reals, bits = expected_size(self.kind, self.payload)
        if self.n_reals is None:
            object.__setattr__(self, "n_reals", reals)
        if self.n_bits is None:
            object.__setattr__(self, "n_bits", bits)
        if (self.n_reals, self.n_bits) != (reals, bits):
            raise NetworkError(
                f"{self.kind}: declared ({self.n_reals}, {self.n_bits}) reals/bits, "
                f"payload implies ({reals}, {bits})")

    def record(self, step=None):
        rec = {"round": self.round, "from": self.sender, "to": self.recipient,
               "kind": self.kind, "n_reals": self.n_reals, "n_bits": self.n_bits,
               "payload": self.payload}
        if step is not None:
            rec = {"step": step, **rec}
        return rec


@dataclass
class Counters:
    reals_up: int = 0
    reals_down: int = 0
    bits: int = 0
    messages: int = 0

    @property
    def reals(self):
        return self.reals_up + self.reals_down

    def add(self, msg):
        if msg.recipient == OPERATOR:
            self.reals_up += msg.n_reals
        else:
            self.reals_down += msg.n_reals
        self.bits += msg.n_bits
        self.messages += 1

    def copy(self):
        return Counters(**asdict(self))


@dataclass(frozen=True)
class Receipt:
    seq: int
    delivered_to: tuple


class StarNetwork:
    """
    Star/bus message fabric with exact accounting.

    Parameters
    ----------
    n_nodes : int
        Number of user endpoints, numbered ``1..n_nodes``.
    """

    def __init__(self, n_nodes):
        if n_nodes < 1:
            raise ValueError("need at least one user node")
        self.n_nodes = n_nodes
        self._inbox = {e: deque() for e in range(n_nodes + 1)}
        self.counters = Counters()
        self._per_step = {}
        self.step = 0
        self.transcript = []  # (step, seq, message)
        self.receipts = {}  # seq -> recipients that drained the message

    @property
    def endpoints(self):
        return tuple(self._inbox)

    def begin_step(self, k):
        self.step = k
        self._per_step.setdefault(k, Counters())

    def _check(self, endpoint):
        if endpoint not in self._inbox:
            raise NetworkError(f"unknown endpoint {endpoint}")

    def _account(self, msg):
        seq = len(self.transcript)
        self.transcript.append((self.step, seq, msg))
        self.counters.add(msg)
        self._per_step.setdefault(self.step, Counters()).add(msg)
        return seq

    def send(self, msg):
        """Deliver a point-to-point message."""
        self._check(msg.sender)
        self._check(msg.recipient)
        if msg.sender == msg.recipient:
            raise NetworkError("sender and recipient coincide")
        if OPERATOR not in (msg.sender, msg.recipient):
            raise NetworkError("star topology: one endpoint must be the operator")
        seq = self._account(msg)
        self._inbox[msg.recipient].append((seq, msg))
        return Receipt(seq, (msg.recipient,))

    def broadcast(self, msg):
        """Operator-to-all broadcast, counted once."""
        if msg.sender != OPERATOR or msg.recipient != BROADCAST:
            raise NetworkError("only the operator broadcasts, to BROADCAST")
        seq = self._account(msg)
        for e in range(1, self.n_nodes + 1):
            self._inbox[e].append((seq, msg))
        return Receipt(seq, tuple(range(1, self.n_nodes + 1)))

    def receive(self, endpoint):
        """Drain and return the inbox of `endpoint` in FIFO order."""
        self._check(endpoint)
        box = self._inbox[endpoint]
        out = []
        while box:
            seq, msg = box.popleft()
            self.receipts.setdefault(seq, []).append(endpoint)
            out.append(msg)
        return out

    def pending(self):
        return sum(len(b) for b in self._inbox.values())

    def step_counters(self, k):
        """Snapshot of the traffic recorded during step `k`."""
        return self._per_step.get(k, Counters()).copy()

    def messages(self, step=None):
        return [m for s, _, m in self.transcript if step is None or s == step]

    def export_jsonl(self, fh):
        """Write one JSON record per message, in send order."""
        for step, _, msg in self.transcript:
            fh.write(json.dumps(msg.record(step), sort_keys=True,
                                separators=(",", ":")) + "\n")

    def export_counters_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "reals_up", "reals_down", "bits", "messages"])
        for k in sorted(self._per_step):
            c = self._per_step[k]
            w.writerow([k, c.reals_up, c.reals_down, c.bits, c.messages])
