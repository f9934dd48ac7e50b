import io
import json

import pytest

from tvdispatch import netsim
from tvdispatch.netsim import BROADCAST, OPERATOR, Message, NetworkError, StarNetwork


def sign_msg(signs):
    return Message(2, OPERATOR, BROADCAST, netsim.SIGN_BROADCAST, {"signs": signs})


def test_sign_broadcast_costs_two_bits_per_symbol():
    net = StarNetwork(3)
    net.broadcast(sign_msg([1]))
    assert net.counters.bits == 2
    assert net.counters.reals == 0
    assert net.counters.messages == 1


def test_upload_counts_r_reals():
    net = StarNetwork(2)
    net.send(Message(1, 1, OPERATOR, netsim.PARTIAL_SUM_UPLOAD, {"projection": [1.0, 2.0, 3.0]}))
    assert net.counters.reals_up == 3


def test_payload_counts_two_reals_per_entry():
    msg = Message(3, 1, OPERATOR, netsim.PAYLOAD_UPLOAD, {"entries": [[0, 1.0, 2.0], [2, 0.0, 0.0]]})
    assert msg.n_reals == 4


def test_declared_size_must_match():
    with pytest.raises(NetworkError):
        Message(1, 1, OPERATOR, netsim.PARTIAL_SUM_UPLOAD, {"projection": [1.0]}, n_reals=2)


def test_star_topology_enforced():
    net = StarNetwork(3)
    with pytest.raises(NetworkError):
        net.send(Message(1, 1, 2, netsim.PARTIAL_SUM_UPLOAD, {"projection": [1.0]}))
    with pytest.raises(NetworkError):
        net.send(Message(1, 1, 9, netsim.PARTIAL_SUM_UPLOAD, {"projection": [1.0]}))
    with pytest.raises(NetworkError):
        net.broadcast(Message(2, 1, BROADCAST, netsim.SIGN_BROADCAST, {"signs": [0]}))


def test_formula_uplink_count():
    # N=10, R=1, four transmitting nodes
    net = StarNetwork(10)
    net.begin_step(1)
    for i in range(1, 11):
        net.send(Message(1, i, OPERATOR, netsim.PARTIAL_SUM_UPLOAD, {"projection": [0.0]}))
    for i in range(1, 5):
        net.send(Message(3, i, OPERATOR, netsim.PAYLOAD_UPLOAD, {"entries": [[0, 0.0, 1.0]]}))
    assert net.step_counters(1).reals_up == 18


def test_all_transmit_envelope():
    n, r = 5, 2
    net = StarNetwork(n)
    for i in range(1, n + 1):
        net.send(Message(1, i, OPERATOR, netsim.PARTIAL_SUM_UPLOAD, {"projection": [0.0] * r}))
        net.send(Message(3, i, OPERATOR, netsim.PAYLOAD_UPLOAD,
                         {"entries": [[j, 0.0, 1.0] for j in range(r)]}))
    assert net.counters.reals_up == 3 * r * n <= 4 * r * n


def test_price_broadcast_counted_once():
    net = StarNetwork(10)
    net.begin_step(3)
    net.broadcast(Message(1, OPERATOR, BROADCAST, netsim.PRICE_BROADCAST, {"price": [0.5]}))
    assert net.step_counters(3).reals_down == 1
    assert all(len(net.receive(i)) == 1 for i in range(1, 11))
    assert net.pending() == 0


def test_fifo_and_receipts():
    net = StarNetwork(2)
    net.send(Message(1, 1, OPERATOR, netsim.PARTIAL_SUM_UPLOAD, {"projection": [1.0]}))
    net.send(Message(1, 2, OPERATOR, netsim.PARTIAL_SUM_UPLOAD, {"projection": [2.0]}))
    got = net.receive(OPERATOR)
    assert [m.sender for m in got] == [1, 2]
    assert net.receipts == {0: [OPERATOR], 1: [OPERATOR]}


def test_jsonl_export_is_canonical():
    net = StarNetwork(1)
    net.begin_step(7)
    net.send(Message(1, 1, OPERATOR, netsim.PARTIAL_SUM_UPLOAD, {"projection": [1.5]}))
    buf = io.StringIO()
    net.export_jsonl(buf)
    line = buf.getvalue().strip()
    rec = json.loads(line)
    assert rec["step"] == 7 and rec["n_reals"] == 1
    assert line == json.dumps(rec, sort_keys=True, separators=(",", ":"))


def test_counters_csv():
    net = StarNetwork(2)
    net.begin_step(0)
    net.begin_step(1)
    net.broadcast(sign_msg([1, 0]))
    buf = io.StringIO()
    net.export_counters_csv(buf)
    assert buf.getvalue().splitlines() == ["k,reals_up,reals_down,bits,messages",
                                           "0,0,0,0,0", "1,0,0,4,1"]
