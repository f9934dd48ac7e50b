import numpy as np
import pytest

from tvdispatch.coop import (ProtocolError, node_prepare, node_respond, operator_aggregate,
                             operator_redistribute, run_coop_projection)
from tvdispatch.netsim import StarNetwork
from tvdispatch.projection import ProjectionTask, project_box, project_polyhedron


@pytest.mark.parametrize("p, lam, rho, proj, m", [
    (1.0, 0.0, 1.0, 1.0, 0.0),
    (-1.0, 0.0, 1.0, 0.0, 1.0),
    (2.0, 2.0, 2.0, 2.0, -1.0),
])
def test_node_prepare(p, lam, rho, proj, m):
    got_proj, got_m = node_prepare([p], [lam], rho, [0.0], [2.0])
    assert got_proj.tolist() == [proj]
    assert got_m.tolist() == [m]
    assert got_proj.tolist() == project_box([p + lam / rho], 0.0, 2.0).tolist()


def test_aggregate_balanced():
    bc = operator_aggregate({1: [2.0], 2: [1.0], 3: [2.0]}, [5.0], n_nodes=3)
    assert bc.d.tolist() == [0.0] and bc.signs.tolist() == [0]


@pytest.mark.parametrize("supply, d, s", [(5.0, 1.0, 1), (3.0, -1.0, -1)])
def test_aggregate_walkthrough(supply, d, s):
    bc = operator_aggregate({1: [2.0], 2: [0.0], 3: [2.0]}, [supply], n_nodes=3)
    assert bc.d.tolist() == [d] and bc.signs.tolist() == [s]


def test_aggregate_missing_node():
    with pytest.raises(ProtocolError):
        operator_aggregate({1: [2.0], 3: [2.0]}, [5.0], n_nodes=3)


def test_respond_sends_upward_headroom():
    assert node_respond([1.0], [1], [0.0], [2.0], [0.0]) == {0: (1.0, 2.0)}


def test_respond_sign_mismatch_silent():
    assert node_respond([-1.0], [1], [0.0], [2.0], [2.0]) == {}


def test_respond_zero_mismatch_participates():
    assert node_respond([0.0], [1], [0.0], [2.0], [2.0]) == {0: (0.0, 0.0)}


def test_respond_downward_headroom():
    assert node_respond([-1.0], [-1], [0.0], [2.0], [2.0]) == {0: (-1.0, -2.0)}


def test_respond_balanced_coordinate_silent():
    assert node_respond([0.0], [0], [0.0], [2.0], [1.0]) == {}


def test_redistribute_walkthrough():
    moves = operator_redistribute({2: {0: (1.0, 2.0)}, 3: {0: (0.0, 0.0)}}, [1.0])
    assert moves == {2: {0: pytest.approx(1.0, abs=1e-12)}, 3: {0: pytest.approx(0.0, abs=1e-12)}}


def test_redistribute_zero_residual():
    assert operator_redistribute({1: {0: (0.0, 1.0)}}, [0.0]) == {}


def test_redistribute_single_node_absorbs():
    moves = operator_redistribute({4: {0: (0.3, 5.0)}}, [2.5])
    assert moves[4][0] == pytest.approx(2.5, abs=1e-12)


def test_redistribute_insufficient_headroom():
    with pytest.raises(ProtocolError):
        operator_redistribute({1: {0: (1.0, 0.5)}}, [1.0])
    with pytest.raises(ProtocolError):
        operator_redistribute({}, [1.0])


def test_walkthrough_end_to_end():
    p = np.array([[3.0], [-1.0], [2.0]])
    q, tr = run_coop_projection(p, np.zeros_like(p), 1.0, 0.0, 2.0, [5.0])
    assert q.ravel().tolist() == pytest.approx([2.0, 1.0, 2.0], abs=1e-12)
    assert tr.transmit_sets == ((2, 3),)
    assert tr.reals_up == 3 + 2 * 2
    assert tr.reals_down == 2
    assert tr.accounting_ok()


def test_feasible_input_gives_empty_payload_round():
    p = np.array([[0.5], [1.5], [1.0]])
    q, tr = run_coop_projection(p, np.zeros_like(p), 1.0, 0.0, 2.0, [3.0])
    assert np.abs(q - p).max() <= 1e-15
    assert tr.n_transmitting == 0
    assert tr.reals_up == 3 and tr.reals_down == 0
    assert tr.n_sign_symbols == 1


def random_case(rng):
    n, r = int(rng.integers(1, 9)), int(rng.integers(1, 4))
    lower = rng.uniform(-5, 5, (n, r))
    upper = lower + rng.uniform(0.01, 5, (n, r))
    target = lower.sum(axis=0) + rng.uniform(0.05, 0.95, r) * (upper - lower).sum(axis=0)
    p = rng.uniform(-10, 10, (n, r))
    lam = rng.normal(0, 3, (n, r))
    return p, lam, float(rng.uniform(0.1, 10)), lower, upper, target


def test_matches_central_kernel():
    rng = np.random.default_rng(21)
    for _ in range(300):
        p, lam, rho, lo, hi, target = random_case(rng)
        q, tr = run_coop_projection(p, lam, rho, lo, hi, target)
        ref = project_polyhedron(ProjectionTask(p + lam / rho, lo, hi, target)).q
        assert np.abs(q - ref).max() <= 1e-8
        assert tr.accounting_ok()


def test_ten_node_traffic_within_worst_case():
    rng = np.random.default_rng(22)
    for _ in range(50):
        supply = float(rng.uniform(5, 25))
        p = rng.uniform(-5, 30, (10, 1))
        q, tr = run_coop_projection(p, rng.normal(0, 5, (10, 1)), 10.0, 0.0, supply, [supply])
        assert tr.reals_up + tr.reals_down <= 40


def test_determinism_of_transcript():
    rng = np.random.default_rng(23)
    p, lam, rho, lo, hi, target = random_case(rng)
    recs = []
    for _ in range(2):
        _, tr = run_coop_projection(p, lam, rho, lo, hi, target)
        recs.append(tr.records())
    assert recs[0] == recs[1]


def test_message_conservation():
    rng = np.random.default_rng(24)
    for _ in range(50):
        p, lam, rho, lo, hi, target = random_case(rng)
        net = StarNetwork(p.shape[0])
        run_coop_projection(p, lam, rho, lo, hi, target, network=net)
        assert net.pending() == 0
        for _, seq, msg in net.transcript:
            expect = p.shape[0] if msg.recipient == -1 else 1
            assert len(net.receipts[seq]) == expect


def test_exclusion_is_optimal():
    # coordinates kept out of the transmit set do not move in the central projection
    rng = np.random.default_rng(25)
    for _ in range(200):
        p, lam, rho, lo, hi, target = random_case(rng)
        q, tr = run_coop_projection(p, lam, rho, lo, hi, target)
        box = np.clip(p + lam / rho, lo, hi)
        for j, members in enumerate(tr.transmit_sets):
            out = [i for i in range(p.shape[0]) if i + 1 not in members]
            assert np.abs(q[out, j] - box[out, j]).max(initial=0.0) <= 1e-12


def test_network_size_mismatch():
    with pytest.raises(ProtocolError):
        run_coop_projection(np.zeros((2, 1)), np.zeros((2, 1)), 1.0, 0.0, 1.0, [1.0],
                            network=StarNetwork(3))
