import csv
import json

import numpy as np
import pytest

from tvdispatch.metrics import check_bounds, emit_outputs, g_norm, metrics_header
from tvdispatch.runner import simulate
from tvdispatch.scenario import ScenarioConfig, build_scenario


def test_g_norm_identity():
    rng = np.random.default_rng(1)
    for _ in range(100):
        p, lam = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
        rho = float(rng.uniform(0.1, 10))
        expect = np.sqrt(rho * np.sum(p ** 2) + np.sum(lam ** 2) / rho)
        assert g_norm(p, lam, rho) == pytest.approx(expect, rel=1e-15)


@pytest.fixture(scope="module")
def short_total():
    sc = build_scenario(ScenarioConfig(n_steps=40, seed=3))
    return simulate(sc, "total", 10.0, burn_in=10)


def test_header_schema():
    assert metrics_header(2) == [
        "k", "p_err", "q_err", "q_err_sq", "u_err_G", "e_1", "e_2", "sum_pstar_1",
        "sum_pstar_2", "sum_q_1", "sum_q_2", "g_run", "c1", "c2", "reals_up",
        "reals_down", "bits"]


def test_total_records(short_total):
    recs = short_total.records
    assert [r.k for r in recs] == list(range(40))
    for r in recs:
        assert abs(r.e[0]) <= 1e-9 * max(1.0, abs(r.sum_pstar[0]))
        assert r.q_err_sq == pytest.approx(r.q_err ** 2)
    assert recs[5].reals_up >= 10


def test_emit_outputs(tmp_path, short_total):
    paths = emit_outputs(short_total.records, tmp_path / "out", short_total.report)
    rows = list(csv.reader(paths["metrics"].open()))
    assert len(rows) == 1 + 40
    svg = paths["plot"].read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg
    rep = json.loads(paths["bounds"].read_text())
    assert rep["passed"] is True


def test_empty_records_write_nothing(tmp_path):
    with pytest.raises(ValueError):
        emit_outputs([], tmp_path / "never")
    assert not (tmp_path / "never").exists()


def test_partial_rows_leave_q_empty(tmp_path):
    sc = build_scenario(ScenarioConfig(n_steps=20, seed=3))
    res = simulate(sc, "partial", 10.0, burn_in=5)
    paths = emit_outputs(res.records, tmp_path)
    rows = list(csv.DictReader(paths["metrics"].open()))
    assert rows[3]["q_err"] == "" and rows[3]["sum_q_1"] == ""
    assert any(float(r["e_1"]) > 0 for r in rows) and any(float(r["e_1"]) < 0 for r in rows)
    assert all(res.records[k].reals_down == 1 for k in range(1, 20))


def test_zero_drift_bounds_collapse():
    sc = build_scenario(ScenarioConfig(static=True, n_steps=260, rho_mode="formula"))
    res = simulate(sc, "total", None, burn_in=200)
    assert res.report.g == 0.0 and res.report.c1 == 0.0 and res.report.c2 == 0.0
    assert res.report.sup_u_err_g <= 1e-6
    assert res.report.passed


def test_large_drift_bound_holds():
    sc = build_scenario(ScenarioConfig(n_steps=150, seed=11, demand_std=3.0,
                                       supply_source="synthetic", supply_noise=4.0))
    res = simulate(sc, "total", None, burn_in=50)
    assert res.report.passed


def test_check_bounds_needs_records(short_total):
    with pytest.raises(ValueError):
        check_bounds(short_total.records[:5], short_total.solutions[:5], 10.0, 1.0, burn_in=5)


def test_tracker_rejects_k_mismatch(short_total):
    from tvdispatch.metrics import Tracker
    tr = Tracker("total", 10.0, 1.0)
    with pytest.raises(ValueError):
        tr.record_step(short_total.engine.state, short_total.solutions[0])
