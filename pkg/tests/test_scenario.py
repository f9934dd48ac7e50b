import io
import json

import numpy as np
import pytest

from tvdispatch.model import validate_instance
from tvdispatch.scenario import (ConfigError, ScenarioConfig, SplitMix64, SupplyFormatError,
                                 build_scenario, dump_scenario, gen_demand_walk,
                                 load_bundled_supply, load_scenario, load_supply_csv,
                                 scenario_hash, synthetic_supply_trace, write_supply_csv)


def test_splitmix_reference_vectors():
    assert SplitMix64(0).next_uint64(1)[0] == 0xE220A8397B1DCDAF
    assert SplitMix64(1234567).next_uint64(5).tolist() == [
        6457827717110365317, 3203168211198807973, 9817491932198370423,
        4593380528125082431, 16408922859458223821]


def test_uniform_and_normal_ranges():
    rng = SplitMix64(9)
    u = rng.uniform(10000)
    assert u.min() > 0 and u.max() < 1
    z = SplitMix64(9).normal(20000)
    assert abs(z.mean()) < 0.05 and abs(z.std() - 1) < 0.05


def write_trace(path, rows, header="timestamp,supply_1"):
    path.write_text(header + "\n" + "".join(f"2024-06-01T00:{i:02d}:00,{v}\n"
                                            for i, v in enumerate(rows)))


def test_load_three_rows(tmp_path):
    f = tmp_path / "s.csv"
    write_trace(f, [5, 6, 5.5])
    assert load_supply_csv(f).ravel().tolist() == [5.0, 6.0, 5.5]


def test_zero_supply_rejected(tmp_path):
    f = tmp_path / "s.csv"
    write_trace(f, [5, 0, 5.5])
    with pytest.raises(SupplyFormatError, match="lines \\[3\\]"):
        load_supply_csv(f)


@pytest.mark.parametrize("header", ["time,supply_1", "timestamp,supply_2", "timestamp"])
def test_bad_header(tmp_path, header):
    f = tmp_path / "s.csv"
    write_trace(f, [5], header=header)
    with pytest.raises(SupplyFormatError):
        load_supply_csv(f)


def test_bad_timestamp(tmp_path):
    f = tmp_path / "s.csv"
    f.write_text("timestamp,supply_1\nyesterday,5\n")
    with pytest.raises(SupplyFormatError):
        load_supply_csv(f)


def test_write_read_roundtrip(tmp_path):
    trace = synthetic_supply_trace(20, 2, seed=3)
    f = tmp_path / "s.csv"
    with f.open("w") as fh:
        write_supply_csv(fh, trace)
    assert np.array_equal(load_supply_csv(f), trace)


def test_bundled_trace():
    trace = load_bundled_supply()
    assert trace.shape == (288, 1)
    assert trace.min() > 0
    assert np.array_equal(trace, synthetic_supply_trace())


def test_demand_noiseless():
    d = gen_demand_walk(4, 10, seed=1, std=0.0)
    assert np.all(d == 2.0)


def test_demand_deterministic_and_nonnegative():
    a = gen_demand_walk(10, 1000, seed=5)
    b = gen_demand_walk(10, 1000, seed=5)
    assert np.array_equal(a, b)
    assert a.min() >= 0
    assert np.all(a[:, 0] == 2.0)
    assert not np.array_equal(a, gen_demand_walk(10, 1000, seed=6))


def test_demand_walks_independent_by_default():
    d = gen_demand_walk(3, 50, seed=5, clamp=False)
    steps = np.diff(d[:, :, 0], axis=1)
    assert not np.allclose(steps[0], steps[1])
    shared = gen_demand_walk(3, 50, seed=5, clamp=False, shared_noise=True)
    steps = np.diff(shared[:, :, 0], axis=1)
    assert np.allclose(steps[0], steps[1])


def test_default_config_is_strictly_feasible():
    sc = build_scenario(ScenarioConfig())
    assert len(sc) == 288 and sc.n_nodes == 10
    for inst in sc:
        assert validate_instance(inst).ok
        assert inst.upper.sum() > inst.supply[0] > inst.lower.sum() == 0


def test_single_step_rejected():
    with pytest.raises(ConfigError):
        ScenarioConfig(n_steps=1)


def test_unknown_key_named():
    with pytest.raises(ConfigError, match="n_node"):
        ScenarioConfig.from_dict({"n_node": 3})


def test_static_scenario_repeats_slice():
    sc = build_scenario(ScenarioConfig(static=True, n_steps=5))
    first = sc[0]
    for inst in sc.instances[1:]:
        assert np.array_equal(inst.supply, first.supply)
        assert all(np.array_equal(a.target, b.target)
                   for a, b in zip(inst.objectives, first.objectives))


def test_infeasible_fixed_box_names_k():
    cfg = ScenarioConfig(supply_source="constant", supply_value=50.0, box_policy="fixed",
                         box_lower=0.0, box_upper=1.0, n_steps=3)
    with pytest.raises(ConfigError, match="k=0"):
        build_scenario(cfg)


def test_dump_reload_and_hash(tmp_path):
    sc = build_scenario(ScenarioConfig(n_steps=12, seed=3))
    f = tmp_path / "dump.json"
    dump_scenario(sc, f)
    again = load_scenario(f)
    assert scenario_hash(again) == scenario_hash(sc)
    assert scenario_hash(build_scenario(ScenarioConfig(n_steps=12, seed=3))) == scenario_hash(sc)
    assert scenario_hash(build_scenario(ScenarioConfig(n_steps=12, seed=4))) != scenario_hash(sc)


def test_csv_supply_relative_to_config(tmp_path):
    write_trace(tmp_path / "trace.csv", [5, 6, 5.5])
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"supply_source": "csv", "supply_path": "trace.csv",
                                    "n_steps": 3}))
    sc = build_scenario(ScenarioConfig.from_json(cfg_path))
    assert [float(i.supply[0]) for i in sc] == [5.0, 6.0, 5.5]


def test_config_roundtrip():
    cfg = ScenarioConfig(n_nodes=4, seed=9)
    assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg
    buf = io.StringIO()
    json.dump(cfg.to_dict(), buf)
    assert json.loads(buf.getvalue())["n_nodes"] == 4
