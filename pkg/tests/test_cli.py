import json

import pytest

from tvdispatch.cli import main


@pytest.fixture
def small_cfg(tmp_path):
    f = tmp_path / "s.json"
    f.write_text(json.dumps({"n_steps": 30, "seed": 7}))
    return f


def test_run_total(tmp_path, small_cfg, capsys):
    out = tmp_path / "out"
    code = main(["run", "--scenario", str(small_cfg), "--rho", "10", "--out", str(out),
                 "--burn-in", "10"])
    assert code == 0
    for name in ("metrics.csv", "node_errors.csv", "tracking.svg", "bounds.json",
                 "transcript.jsonl", "counters.csv"):
        assert (out / name).is_file()
    assert "PASS" in capsys.readouterr().out


def test_run_partial_has_no_q_series(tmp_path, small_cfg):
    out = tmp_path / "out"
    assert main(["run", "--algo", "partial", "--scenario", str(small_cfg), "--out", str(out),
                 "--burn-in", "10"]) == 0
    row = (out / "metrics.csv").read_text().splitlines()[5].split(",")
    assert row[2] == "" and row[3] == ""


def test_missing_scenario_exit_one(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--scenario", str(tmp_path / "nope.json"), "--out", str(out)]) == 1
    assert not out.exists()


def test_bad_key_named(tmp_path, capsys):
    f = tmp_path / "bad.json"
    f.write_text(json.dumps({"n_stepz": 3}))
    assert main(["run", "--scenario", str(f), "--out", str(tmp_path / "o")]) == 1
    assert "n_stepz" in capsys.readouterr().err


def test_flags_override_file(tmp_path, small_cfg, capsys):
    out = tmp_path / "out"
    main(["run", "--scenario", str(small_cfg), "--steps", "12", "--out", str(out),
          "--burn-in", "5"])
    assert len((out / "metrics.csv").read_text().splitlines()) == 13


def test_env_output_dir(tmp_path, small_cfg, monkeypatch):
    monkeypatch.setenv("TVDISPATCH_OUTPUT_DIR", str(tmp_path / "envout"))
    assert main(["run", "--scenario", str(small_cfg), "--burn-in", "10"]) == 0
    assert (tmp_path / "envout" / "metrics.csv").is_file()


def test_byte_identical_reruns(tmp_path, small_cfg):
    outs = []
    for name in ("a", "b"):
        main(["run", "--scenario", str(small_cfg), "--out", str(tmp_path / name),
              "--burn-in", "10"])
        outs.append(tmp_path / name)
    for f in ("metrics.csv", "transcript.jsonl", "tracking.svg"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()


def test_gen_scenario_then_replay(tmp_path, small_cfg):
    dump = tmp_path / "dump.json"
    assert main(["gen-scenario", "--config", str(small_cfg), "--out", str(dump)]) == 0
    assert main(["run", "--scenario", str(dump), "--out", str(tmp_path / "r1"),
                 "--burn-in", "10"]) == 0
    main(["run", "--scenario", str(small_cfg), "--out", str(tmp_path / "r2"), "--burn-in", "10"])
    assert ((tmp_path / "r1" / "metrics.csv").read_bytes()
            == (tmp_path / "r2" / "metrics.csv").read_bytes())


def test_oracle_dump(tmp_path, small_cfg):
    f = tmp_path / "oracle.csv"
    assert main(["oracle", "--scenario", str(small_cfg), "--out", str(f)]) == 0
    assert len(f.read_text().splitlines()) == 1 + 30 * 10


def test_verify_single_suite(capsys):
    assert main(["verify", "--suite", "projection", "--cases", "50"]) == 0
    out = capsys.readouterr().out
    assert "projection" in out and "PASS" in out


def test_rho_validation():
    with pytest.raises(SystemExit):
        main(["run", "--rho", "-3"])
