import json
import os
import subprocess
import sys

import pytest

from hdrips import __version__
from hdrips.cli import ExperimentConfig, main, run, validate


def call(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_analytic_IE_prints_three(capsys):
    code, out, _ = call(capsys, "analytic", "--d", "1", "--k", "2", "--which", "IE")
    assert code == 0 and out.strip() == "3"


def test_analytic_IV_and_intensity(capsys):
    assert call(capsys, "analytic", "--d", "1", "--k", "4", "--which", "IV", "--r", "0")[1] \
        .strip() == "25"
    code, out, _ = call(capsys, "analytic", "--d", "6", "--k", "1", "--delta", "0.1",
                        "--which", "intensity", "--theta", "2")
    assert code == 0 and float(out) == 250.0


def test_decomp_table(capsys):
    code, out, _ = call(capsys, "decomp", "--n", "2", "--p", "2")
    lines = out.strip().splitlines()
    assert code == 0
    assert lines[0] == "p,n,signature,numerator,denominator"
    assert lines[1:] == ["2,2,(0),1,4", "2,2,(1),1,1", "2,2,(2),1,2"]


def test_mc_twice_gives_identical_files(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["mc", "--d", "3", "--k", "1", "--t", "100", "--delta", "0.05", "--R", "1000",
            "--seed", "42"]
    assert call(capsys, *args, "--out", str(a))[0] == 0
    assert call(capsys, *args, "--out", str(b))[0] == 0
    ra, rb = json.loads(a.read_text()), json.loads(b.read_text())
    assert ra["config"].pop("output") == str(a) and rb["config"].pop("output") == str(b)
    assert ra == rb
    assert ra["version"] == __version__ and ra["config"]["seed"] == 42
    assert len(ra["samples"]) == 1000
    # same output path twice: byte-identical
    assert call(capsys, *args, "--out", str(a))[0] == 0
    first = a.read_bytes()
    assert call(capsys, *args, "--out", str(a))[0] == 0
    assert a.read_bytes() == first


def test_output_is_written_atomically(tmp_path, capsys):
    target = tmp_path / "out.json"
    call(capsys, "mc", "--d", "2", "--k", "1", "--t", "20", "--delta", "0.1", "--R", "5",
         "--seed", "1", "--out", str(target))
    assert sorted(os.listdir(tmp_path)) == ["out.json"]


def test_float_output_has_full_precision(capsys):
    code, out, _ = call(capsys, "analytic", "--d", "3", "--k", "2", "--t", "100", "--delta",
                        "0.05", "--format", "csv")
    header, values = out.strip().splitlines()
    rec = dict(zip(header.split(","), values.split(",")))
    from hdrips.analytic import RipsParams, expectation_bounds
    assert float(rec["E_upper"]) == expectation_bounds(RipsParams(3, 100.0, 0.05, 2)).upper


def test_invalid_config_exit_code_and_record(capsys):
    code, _, err = call(capsys, "mc", "--d", "2", "--k", "1", "--t", "-1", "--delta", "0.1",
                        "--R", "10", "--seed", "1")
    assert code == 2
    rec = json.loads(err.strip().splitlines()[-1])
    assert rec["exit_code"] == 2 and "t must be positive" in rec["violations"][0]["message"]


def test_runtime_failure_exit_code(capsys, tmp_path):
    code, _, err = call(capsys, "count", "--delta", "0.1", "--cloud", str(tmp_path / "none.json"))
    assert code == 1
    assert json.loads(err.strip())["exit_code"] == 1


def test_sample_count_replay(tmp_path, capsys):
    cloud = tmp_path / "cloud.json"
    assert call(capsys, "sample", "--d", "2", "--t", "60", "--seed", "3", "--delta", "0.1",
                "--out", str(cloud))[0] == 0
    code, out, _ = call(capsys, "count", "--delta", "0.1", "--cloud", str(cloud), "--k-max", "2")
    stored = json.loads(out)["f_vector"]
    code2, out2, _ = call(capsys, "count", "--d", "2", "--t", "60", "--seed", "3", "--delta",
                          "0.1", "--k-max", "2")
    assert code == code2 == 0 and json.loads(out2)["f_vector"] == stored


def test_count_requires_explicit_seed(capsys):
    code, _, err = call(capsys, "count", "--d", "2", "--t", "60", "--delta", "0.1")
    assert code == 2 and "seed" in err


def test_validate_examples(capsys, tmp_path):
    code, out, _ = call(capsys, "validate", "--d", "2", "--t", "10", "--delta", "0.3", "--k", "1")
    msgs = json.loads(out)["violations"]
    assert code == 0 and msgs[0]["level"] == "warning"
    assert "outside analytic range (0, 1/4)" in msgs[0]["message"]

    code, out, _ = call(capsys, "validate", "--d", "2", "--t", "-1", "--delta", "0.1", "--k", "1")
    assert code == 2 and json.loads(out)["violations"][0]["level"] == "error"

    code, out, _ = call(capsys, "validate", "--schedule", json.dumps({"alpha": 1.0}))
    msgs = json.loads(out)["violations"]
    assert code == 0 and any("d*delta_d -> 0" in m["message"] for m in msgs)


def test_validate_collects_every_violation():
    cfg = ExperimentConfig(command="mc", params={"d": 0, "t": -1, "delta": 2, "k": 0}, R=1,
                           seed=None, format="xml")
    assert len([p for p in validate(cfg) if p["level"] == "error"]) == 7


def test_config_round_trip():
    cfg = ExperimentConfig(command="sweep", params={"k": 1},
                           schedule={"kind": "poisson", "c": 1.0, "alpha": 2.0, "theta": 2.0,
                                     "beta": 0.0, "t": None},
                           R=100, seed=3, output="x.json", format="csv", threads=2,
                           options={"d_list": [3, 4]})
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ValueError):
        ExperimentConfig.from_json('{"command": "mc", "bogus": 1}')


def test_sweep_from_config_file(tmp_path, capsys):
    cfg = ExperimentConfig(command="sweep", params={"k": 1},
                           schedule={"kind": "poisson", "theta": 2.0, "alpha": 2.0},
                           R=40, seed=5, format="csv",
                           options={"d_list": [3, 4], "phase": "POISSON", "theta": 2.0})
    path = tmp_path / "sweep.json"
    path.write_text(cfg.to_json())
    out = tmp_path / "sweep.csv"
    code, _, _ = call(capsys, "sweep", "--config", str(path), "--out", str(out))
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("d,t,delta,k,R") and len(lines) == 3


def test_sweep_without_seed_rejected(capsys, tmp_path):
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps({"command": "sweep", "schedule": {"theta": 2.0}, "R": 10,
                                "options": {"d_list": [3]}}))
    code, _, err = call(capsys, "sweep", "--config", str(path))
    assert code == 2 and "seed" in err


def test_threads_flag_and_env(capsys, monkeypatch):
    args = ["mc", "--d", "2", "--k", "1", "--t", "40", "--delta", "0.1", "--R", "30",
            "--seed", "9"]
    monkeypatch.setenv("RIPS_THREADS", "3")
    a = json.loads(call(capsys, *args)[1])
    monkeypatch.delenv("RIPS_THREADS")
    b = json.loads(call(capsys, "--threads", "2", *args)[1])
    assert a["samples"] == b["samples"]
    assert b["config"]["threads"] == 2


def test_run_accepts_config_object(capsys):
    cfg = ExperimentConfig(command="decomp", format="json", options={"n": 1, "p": 2})
    assert run(cfg) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["config"]["command"] == "decomp" and len(rec["constants"]) == 2


def test_console_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "hdrips.cli", "--version"], capture_output=True,
                         text=True, check=True)
    assert res.stdout.strip() == __version__
