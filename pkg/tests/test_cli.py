import csv
import json
import os

import numpy as np
import pytest

from swiftsim.cli import DEFAULT_CONFIG, config_hash, load_config, main, read_drive_csv

# small optimiser budgets keep these runs to a second or two; at this budget
# seed 0 beats the square drive, while several other seeds fall back to it.
# The channel list covers every switch of the default slot assignment.
SMALL = {"soa": {"pso": {"n_particles": 60, "max_iterations": 100}},
         "laser": {"channels": [0, 30, 60, 121]}}


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def read_bytes(d):
    return {f: open(os.path.join(d, f), "rb").read() for f in sorted(os.listdir(d))}


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("run")
    cfg = write_cfg(tmp, SMALL)
    out = str(tmp / "out")
    assert main(["optimize-soa", "--config", cfg, "--out", out, "--seed", "0"]) == 0
    assert main(["optimize-laser", "--config", cfg, "--out", out]) == 0
    return cfg, out


def test_optimize_soa_outputs(artifacts):
    cfg, out = artifacts
    for f in ("soa_drive.csv", "soa_convergence.csv", "soa_output.csv", "soa_metrics.json"):
        assert os.path.exists(os.path.join(out, f))
    meta = json.load(open(os.path.join(out, "soa_metrics.json")))
    assert meta["seed"] == 0
    assert meta["optimized"]["settle_pm5pct_ns"] < meta["baseline"]["settle_pm5pct_ns"]
    assert not meta["fell_back_to_square"]
    first = open(os.path.join(out, "soa_drive.csv")).readline()
    assert first.startswith(f"# config_sha256={meta['config_sha256']} seed=0")
    drive = read_drive_csv(os.path.join(out, "soa_drive.csv"))
    assert len(drive) == 240 and drive.sample_rate_hz == 6e9


def test_optimize_laser_outputs(artifacts):
    _, out = artifacts
    summary = json.load(open(os.path.join(out, "laser_summary.json")))
    assert summary["channels"] == [0, 30, 60, 121]
    assert summary["n_events"] == 12 and summary["all_converged"]
    assert summary["widest_swing_event"]["converged"]
    rows = [r for r in csv.reader(open(os.path.join(out, "laser_cdf.csv")))
            if not r[0].startswith("#")]
    vals = [float(r[0]) for r in rows[1:]]
    assert vals == sorted(vals) and vals[-1] == pytest.approx(summary["worst_case_time_ns"])


def test_simulate_system_passes_with_artifacts(artifacts, capsys):
    cfg, out = artifacts
    assert main(["simulate-system", "--config", cfg, "--out", out]) == 0
    val = json.load(open(os.path.join(out, "system_validation.json")))
    assert val["passed"] and val["gate_complementary"]
    assert val["extinction_db"] >= 22
    assert all(t < 1.5 for t in val["transitions_90_90_ns"])
    assert "validation PASS" in capsys.readouterr().out


def test_gates_off_exits_validation(artifacts, tmp_path):
    cfg, out = artifacts
    assert main(["simulate-system", "--config", cfg, "--out", out, "--gates-off"]) == 4
    assert not json.load(open(os.path.join(out, "system_validation.json")))["passed"]
    # restore the passing report for other tests that read it
    assert main(["simulate-system", "--config", cfg, "--out", out]) == 0


def test_missing_artifacts_exit_3(tmp_path):
    assert main(["simulate-system", "--out", str(tmp_path / "empty")]) == 3


def test_auto_optimize_fills_artifacts(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    out = str(tmp_path / "o")
    assert main(["simulate-system", "--config", cfg, "--out", out, "--auto-optimize"]) == 0
    assert os.path.exists(os.path.join(out, "soa_drive.csv"))
    table = json.load(open(os.path.join(out, "preemph_table.json")))
    assert len(table["events"]) == 4


def test_table_missing_event_exits_3(artifacts, tmp_path):
    cfg, out = artifacts
    bad = write_cfg(tmp_path, {**SMALL, "system": {
        "assignment": {"slots": [{"slot": 0, "laser": 1, "channel": 5},
                                 {"slot": 1, "laser": 2, "channel": 6},
                                 {"slot": 2, "laser": 1, "channel": 7},
                                 {"slot": 3, "laser": 2, "channel": 8}]},
        "soa_drive": os.path.join(out, "soa_drive.csv"),
        "preemph_table": os.path.join(out, "preemph_table.json")}})
    assert main(["simulate-system", "--config", bad, "--out", str(tmp_path / "x")]) == 3


@pytest.mark.parametrize("cfg", [{"sao": {}}, {"soa": {"pso": {"particles": 3}}},
                                 {"laser": {"regression": {"tol": 1}}}, [1, 2]])
def test_bad_config_exits_2(tmp_path, cfg):
    path = write_cfg(tmp_path, cfg)
    cmd = "optimize-laser" if "laser" in str(cfg) else "optimize-soa"
    assert main([cmd, "--config", path, "--out", str(tmp_path / "o")]) == 2


def test_usage_errors_exit_2(tmp_path):
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["power-scaling", "--seed", "-1"]) == 2
    assert main(["power-scaling", "--workers", "0", "--out", str(tmp_path)]) == 2
    assert main(["power-scaling", "--config", str(tmp_path / "nope.json")]) == 2
    (tmp_path / "broken.json").write_text("{")
    assert main(["power-scaling", "--config", str(tmp_path / "broken.json")]) == 2
    assert main(["power-scaling", "--n-min", "5", "--n-max", "2", "--out", str(tmp_path)]) == 2
    assert main(["optimize-laser", "--out", str(tmp_path),
                 "--config", write_cfg(tmp_path, {"laser": {"channels": [0, 200]}})]) == 2


def test_power_scaling_outputs(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["power-scaling", "--out", out]) == 0
    assert "crossover at 8 channels" in capsys.readouterr().out
    rows = [r for r in csv.reader(open(os.path.join(out, "power_scaling.csv")))
            if not r[0].startswith("#")]
    assert rows[0] == ["n_channels", "power_swift_w", "power_per_channel_w"]
    assert len(rows) == 367
    summary = json.load(open(os.path.join(out, "power_summary.json")))
    assert summary["crossover_channels"] == 8
    assert main(["power-scaling", "--out", out, "--n-max", "400"]) == 2


def test_hash_depends_on_config_seed_and_flags(tmp_path):
    base = {"command": "x", "config": load_config(None), "seed": 0}
    assert config_hash(base) == config_hash(json.loads(json.dumps(base)))
    assert config_hash(base) != config_hash({**base, "seed": 1})
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    main(["power-scaling", "--out", a])
    main(["power-scaling", "--out", b, "--n-max", "100"])
    ha = json.load(open(os.path.join(a, "power_summary.json")))["config_sha256"]
    hb = json.load(open(os.path.join(b, "power_summary.json")))["config_sha256"]
    assert ha != hb


def test_default_config_is_not_mutated(tmp_path):
    before = json.dumps(DEFAULT_CONFIG, sort_keys=True)
    main(["power-scaling", "--out", str(tmp_path),
          "--config", write_cfg(tmp_path, {"power": {"n_max": 10}})])
    assert json.dumps(DEFAULT_CONFIG, sort_keys=True) == before


def test_reruns_are_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, {"soa": {"pso": {"n_particles": 20, "max_iterations": 10}},
                               "laser": {"channel_count": 3}})
    outs = []
    for name in ("r1", "r2"):
        out = str(tmp_path / name)
        for cmd in ("optimize-soa", "optimize-laser", "power-scaling"):
            assert main([cmd, "--config", cfg, "--out", out, "--seed", "11"]) == 0
        outs.append(read_bytes(out))
    assert outs[0] == outs[1]


def test_worker_count_does_not_change_outputs(tmp_path):
    cfg = write_cfg(tmp_path, {"laser": {"channel_count": 4}})
    one, three = str(tmp_path / "w1"), str(tmp_path / "w3")
    assert main(["optimize-laser", "--config", cfg, "--out", one, "--workers", "1"]) == 0
    assert main(["optimize-laser", "--config", cfg, "--out", three, "--workers", "3"]) == 0
    assert read_bytes(one) == read_bytes(three)


def test_drive_csv_validation(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("# c\ntime,current\n0,1\n")
    with pytest.raises(Exception):
        read_drive_csv(str(p))
    p.write_text("time_ns,current_ma\n0.0,1.0\n")
    with pytest.raises(Exception):
        read_drive_csv(str(p))
    p.write_text("time_ns,current_ma\n0.0,1.0\n0.5,2.0\n1.0,3.0\n")
    w = read_drive_csv(str(p))
    assert w.sample_rate_hz == 2e9 and np.array_equal(w.samples, [1.0, 2.0, 3.0])
