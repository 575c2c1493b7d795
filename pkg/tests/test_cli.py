"""End-to-end tests of the command line front end and trace files."""

import json
import math

import numpy as np
import pytest

from mrplift.cli import main
from mrplift.traces import read_rotation_samples, read_trace


def write_config(path, payload):
    path.write_text(json.dumps(payload, indent=2))
    return str(path)


def ramp_config(**overrides):
    cfg = {
        "schema_version": 1,
        "kind": "lift_only",
        "lift": {"alpha": 0.5, "delta": 0.2},
        "solver": {"step": 1e-3, "t_max": 10.0, "j_max": 20},
        "rotation_source": {"type": "principal_ramp", "axis": [0, 0, 1],
                            "rate": 2.0 * math.pi / 10.0},
    }
    cfg.update(overrides)
    return cfg


def test_lift_only_ramp_scenario(tmp_path):
    cfg_path = write_config(tmp_path / "lift.json", ramp_config())
    out = tmp_path / "out"
    assert main(["run", "--config", cfg_path, "--out-dir", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["all_passed"]
    assert report["lift"]["n_dm_jumps"] == 1
    for name in ("trace.csv", "report.json", "run_metadata.json",
                 "plot_theta_norm.csv", "theta_norm.png"):
        assert (out / name).is_file(), name
    # jump rows appear as pre/post pairs sharing t
    header, rows = read_trace(out / "trace.csv")
    jump_rows = [i for i, r in enumerate(rows) if r["event"].startswith("jump")]
    assert jump_rows
    for i in jump_rows:
        assert rows[i - 1]["t"] == rows[i]["t"]
        assert int(rows[i]["j"]) == int(rows[i - 1]["j"]) + 1


def test_trace_round_trip_through_stream(tmp_path):
    cfg_path = write_config(tmp_path / "lift.json", ramp_config())
    out1 = tmp_path / "out1"
    assert main(["run", "--config", cfg_path, "--out-dir", str(out1)]) == 0
    relift = {
        "schema_version": 1,
        "kind": "lift_only",
        "lift": {"alpha": 0.5, "delta": 0.2},
        "rotation_source": {"type": "from_trace", "path": "out1/trace.csv"},
    }
    cfg2 = write_config(tmp_path / "relift.json", relift)
    out2 = tmp_path / "out2"
    assert main(["run", "--config", cfg2, "--out-dir", str(out2)]) == 0
    _, rows1 = read_trace(out1 / "trace.csv")
    _, rows2 = read_trace(out2 / "trace.csv")
    assert len(rows1) == len(rows2)
    for r1, r2 in zip(rows1, rows2):
        assert (r1["t"], r1["j"], r1["event"]) == (r2["t"], r2["j"], r2["event"])
        for col in ("theta_x", "theta_y", "theta_z"):
            if r1[col] and r2[col]:
                assert abs(float(r1[col]) - float(r2[col])) <= 1e-9


def test_determinism_byte_identical(tmp_path):
    cfg_path = write_config(tmp_path / "lift.json", ramp_config())
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", cfg_path, "--out-dir", str(out1)]) == 0
    assert main(["run", "--config", cfg_path, "--out-dir", str(out2)]) == 0
    assert (out1 / "trace.csv").read_bytes() == (out2 / "trace.csv").read_bytes()
    assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()


def test_malformed_alpha_exits_2(tmp_path, capsys):
    cfg_path = write_config(tmp_path / "bad.json",
                            ramp_config(lift={"alpha": 1.5, "delta": 0.2}))
    out = tmp_path / "out"
    assert main(["run", "--config", cfg_path, "--out-dir", str(out)]) == 2
    err = capsys.readouterr().err
    assert "alpha" in err and "between 0 and 1" in err


def test_validate_reports_constraints(tmp_path, capsys):
    good = write_config(tmp_path / "good.json", ramp_config())
    assert main(["validate", "--config", good]) == 0

    bad_delta = write_config(tmp_path / "bd.json",
                             ramp_config(lift={"alpha": 0.5, "delta": 0.0}))
    assert main(["validate", "--config", bad_delta]) == 2
    assert "delta must be positive" in capsys.readouterr().out

    asym = {
        "schema_version": 1,
        "kind": "h2",
        "lift": {"alpha": 0.5, "delta": 0.2},
        "plant": {"inertia": [[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]},
        "controller": {"kp": 2.0, "kd": 1.0},
        "initial": {"theta": [0.1, 0, 0], "omega": [0, 0, 0]},
    }
    bad_j = write_config(tmp_path / "bj.json", asym)
    assert main(["validate", "--config", bad_j]) == 2
    assert "symmetric" in capsys.readouterr().out


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.json"),
                 "--out-dir", str(tmp_path / "out")]) == 2
    assert "config error" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_simulation_blowup_exits_3(tmp_path, capsys):
    # gains large enough to overflow the RK4 stages within one step
    cfg = {
        "schema_version": 1,
        "kind": "h2",
        "lift": {"alpha": 0.5, "delta": 0.2},
        "solver": {"step": 0.5, "t_max": 20.0},
        "plant": {"inertia": "identity"},
        "controller": {"kp": 1e300, "kd": 1.0},
        "initial": {"theta": [0.5, 0, 0], "omega": [0, 0, 0]},
    }
    cfg_path = write_config(tmp_path / "stiff.json", cfg)
    code = main(["run", "--config", cfg_path, "--out-dir", str(tmp_path / "out")])
    assert code == 3
    assert "simulation error" in capsys.readouterr().err


def test_h1_and_h2_scenarios(tmp_path):
    base = {
        "schema_version": 1,
        "lift": {"alpha": 0.5, "delta": 0.2},
        "solver": {"step": 2e-3, "t_max": 6.0, "j_max": 32},
        "plant": {"inertia": [[1.0, 0, 0], [0, 1.2, 0], [0, 0, 1.5]]},
        "controller": {"kp": 10.0, "kd": 5.0},
    }
    h1 = dict(base, kind="h1",
              initial={"theta": [0.0, 0.0, 1.3], "omega": [0.1, 0.0, 0.0]})
    h2 = dict(base, kind="h2",
              initial={"theta": [0.0, 0.0, 1.3], "omega": [0.1, 0.0, 0.0]})
    out1, out2 = tmp_path / "h1", tmp_path / "h2"
    assert main(["run", "--config", write_config(tmp_path / "h1.json", h1),
                 "--out-dir", str(out1)]) == 0
    assert main(["run", "--config", write_config(tmp_path / "h2.json", h2),
                 "--out-dir", str(out2)]) == 0
    rep1 = json.loads((out1 / "report.json").read_text())
    rep2 = json.loads((out2 / "report.json").read_text())
    assert rep1["checks"]["orthogonality"]["passed"]
    assert rep2["checks"]["jump_norm_relation"]["passed"]
    header, rows = read_trace(out2 / "trace.csv")
    assert header[:3] == ["t", "j", "event"]
    assert "tau_x" in header


def test_equivalence_scenario(tmp_path):
    cfg = {
        "schema_version": 1,
        "kind": "equivalence",
        "lift": {"alpha": 0.5, "delta": 0.2},
        "solver": {"step": 2e-3, "t_max": 8.0, "j_max": 64},
        "plant": {"inertia": [[1.0, 0, 0], [0, 1.2, 0], [0, 0, 1.5]]},
        "controller": {"kp": 16.0, "kd": 5.0},
        "initial": {"theta": [0.0, 0.0, 1.3], "omega": [0.2, -0.1, 0.3]},
    }
    out = tmp_path / "out"
    assert main(["run", "--config", write_config(tmp_path / "eq.json", cfg),
                 "--out-dir", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["all_passed"]
    assert report["max_dev"] <= report["tolerance"]
    assert report["n_dm_jumps"] >= 1
    for name in ("trace_h1.csv", "trace_h2.csv", "plot_deviation.csv",
                 "deviation.png"):
        assert (out / name).is_file(), name


def test_stability_sweep_workers_match_serial(tmp_path):
    cfg = {
        "schema_version": 1,
        "kind": "stability_sweep",
        "lift": {"alpha": 0.5, "delta": 0.2},
        "solver": {"step": 2e-3, "t_max": 12.0, "j_max": 32},
        "plant": {"inertia": "identity"},
        "controller": {"kp": 16.0, "kd": 5.0},
        "initial": {"system": "paired",
                    "random": {"count": 2, "max_theta_norm": 1.0, "max_omega": 0.4}},
    }
    cfg_path = write_config(tmp_path / "sweep.json", cfg)
    out1, out2 = tmp_path / "serial", tmp_path / "pooled"
    assert main(["run", "--config", cfg_path, "--out-dir", str(out1),
                 "--seed", "11"]) == 0
    assert main(["run", "--config", cfg_path, "--out-dir", str(out2),
                 "--seed", "11", "--workers", "2"]) == 0
    assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()
    assert (out1 / "plot_distance.csv").read_bytes() == \
        (out2 / "plot_distance.csv").read_bytes()
    report = json.loads((out1 / "report.json").read_text())
    assert report["all_passed"]
    for case in report["cases"]:
        assert case["verdicts_agree"]


def test_out_dir_env_default(tmp_path, monkeypatch):
    cfg_path = write_config(tmp_path / "lift.json",
                            ramp_config(solver={"step": 1e-2, "t_max": 1.0}))
    env_dir = tmp_path / "env_out"
    monkeypatch.setenv("MRPLIFT_OUT_DIR", str(env_dir))
    assert main(["run", "--config", cfg_path]) == 0
    assert (env_dir / "trace.csv").is_file()


def test_tol_scale_loosens_checks(tmp_path):
    cfg_path = write_config(tmp_path / "lift.json", ramp_config())
    out = tmp_path / "out"
    assert main(["run", "--config", cfg_path, "--out-dir", str(out),
                 "--tol-scale", "100.0"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["lift"]["checks"]["consistency"]["tolerance"] == pytest.approx(1e-4)


def test_rotation_samples_reader(tmp_path):
    cfg_path = write_config(tmp_path / "lift.json",
                            ramp_config(solver={"step": 1e-2, "t_max": 2.0}))
    out = tmp_path / "out"
    assert main(["run", "--config", cfg_path, "--out-dir", str(out)]) == 0
    samples = read_rotation_samples(out / "trace.csv")
    ts = [t for t, _ in samples]
    assert ts == sorted(set(ts))
    for _, R in samples[:5]:
        assert np.linalg.norm(R.T @ R - np.eye(3)) < 1e-12
