import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from conformity_dynamics.cli import main
from conformity_dynamics.config import ConfigError, load_config, parse_config
from conformity_dynamics.output import read_trajectory_csv, trajectory_columns
from conformity_dynamics.sim import run

ADDITIVE_PI = {
    "n": 3,
    "model": {"kind": "additive", "family": "affine", "intercept": 1, "slope": 1},
    "mechanism": {"kind": "pi", "rho": 1, "kappa": 2},
    "pi_star": [0.2, 0.3, 0.5],
    "seed": 1,
    "horizon": 20,
    "step": 0.01,
    "record_interval": 0.01,
}

SATURATED = {
    "n": 3,
    "model": {"kind": "multiplicative", "family": "affine", "intercept": 1.05, "slope": 0.05},
    "mechanism": {"kind": "saturated", "rho": 1, "kappa": 1, "alpha": 1, "t_bar": 1},
    "pi_star": [0.2, 0.3, 0.5],
    "seed": 1,
    "horizon": 20,
    "step": 0.01,
}


def write_config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data, indent=2))
    return path


def with_changes(base, **changes):
    data = json.loads(json.dumps(base))
    for key, val in changes.items():
        if "__" in key:
            outer, inner = key.split("__")
            data[outer][inner] = val
        else:
            data[key] = val
    return data


# --- config ------------------------------------------------------------------


@pytest.mark.parametrize("base", [ADDITIVE_PI, SATURATED, {"n": 2, "model": {"kind": "unbiased"}}])
def test_config_round_trip(base, tmp_path):
    first = parse_config(base, tmp_path)
    again = parse_config(first.to_dict(), tmp_path)
    assert again.to_dict() == first.to_dict()
    assert json.loads(first.to_json()) == first.to_dict()


def test_config_materialises_defaults(tmp_path):
    cfg = parse_config({"n": 2, "model": {"kind": "additive"}}, tmp_path)
    d = cfg.to_dict()
    assert d["logit"] == {"eta": 1.0, "beta": 1.0}
    assert d["model"]["family"] == "affine"
    assert d["mechanism"] == {"kind": "none"}
    assert d["step"] == pytest.approx(1e-3) and d["record_interval"] == d["step"]
    assert d["certificates"] == "auto" and d["convergence"] == {"epsilon": 1e-4, "window": 10.0}
    assert cfg.theorem is None


def test_config_smoothstep_and_per_strategy_values(tmp_path):
    cfg = parse_config({"n": 2, "model": {"kind": "multiplicative", "family": "smoothstep",
                                          "intercept": [2.0, 2.5]}}, tmp_path)
    assert [c.intercept for c in cfg.scenario.bias.curves] == [2.0, 2.5]
    with pytest.raises(ConfigError, match="entries"):
        parse_config({"n": 3, "model": {"kind": "additive", "slope": [1, 2]}}, tmp_path)


def test_config_tabulated_csv_relative_to_config(tmp_path):
    (tmp_path / "curve.csv").write_text("x,b\n0,1\n0.5,0.4\n1,0\n")
    path = write_config(tmp_path, {"n": 2, "model": {"kind": "additive", "family": "tabulated",
                                                     "csv": "curve.csv"}})
    cfg = load_config(path)
    assert cfg.scenario.bias.c_high > 0
    with pytest.raises(ConfigError):
        parse_config({"n": 2, "model": {"kind": "additive", "family": "tabulated"}}, tmp_path)


def test_config_unknown_key_reports_line(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{\n  "n": 2,\n  "model": {"kind": "unbiased"},\n  "colour": "red"\n}\n')
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert info.value.line == 4 and "colour" in str(info.value)


def test_config_nested_unknown_key_reports_line(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{\n  "n": 2,\n  "model": {\n    "kind": "additive",\n'
                    '    "steepness": 3\n  }\n}\n')
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert info.value.line == 5


def test_config_malformed_json_reports_line(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{\n  "n": 2,\n  "model": {"kind": "unbiased",}\n}\n')
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert info.value.line == 3


@pytest.mark.parametrize("data", [
    {"n": 1, "model": {"kind": "unbiased"}},
    {"n": 2, "model": {"kind": "quadratic"}},
    {"n": 2, "model": {"kind": "unbiased"}, "logit": {"eta": 0}},
    {"n": 2, "model": {"kind": "unbiased"}, "pi0": [0.0, 1.0]},
    {"n": 2, "model": {"kind": "unbiased"}, "pi0": [0.3, 0.3, 0.4]},
    {"n": 2, "model": {"kind": "unbiased"}, "mechanism": {"kind": "pi"}},
    {"n": 2, "model": {"kind": "unbiased"}, "step": 0.01, "record_interval": 0.015},
    {"n": 2, "model": {"kind": "multiplicative", "intercept": 1, "slope": 1}},
    {"n": 2, "model": {"kind": "unbiased"}, "sweep": {"kappa": [1, 2]}},
])
def test_config_invalid(data, tmp_path):
    with pytest.raises(ConfigError):
        parse_config(data, tmp_path)


# --- run ---------------------------------------------------------------------


def test_run_writes_artifacts(tmp_path, capsys):
    path = write_config(tmp_path, ADDITIVE_PI)
    out = tmp_path / "out"
    assert main(["run", "--config", str(path), "--out", str(out), "--strict"]) == 0
    for name in ("trajectory.csv", "certificates.json", "summary.json", "config.json"):
        assert (out / name).exists()
    header, data, flags = read_trajectory_csv(out / "trajectory.csv")
    assert header == trajectory_columns(3)
    assert len(data) == round(20 / 0.01) + 1
    certs = json.loads((out / "certificates.json").read_text())
    assert set(certs) == {"lemma1", "lemma2", "lemma4", "V1", "interconnection"}
    for rep in certs.values():
        assert rep["passed"] is True and "worst_violation" in rep
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "complete" and summary["certificates_passed"]


def test_csv_round_trips_exactly(tmp_path):
    path = write_config(tmp_path, with_changes(ADDITIVE_PI, horizon=2))
    out = tmp_path / "o"
    assert main(["run", "--config", str(path), "--out", str(out)]) == 0
    _, data, _ = read_trajectory_csv(out / "trajectory.csv")
    traj = run(load_config(path).scenario)
    expected = np.column_stack([traj.t, traj.pi, traj.tau, traj.T, traj.mu,
                                traj.S, traj.storage, traj.V])
    np.testing.assert_array_equal(data, expected)


def test_output_dir_from_config(tmp_path):
    path = write_config(tmp_path, with_changes(ADDITIVE_PI, horizon=1, output_dir="results"))
    assert main(["run", "--config", str(path)]) == 0
    assert (tmp_path / "results" / "trajectory.csv").exists()


def test_certificate_selection(tmp_path):
    path = write_config(tmp_path, with_changes(ADDITIVE_PI, horizon=2, certificates=["V1"]))
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
    assert list(json.loads((tmp_path / "o" / "certificates.json").read_text())) == ["V1"]


def test_run_boundary_initial_state_exit_2(tmp_path, capsys):
    data = with_changes(ADDITIVE_PI, pi0=[0.0, 0.5, 0.5])
    del data["seed"]
    path = write_config(tmp_path, data)
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "pi0" in err and "cfg.json:" in err


def test_run_malformed_exit_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n "n": 3,\n "model": {"kind": "additive",}\n}\n')
    assert main(["run", "--config", str(path)]) == 2
    assert "bad.json:3" in capsys.readouterr().err


def strict_failure_config():
    # strong bias, weak gain: kappa = 0.5 < c_high = 5
    return with_changes(ADDITIVE_PI, logit={"beta": 5.0}, horizon=40,
                        model={"kind": "additive", "family": "affine",
                               "intercept": 5, "slope": 5},
                        mechanism={"kind": "pi", "rho": 1, "kappa": 0.5})


def test_strict_subthreshold_v1_failure_exit_1(tmp_path):
    path = write_config(tmp_path, strict_failure_config())
    out = tmp_path / "o"
    assert main(["run", "--config", str(path), "--out", str(out), "--strict"]) == 1
    v1 = json.loads((out / "certificates.json").read_text())["V1"]
    assert v1["passed"] is False and v1["condition_met"] is False
    assert v1["worst_violation"] > 10 * v1["tolerance"]
    # without --strict the same run reports but succeeds
    assert main(["run", "--config", str(path), "--out", str(out)]) == 0


def test_run_abort_exit_3(tmp_path, capsys):
    path = write_config(tmp_path, with_changes(ADDITIVE_PI, mechanism__kappa=1e12, horizon=2))
    out = tmp_path / "o"
    assert main(["run", "--config", str(path), "--out", str(out)]) == 3
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "aborted"
    assert "aborted" in capsys.readouterr().err


# --- check-gains -------------------------------------------------------------


def test_check_gains_additive_pi(tmp_path, capsys):
    assert main(["check-gains", "--config", str(write_config(tmp_path, ADDITIVE_PI))]) == 0
    out = capsys.readouterr().out
    assert "PASS margin=1.0" in out and "threshold=1" in out


def test_check_gains_saturated(tmp_path, capsys):
    assert main(["check-gains", "--config", str(write_config(tmp_path, SATURATED))]) == 0
    out = capsys.readouterr().out
    assert "threshold=0.2" in out and "PASS margin=0.8" in out


def test_check_gains_infeasible(tmp_path, capsys):
    data = with_changes(SATURATED, model={"kind": "multiplicative", "intercept": 1.5, "slope": 0.5})
    assert main(["check-gains", "--config", str(write_config(tmp_path, data))]) == 0
    assert "INFEASIBLE for all κ" in capsys.readouterr().out


@pytest.mark.parametrize("mechanism", [
    {"kind": "saturated", "rho": 1, "kappa": 2, "alpha": 1, "t_bar": 1},
    {"kind": "none"},
])
def test_check_gains_mismatch_exit_2(tmp_path, mechanism, capsys):
    data = with_changes(ADDITIVE_PI, mechanism=mechanism)
    assert main(["check-gains", "--config", str(write_config(tmp_path, data))]) == 2
    assert "config error" in capsys.readouterr().err


# --- sweep -------------------------------------------------------------------


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_sweep_eight_values(tmp_path):
    kappas = [0.5, 0.75, 1.25, 1.5, 2.0, 2.5, 3.0, 4.0]
    data = with_changes(ADDITIVE_PI, horizon=10, sweep={"kappa": kappas})
    out = tmp_path / "sw"
    assert main(["sweep", "--config", str(write_config(tmp_path, data)), "--out", str(out),
                 "--threads", "4"]) == 0
    rows = read_rows(out / "sweep_summary.csv")
    assert [float(r["kappa"]) for r in rows] == kappas
    assert all(r["status"] == "complete" for r in rows)
    for k in kappas:
        assert (out / f"kappa_{k:g}" / "trajectory.csv").exists()


def test_sweep_with_aborting_row_and_resume(tmp_path):
    data = with_changes(ADDITIVE_PI, horizon=5, sweep={"kappa": [1.5, 2.0, 1e12]})
    cfg = write_config(tmp_path, data)
    out = tmp_path / "sw"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 3
    rows = read_rows(out / "sweep_summary.csv")
    assert [r["status"] for r in rows] == ["complete", "complete", "aborted"]
    assert "sum of costs" in rows[2]["reason"]

    done = out / "kappa_1.5" / "trajectory.csv"
    stamp = done.stat().st_mtime_ns
    os.utime(done, ns=(stamp - 10**9, stamp - 10**9))
    stamp = done.stat().st_mtime_ns
    aborted = out / "kappa_1e+12" / "summary.json"
    aborted_stamp = aborted.stat().st_mtime_ns
    os.utime(aborted, ns=(aborted_stamp - 10**9, aborted_stamp - 10**9))
    aborted_stamp = aborted.stat().st_mtime_ns

    assert main(["sweep", "--config", str(cfg), "--out", str(out), "--resume"]) == 3
    assert done.stat().st_mtime_ns == stamp               # completed row skipped
    assert aborted.stat().st_mtime_ns != aborted_stamp    # aborted row retried
    assert len(read_rows(out / "sweep_summary.csv")) == 3


def test_sweep_requires_sweep_entry(tmp_path):
    assert main(["sweep", "--config", str(write_config(tmp_path, ADDITIVE_PI))]) == 2


def test_module_entry_point(tmp_path):
    path = write_config(tmp_path, ADDITIVE_PI)
    proc = subprocess.run([sys.executable, "-m", "conformity_dynamics", "check-gains",
                           "--config", str(path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "PASS margin=1.0" in proc.stdout
