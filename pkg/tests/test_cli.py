import csv
import json
import struct

import numpy as np
import pytest

from oscikg.cli import SNAPSHOT_MAGIC, main, read_snapshot, validate_config
from oscikg.harness import Problem
from oscikg.integrator import integrate
from oscikg.presets import PRESETS, preset_config


def run_cli(args, capsys):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def write_config(path, config):
    path.write_text(json.dumps(config))
    return path


def rows_of(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# -- presets ---------------------------------------------------------------------------


def test_preset_emits_valid_json(capsys):
    code, out, _ = run_cli(["preset", "example1", "--epsilon", "0.1", "--omega", "100"], capsys)
    assert code == 0
    config = json.loads(out)
    problem = config["problem"]
    assert problem["domain"] == [-10.0, 10.0]
    assert problem["horizon"] == [0.0, 1.0]
    assert problem["psi0"] == "exp(-x**2/2)" and problem["phi0"] == "0"
    assert problem["forcing"]["components"][0]["omega"] == 100.0


def test_preset_two_dimensional():
    problem = preset_config("example3")["problem"]
    assert problem["dim"] == 2
    assert problem["domain"] == pytest.approx([-np.pi, np.pi])


def test_preset_six_frequencies():
    problem = Problem.from_dict(preset_config("example5")["problem"])
    assert len(problem.components) == 6
    assert problem.omega_extrema() == (1.0, 1e5)


def test_preset_semiclassical_scaling():
    problem = preset_config("example2")["problem"]
    assert problem["laplacian_scale"] == 1e-3
    assert problem["forcing"]["alpha"] == "-1000*x**2"
    assert problem["forcing"]["components"][0]["amplitude"] == "-200*x**2"


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_preset_round_trip(name, tmp_path, capsys):
    path = tmp_path / "p.json"
    code, _, _ = run_cli(["preset", name, "--out", path], capsys)
    assert code == 0
    config = json.loads(path.read_text())
    problem = validate_config(config)
    assert problem.to_dict() == config["problem"]
    assert json.loads(json.dumps(config)) == preset_config(name)


def test_unknown_preset(capsys):
    code, _, err = run_cli(["preset", "example9"], capsys)
    assert code == 2 and "example9" in err
    with pytest.raises(SystemExit) as info:
        main(["run", "--preset", "example9"])
    assert info.value.code == 2


def test_preset_rejects_foreign_parameter(capsys):
    code, _, err = run_cli(["preset", "example5", "--epsilon", "0.3"], capsys)
    assert code == 2


# -- run ---------------------------------------------------------------------------------


def test_run_writes_snapshot_and_summary(tmp_path, capsys):
    snap = tmp_path / "state.bin"
    code, out, _ = run_cli(
        ["run", "--preset", "example1", "--epsilon", "0.1", "--omega", "100", "--modes", "64", "--steps", "20", "--out", snap],
        capsys,
    )
    assert code == 0
    raw = snap.read_bytes()
    assert raw[:8] == SNAPSHOT_MAGIC
    assert struct.unpack_from("<II", raw, 8) == (1, 64)
    assert len(raw) == 8 + 8 + 2 * 64 * 8
    psi, dpsi = read_snapshot(snap)
    config = preset_config("example1", epsilon=0.1, omega=100.0)
    config["problem"]["modes"] = 64
    problem = Problem.from_dict(config["problem"])
    expected = integrate("gamma1", problem.model(), problem.initial_state(), 0.0, 1.0, 20)
    assert np.array_equal(psi, expected.psi) and np.array_equal(dpsi, expected.dpsi)
    summary = json.loads((tmp_path / "state.json").read_text())
    assert summary["n_steps"] == 20 and summary["runtime_s"] > 0
    assert summary["norm_psi"] == pytest.approx(np.sqrt(np.mean(expected.psi**2)))
    assert json.loads(out) == summary


def test_run_two_dimensional_snapshot(tmp_path, capsys):
    snap = tmp_path / "s2.bin"
    code, _, _ = run_cli(["run", "--preset", "example3", "--modes", "16", "--steps", "8", "--out", snap], capsys)
    assert code == 0
    assert struct.unpack_from("<III", snap.read_bytes(), 8) == (2, 16, 16)
    psi, _ = read_snapshot(snap)
    assert psi.shape == (16, 16)


def test_missing_steps_reports_path(tmp_path, capsys):
    config = preset_config("example1")
    del config["steps"]
    code, _, err = run_cli(["run", "--config", write_config(tmp_path / "c.json", config)], capsys)
    assert code == 2
    assert "$" in err and "'steps'" in err


def test_bad_field_reports_nested_path(tmp_path, capsys):
    config = preset_config("example1")
    config["problem"]["modes"] = 7
    code, _, err = run_cli(["run", "--config", write_config(tmp_path / "c.json", config)], capsys)
    assert code == 2 and "$.problem.modes" in err


def test_zero_length_horizon(tmp_path, capsys):
    config = preset_config("example1")
    config["problem"]["horizon"] = [0.5, 0.5]
    code, _, err = run_cli(["run", "--config", write_config(tmp_path / "c.json", config)], capsys)
    assert code == 2 and "horizon" in err


@pytest.mark.parametrize(
    "mutate",
    [
        lambda c: c.update(colour="blue"),
        lambda c: c["problem"].update(extra=1),
        lambda c: c["problem"]["forcing"]["components"][0].update(phase=0),
        lambda c: c.update(schemes=["rk4"]),
        lambda c: c["problem"].update(psi0="open('x')"),
        lambda c: c["problem"].update(psi0="1/x"),
    ],
)
def test_invalid_configs_rejected(mutate, tmp_path, capsys):
    config = preset_config("example4")
    mutate(config)
    with np.errstate(all="ignore"):
        code, _, _ = run_cli(["run", "--config", write_config(tmp_path / "c.json", config)], capsys)
    assert code == 2


def test_unreadable_config(tmp_path, capsys):
    bad = tmp_path / "c.json"
    bad.write_text("{not json")
    assert run_cli(["run", "--config", bad], capsys)[0] == 2
    assert run_cli(["run", "--config", tmp_path / "missing.json"], capsys)[0] == 2
    assert run_cli(["run"], capsys)[0] == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numerical_abort_exit_code(tmp_path, capsys):
    config = preset_config("example4")
    config["problem"]["forcing"] = {"alpha": "1e8", "components": []}
    code, _, err = run_cli(
        ["run", "--config", write_config(tmp_path / "c.json", config), "--steps", "2", "--out", tmp_path / "s.bin"], capsys
    )
    assert code == 3 and "step 0" in err


def test_config_omega_override(tmp_path, capsys):
    config = preset_config("example4")
    path = write_config(tmp_path / "c.json", config)
    code, _, _ = run_cli(["run", "--config", path, "--omega", "10", "--steps", "10", "--out", tmp_path / "a.bin"], capsys)
    assert code == 0
    code, _, _ = run_cli(["run", "--preset", "example4", "--omega", "10", "--steps", "10", "--out", tmp_path / "b.bin"], capsys)
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    assert run_cli(["run", "--config", path, "--epsilon", "1"], capsys)[0] == 2


# -- converge and sweep ----------------------------------------------------------------------


def test_converge_both_schemes(tmp_path, capsys):
    out = tmp_path / "ex4.csv"
    code, text, _ = run_cli(["converge", "--preset", "example4", "--steps", "10,20,40,80", "--out", out], capsys)
    assert code == 0
    rows = rows_of(out)
    assert len(rows) == 8
    assert [r["scheme"] for r in rows] == ["gamma1"] * 4 + ["gamma2"] * 4
    assert all(float(r["error_l2"]) < 1e-3 for r in rows)
    assert "gamma1:" in text and "gamma2:" in text


def test_converge_single_step_count(tmp_path, capsys):
    out = tmp_path / "one.csv"
    code, _, _ = run_cli(["converge", "--preset", "example4", "--steps", "10", "--scheme", "gamma2", "--out", out], capsys)
    assert code == 0
    rows = rows_of(out)
    assert len(rows) == 1 and rows[0]["order_est"] == ""


def test_converge_deterministic(tmp_path, capsys):
    args = ["converge", "--preset", "example4", "--modes", "16", "--steps", "10,20"]
    run_cli(args + ["--out", tmp_path / "a.csv"], capsys)
    run_cli(args + ["--out", tmp_path / "b.csv", "--jobs", "2"], capsys)
    a, b = rows_of(tmp_path / "a.csv"), rows_of(tmp_path / "b.csv")
    for ra, rb in zip(a, b):
        ra.pop("runtime_s"), rb.pop("runtime_s")
    assert a == b


def test_converge_with_sobolev_norm(tmp_path, capsys):
    out = tmp_path / "hs.csv"
    code, _, _ = run_cli(
        ["converge", "--preset", "example4", "--modes", "16", "--steps", "10,20", "--norm-s", "1", "--out", out], capsys
    )
    assert code == 0 and len(rows_of(out)) == 4


def test_sweep_writes_bound_column(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    code, text, _ = run_cli(
        ["sweep", "--preset", "example4", "--modes", "16", "--scheme", "gamma1", "--steps", "10,20", "--omegas", "1,100", "--out", out],
        capsys,
    )
    assert code == 0
    rows = rows_of(out)
    assert len(rows) == 4
    assert [float(r["omega_min"]) for r in rows] == [1.0, 1.0, 100.0, 100.0]
    assert all(float(r["bound"]) > 0 for r in rows)
    assert "C =" in text


def test_sweep_needs_oscillatory_component(tmp_path, capsys):
    config = preset_config("example4")
    config["problem"]["forcing"]["components"] = []
    code, _, err = run_cli(["sweep", "--config", write_config(tmp_path / "c.json", config)], capsys)
    assert code == 2


def test_converge_multi_frequency_is_steady(tmp_path, capsys):
    config = preset_config("example5")
    config["problem"]["modes"] = 16
    config["schemes"] = ["gamma2"]
    config["steps"] = [50, 100, 200]
    config["reference"]["substeps_per_unit"] = 20000
    out = tmp_path / "ex5.csv"
    code, _, _ = run_cli(["converge", "--config", write_config(tmp_path / "c.json", config), "--out", out], capsys)
    assert code == 0
    errors = [float(r["error_l2"]) for r in rows_of(out)]
    assert max(errors) < 1e-4
    assert all(b <= 1.05 * a for a, b in zip(errors, errors[1:]))
