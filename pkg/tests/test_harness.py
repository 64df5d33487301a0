import csv
import io
import math
from dataclasses import replace

import numpy as np
import pytest

import oscikg.harness as harness
from oscikg.harness import (
    CSV_COLUMNS,
    Problem,
    ReferenceConfig,
    error_shape,
    estimate_order,
    observed_orders,
    reference_solution,
    regime_sweep,
    run_convergence_study,
    write_csv,
)
from oscikg.integrator import NumericalAbort, State
from oscikg.presets import example4

FREE = Problem(
    domain=(-math.pi, math.pi),
    modes=32,
    alpha="0",
    psi0="exp(-2*x**2)",
    phi0="sin(2*x)",
    horizon=(0.0, 1.0),
)


def free_exact(problem):
    grid = problem.grid()
    s0 = problem.initial_state()
    t = problem.T - problem.t0
    k = np.abs(2 * np.pi * np.fft.fftfreq(grid.M, d=grid.length / grid.M))
    sinc = np.where(k > 0, np.sin(k * t) / np.where(k > 0, k, 1), t)
    psi = np.fft.ifft(np.cos(k * t) * np.fft.fft(s0.psi) + sinc * np.fft.fft(s0.dpsi)).real
    return State(psi, np.zeros_like(psi), problem.T)


def small_envelope(**changes):
    return replace(Problem.from_dict({**example4(omega=1000.0), "modes": 32}), **changes)


# -- order estimation ---------------------------------------------------------------


def test_order_of_exact_power_laws():
    hs = [0.1, 0.05, 0.025, 0.0125]
    assert estimate_order([h**4 for h in hs], hs) == pytest.approx(4.0)
    assert estimate_order([3 * h**2 for h in hs], hs) == pytest.approx(2.0)


def test_monochromatic_threshold_regime_slope_three():
    # w_min = 1/h: the h^2/w bound scales like h^3
    hs = [0.1, 0.05, 0.025]
    errors = [error_shape(h, (1 / h, 1 / h), alpha_zero=True) for h in hs]
    assert estimate_order(errors, hs) == pytest.approx(3.0)


def test_order_validation():
    with pytest.raises(ValueError):
        estimate_order([1.0], [0.1])
    with pytest.raises(ValueError):
        estimate_order([1.0, 2.0], [0.1])
    with pytest.raises(ValueError):
        estimate_order([1.0, 2.0], [0.1, -0.05])
    with pytest.warns(RuntimeWarning):
        assert np.isfinite(estimate_order([1e-3, 0.0], [0.1, 0.05]))


def test_observed_orders_synthetic_and_noise_floor():
    e = 1e-3
    assert observed_orders([e, e / 16, e / 256], [0.1, 0.05, 0.025]) == pytest.approx([4.0, 4.0])
    assert observed_orders([1e-10, 1e-13], [0.1, 0.05]) == [None]


def test_error_shape_regimes():
    assert error_shape(0.1, None) == pytest.approx(1e-5)
    # h^5 w_max^2 active for small w
    assert error_shape(0.1, (1.0, 1.0), alpha_zero=True) == pytest.approx(1e-5)
    # h^2 / w_min active for large w
    assert error_shape(0.1, (1e6, 1e6), alpha_zero=True) == pytest.approx(1e-8)
    assert error_shape(0.1, (1e6, 1e6)) == pytest.approx(1e-5 + 1e-8)


# -- problems ------------------------------------------------------------------------


def test_problem_round_trip_and_key():
    p = Problem.from_dict(example4())
    assert Problem.from_dict(p.to_dict()) == p
    assert p.key() == Problem.from_dict(p.to_dict()).key()
    assert p.with_omega(5.0).key() != p.key()
    assert p.with_omega(5.0).components[0][1] == 5.0
    assert p.omega_extrema() == (1000.0, 1000.0)


def test_problem_validation():
    with pytest.raises(ValueError):
        replace(FREE, horizon=(1.0, 1.0))
    with pytest.raises(ValueError):
        replace(FREE, psi0="import os")
    with pytest.raises(ValueError):
        FREE.with_omega([1.0, 2.0])


# -- convergence studies -----------------------------------------------------------------


@pytest.mark.parametrize("scheme", ["gamma1", "gamma2"])
def test_free_wave_converges_at_fourth_order(scheme):
    report = run_convergence_study(FREE, scheme, [10, 20, 40, 80], reference=free_exact(FREE))
    assert report.order() == pytest.approx(4.0, abs=0.2)
    assert all(o == pytest.approx(4.0, abs=0.2) for o in report.orders)


def test_report_integrity():
    report = run_convergence_study(FREE, "gamma1", [5, 10, 20], norm_s=1.0, reference=free_exact(FREE))
    hs = report.hs
    assert all(a > b for a, b in zip(hs, hs[1:]))
    for row in report.rows:
        assert row.runtime_s > 0
        assert np.isfinite(row.error_l2) and row.error_l2 >= 0
        assert row.error_hs >= row.error_l2 * 0.99
    assert report.reference == {"mode": "given"}


def test_study_preconditions():
    with pytest.raises(ValueError):
        run_convergence_study(FREE, "gamma1", [20, 10], reference=free_exact(FREE))
    with pytest.raises(ValueError):
        run_convergence_study(FREE, "gamma1", [10, 100], reference=ReferenceConfig(substeps_per_unit=5000))


def test_reference_failure_is_reported(monkeypatch):
    def boom(*args, **kwargs):
        raise FloatingPointError("diverged")

    monkeypatch.setattr(harness, "reference_propagate", boom)
    with pytest.raises(RuntimeError, match="reference"):
        run_convergence_study(replace(FREE, modes=16), "gamma1", [1], reference=ReferenceConfig(100), cache_dir=False)

    def abort(*args, **kwargs):
        raise NumericalAbort("nan", step_index=3)

    monkeypatch.setattr(harness, "reference_propagate", abort)
    with pytest.raises(NumericalAbort) as info:
        run_convergence_study(replace(FREE, modes=16), "gamma1", [1], reference=ReferenceConfig(100), cache_dir=False)
    assert info.value.step_index == 3


def test_non_oscillatory_monotone_in_h():
    problem = small_envelope(components=())
    report = run_convergence_study(problem, "gamma2", [10, 20, 40, 80], reference=ReferenceConfig(8000))
    errors = report.errors
    assert all(b <= 1.05 * a for a, b in zip(errors, errors[1:]))


def test_parallel_cells_match_serial():
    problem = small_envelope()
    serial = run_convergence_study(problem, "gamma1", [10, 20], reference=ReferenceConfig(4000))
    parallel = run_convergence_study(problem, "gamma1", [10, 20], reference=ReferenceConfig(4000), jobs=2)
    assert [r.error_l2 for r in serial.rows] == [r.error_l2 for r in parallel.rows]


def test_purely_oscillatory_fast_regime():
    # alpha == 0 and w = h^-2 for each cell: global slope near 3 or above
    base = small_envelope(alpha="0")
    errors, hs = [], []
    for n in (8, 16, 32):
        problem = replace(base, components=(("-x**2", float(n * n), "cos"),))
        report = run_convergence_study(problem, "gamma1", [n], reference=ReferenceConfig(20000))
        errors.append(report.rows[0].error_l2)
        hs.append(1.0 / n)
    assert estimate_order(errors, hs) >= 2.5


# -- reference cache -----------------------------------------------------------------------


def test_reference_free_propagator(tmp_path):
    state = reference_solution(FREE, 4000, cache_dir=tmp_path)
    assert np.max(np.abs(state.psi - free_exact(FREE).psi)) <= 1e-10


def test_reference_self_convergence(tmp_path):
    problem = replace(small_envelope(), modes=16).with_omega(10.0)
    runs = [reference_solution(problem, n, rule="midpoint", cache_dir=False) for n in (100, 200, 400)]
    ratio = np.linalg.norm(runs[0].psi - runs[1].psi) / np.linalg.norm(runs[1].psi - runs[2].psi)
    assert 3.0 <= ratio <= 5.0


def test_reference_cache_hit_and_corruption(tmp_path, monkeypatch):
    problem = replace(FREE, modes=16)
    first = reference_solution(problem, 500, cache_dir=tmp_path)
    files = list(tmp_path.iterdir())
    assert len(files) == 1 and files[0].suffix == ".npz"

    calls = []
    real = harness.reference_propagate
    monkeypatch.setattr(harness, "reference_propagate", lambda *a, **k: calls.append(1) or real(*a, **k))
    again = reference_solution(problem, 500, cache_dir=tmp_path)
    assert not calls
    assert np.array_equal(again.psi, first.psi)

    files[0].write_bytes(b"not a numpy archive")
    recomputed = reference_solution(problem, 500, cache_dir=tmp_path)
    assert calls == [1]
    assert np.array_equal(recomputed.psi, first.psi)
    assert [p.name for p in tmp_path.iterdir()] == [files[0].name]


def test_reference_cache_key_depends_on_resolution(tmp_path):
    problem = replace(FREE, modes=16)
    reference_solution(problem, 100, cache_dir=tmp_path)
    reference_solution(problem, 200, cache_dir=tmp_path)
    assert len(list(tmp_path.iterdir())) == 2


# -- regime sweeps and CSV -------------------------------------------------------------------


def test_regime_sweep_table():
    template = small_envelope(alpha="0")
    table = regime_sweep(template, [100.0, 1.0, 10.0], [4, 8, 16], "gamma1", reference=ReferenceConfig(4000))
    assert table.omegas == [1.0, 10.0, 100.0]
    assert table.errors.shape == (3, 3)
    assert table.alpha_zero
    assert np.all(table.runtimes > 0)
    # smallest-frequency column: h^5 w^2 bound active, order at least 3
    assert table.column_order(0) >= 3.0
    shape = np.array([[error_shape(h, (w, w), True) for h in table.hs] for w in table.omegas])
    np.testing.assert_allclose(table.bound, table.constant * shape)
    rows = table.csv_rows()
    assert len(rows) == 9
    assert rows[0]["order_est"] is None and rows[1]["order_est"] is not None


def test_uniform_accuracy_in_frequency():
    template = small_envelope()
    table = regime_sweep(template, [1e2, 1e3, 1e4], [10], "gamma2", reference=ReferenceConfig(4000))
    errors = table.errors[:, 0]
    assert errors[2] <= 3 * errors[0]


def _read(text):
    return list(csv.reader(io.StringIO(text)))


def test_csv_format_and_order():
    report = run_convergence_study(FREE, "gamma2", [10, 20], reference=free_exact(FREE))
    other = run_convergence_study(FREE, "gamma1", [10, 20], reference=free_exact(FREE))
    buf = io.StringIO()
    write_csv(buf, report.csv_rows() + other.csv_rows())
    rows = _read(buf.getvalue())
    assert tuple(rows[0]) == CSV_COLUMNS
    assert [r[0] for r in rows[1:]] == ["gamma1", "gamma1", "gamma2", "gamma2"]
    assert [r[4] for r in rows[1:]] == ["10", "20", "10", "20"]
    assert rows[1][1] == "" and rows[1][7] == ""
    mantissa = rows[1][6].split("e")[0].replace("-", "").replace(".", "")
    assert len(mantissa) == 17
    assert float(rows[2][6]) == other.rows[1].error_l2


def test_csv_deterministic_apart_from_timing(tmp_path):
    texts = []
    for i in range(2):
        report = run_convergence_study(FREE, "gamma1", [10, 20, 40], reference=free_exact(FREE))
        path = tmp_path / f"run{i}.csv"
        write_csv(path, report.csv_rows())
        texts.append(_read(path.read_text()))
    timing = CSV_COLUMNS.index("runtime_s")
    strip = lambda rows: [r[:timing] + r[timing + 1 :] for r in rows]
    assert strip(texts[0]) == strip(texts[1])
