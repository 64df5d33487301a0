"""Convergence studies, order estimates and frequency/step-size regime sweeps."""

import csv
import hashlib
import json
import math
import os
import tempfile
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .expr import Expression
from .forcing import ForcingTerm, OscComponent, freq_extrema
from .integrator import Model, NumericalAbort, SchemeId, State, integrate, reference_propagate
from .spectral import make_grid, rms_norm, sobolev_norm

NOISE_FLOOR = 1e-12
CSV_COLUMNS = (
    "scheme",
    "omega_min",
    "omega_max",
    "M",
    "n_steps",
    "h",
    "error_l2",
    "order_est",
    "runtime_s",
    "bound",
)


@dataclass(frozen=True)
class Problem:
    """A Klein-Gordon initial value problem described by expressions.

    ``components`` holds ``(amplitude, omega, form)`` triples.  Everything is
    plain data so a problem hashes, pickles and round-trips through JSON.
    """

    domain: tuple = (-10.0, 10.0)
    modes: int = 64
    dim: int = 1
    alpha: str = "0"
    components: tuple = ()
    psi0: str = "0"
    phi0: str = "0"
    horizon: tuple = (0.0, 1.0)
    laplacian_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "domain", tuple(float(v) for v in self.domain))
        object.__setattr__(self, "horizon", tuple(float(v) for v in self.horizon))
        comps = tuple((str(a), float(w), str(form)) for a, w, form in self.components)
        object.__setattr__(self, "components", comps)
        if len(self.horizon) != 2 or not self.horizon[1] > self.horizon[0]:
            raise ValueError(f"horizon must satisfy T > t0, got {self.horizon}")
        if len(self.domain) != 2:
            raise ValueError("domain must be [a, b]")
        for src in (self.alpha, self.psi0, self.phi0):
            Expression(src)

    @classmethod
    def from_dict(cls, data):
        forcing = data.get("forcing", {})
        comps = tuple(
            (c["amplitude"], c["omega"], c.get("form", "cos")) for c in forcing.get("components", ())
        )
        return cls(
            domain=tuple(data["domain"]),
            modes=int(data["modes"]),
            dim=int(data.get("dim", 1)),
            alpha=str(forcing.get("alpha", "0")),
            components=comps,
            psi0=str(data["psi0"]),
            phi0=str(data.get("phi0", "0")),
            horizon=tuple(data["horizon"]),
            laplacian_scale=float(data.get("laplacian_scale", 1.0)),
        )

    def to_dict(self):
        return {
            "domain": list(self.domain),
            "modes": self.modes,
            "dim": self.dim,
            "laplacian_scale": self.laplacian_scale,
            "forcing": {
                "alpha": self.alpha,
                "components": [
                    {"amplitude": a, "omega": w, "form": form} for a, w, form in self.components
                ],
            },
            "psi0": self.psi0,
            "phi0": self.phi0,
            "horizon": list(self.horizon),
        }

    def key(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def t0(self):
        return self.horizon[0]

    @property
    def T(self):
        return self.horizon[1]

    def grid(self):
        return make_grid(self.domain[0], self.domain[1], self.modes, self.dim)

    def forcing(self):
        comps = [OscComponent(Expression(a), w, form) for a, w, form in self.components]
        return ForcingTerm(Expression(self.alpha), comps)

    def model(self):
        return Model(self.grid(), self.forcing(), self.laplacian_scale)

    def initial_state(self, grid=None):
        grid = grid or self.grid()
        kw = dict(zip("xy", grid.coords))
        psi = Expression(self.psi0)(t=self.t0, **kw)
        dpsi = Expression(self.phi0)(t=self.t0, **kw)
        return State(psi, dpsi, self.t0)

    @property
    def alpha_is_zero(self):
        return Expression(self.alpha).is_zero

    def omega_extrema(self):
        return freq_extrema(self.forcing())

    def with_omega(self, omega):
        """Copy with component frequencies replaced.

        A scalar sets every component to the same frequency (monochromatic
        templates); a sequence gives one frequency per component.
        """
        if np.ndim(omega) == 0:
            omegas = [float(omega)] * len(self.components)
        else:
            omegas = [float(w) for w in omega]
            if len(omegas) != len(self.components):
                raise ValueError("need one frequency per component")
        comps = tuple((a, w, form) for (a, _, form), w in zip(self.components, omegas))
        return replace(self, components=comps)

    def with_modes(self, modes):
        return replace(self, modes=int(modes))


@dataclass(frozen=True)
class ReferenceConfig:
    """How the reference solution is computed."""

    substeps_per_unit: int = 4000
    rule: str = "magnus4"
    mode: str = "auto"

    def substeps(self, problem):
        return max(1, int(math.ceil(self.substeps_per_unit * (problem.T - problem.t0))))

    def describe(self):
        return {"substeps_per_unit": self.substeps_per_unit, "rule": self.rule, "mode": self.mode}


def default_cache_dir():
    return Path(os.environ.get("OSCIKG_CACHE_DIR", Path.home() / ".cache" / "oscikg"))


def reference_solution(problem, substeps_per_unit=4000, rule="magnus4", mode="auto", cache_dir=None):
    """Reference state at ``problem.T``, memoised on disk.

    The cache file name is the SHA-256 of the canonical problem JSON plus the
    reference resolution.  Files are written to a temporary name and renamed,
    so concurrent writers never expose a partial file.  Pass
    ``cache_dir=False`` to disable caching.
    """
    ref_cfg = ReferenceConfig(substeps_per_unit, rule, mode)
    blob = json.dumps({"problem": problem.to_dict(), "reference": ref_cfg.describe()}, sort_keys=True)
    digest = hashlib.sha256(blob.encode()).hexdigest()
    path = None
    if cache_dir is not False:
        cache = Path(cache_dir) if cache_dir is not None else default_cache_dir()
        path = cache / f"ref-{digest}.npz"
        state = _load_cached(path, problem)
        if state is not None:
            return state
    model = problem.model()
    state = reference_propagate(
        model, problem.initial_state(model.grid), problem.T, ref_cfg.substeps(problem), rule=rule, mode=mode
    )
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".npz")
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, psi=state.psi, dpsi=state.dpsi, t=state.t, key=blob)
        os.replace(tmp, path)
    return state


def _load_cached(path, problem):
    if not path.exists():
        return None
    try:
        with np.load(path) as data:
            psi, dpsi, t = data["psi"], data["dpsi"], float(data["t"])
        shape = (problem.modes,) * problem.dim
        if psi.shape != shape or dpsi.shape != shape or t != problem.T:
            raise ValueError("shape mismatch")
        if not (np.all(np.isfinite(psi)) and np.all(np.isfinite(dpsi))):
            raise ValueError("non-finite cache")
    except Exception:
        # corrupt or stale entry: drop it and recompute
        path.unlink(missing_ok=True)
        return None
    return State(psi, dpsi, t)


# ---------------------------------------------------------------------------
# order estimation


def observed_orders(errors, hs, floor=NOISE_FLOOR):
    """Order ``log(e_i/e_{i+1}) / log(h_i/h_{i+1})`` per adjacent pair.

    Pairs with an error below ``floor`` give ``None``.
    """
    out = []
    for (e0, h0), (e1, h1) in zip(zip(errors, hs), zip(errors[1:], hs[1:])):
        if e0 < floor or e1 < floor:
            out.append(None)
        else:
            out.append(math.log(e0 / e1) / math.log(h0 / h1))
    return out


def estimate_order(errors, hs):
    """Least-squares slope of ``log(error)`` against ``log(h)``.

    Zero errors are clamped to 1e-16 with a ``RuntimeWarning``.
    """
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    if errors.shape != hs.shape or errors.size < 2:
        raise ValueError("need matching error and step lists of length >= 2")
    if np.any(hs <= 0) or np.any(errors < 0):
        raise ValueError("steps must be positive and errors non-negative")
    if np.any(errors == 0):
        warnings.warn("zero errors clamped to 1e-16 for the order fit", RuntimeWarning, stacklevel=2)
        errors = np.maximum(errors, 1e-16)
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])


def error_shape(h, omega_extrema, alpha_zero=False):
    """Predicted local error ``h^5 + min{h^3, h^2/w_min, h^5 w_max^2}`` (no constant).

    Without an oscillatory part the bound is ``h^5``; with ``alpha == 0`` the
    ``h^5`` term is dropped.
    """
    if omega_extrema is None:
        return h**5
    wmin, wmax = omega_extrema
    osc = min(h**3, h**2 / wmin if wmin > 0 else math.inf, h**5 * wmax**2)
    return osc if alpha_zero else h**5 + osc


# ---------------------------------------------------------------------------
# convergence studies


@dataclass
class StudyRow:
    n_steps: int
    h: float
    error_l2: float
    runtime_s: float
    error_hs: float = None


@dataclass
class ConvergenceReport:
    scheme: str
    problem: Problem
    rows: list
    reference: dict
    norm_s: float = 0.0
    orders: list = field(default_factory=list)

    @property
    def errors(self):
        return [r.error_l2 if self.norm_s == 0 else r.error_hs for r in self.rows]

    @property
    def hs(self):
        return [r.h for r in self.rows]

    def order(self):
        return estimate_order(self.errors, self.hs)

    def csv_rows(self):
        ext = self.problem.omega_extrema()
        alpha_zero = self.problem.alpha_is_zero
        out = []
        for i, row in enumerate(self.rows):
            out.append(
                {
                    "scheme": self.scheme,
                    "omega_min": ext[0] if ext else None,
                    "omega_max": ext[1] if ext else None,
                    "M": self.problem.modes,
                    "n_steps": row.n_steps,
                    "h": row.h,
                    "error_l2": row.error_l2,
                    "order_est": self.orders[i - 1] if i > 0 else None,
                    "runtime_s": row.runtime_s,
                    "bound": error_shape(row.h, ext, alpha_zero),
                }
            )
        return out


def _timed_run(problem, scheme, n_steps, repeats):
    model = problem.model()
    state0 = problem.initial_state(model.grid)
    best = math.inf
    final = None
    for _ in range(max(1, repeats)):
        start = time.perf_counter()
        final = integrate(scheme, model, state0, problem.t0, problem.T, n_steps)
        best = min(best, time.perf_counter() - start)
    return final, best


def _cell(args):
    problem, scheme, n_steps, repeats = args
    return _timed_run(problem, scheme, n_steps, repeats)


def _map(fn, items, jobs):
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _resolve_reference(problem, reference, cache_dir):
    if isinstance(reference, State):
        return reference, {"mode": "given"}
    ref_cfg = reference or ReferenceConfig()
    try:
        state = reference_solution(problem, ref_cfg.substeps_per_unit, ref_cfg.rule, ref_cfg.mode, cache_dir)
    except NumericalAbort as exc:
        raise NumericalAbort(f"reference {ref_cfg.describe()} failed: {exc}", exc.step_index) from exc
    except Exception as exc:
        raise RuntimeError(f"reference computation failed for {ref_cfg.describe()}: {exc}") from exc
    return state, ref_cfg.describe()


def run_convergence_study(
    problem, scheme, steps, norm_s=0.0, reference=None, jobs=1, repeats=1, cache_dir=None
):
    """Integrate ``problem`` once per entry of ``steps`` and measure errors against a reference.

    ``reference`` is a :class:`ReferenceConfig` (default resolution), or an
    already computed final :class:`State`.
    """
    scheme = SchemeId(scheme)
    steps = [int(n) for n in steps]
    if steps != sorted(steps) or len(set(steps)) != len(steps):
        raise ValueError(f"steps must be strictly increasing, got {steps}")
    if not isinstance(reference, State):
        ref_cfg = reference or ReferenceConfig()
        if ref_cfg.substeps(problem) < 100 * steps[-1]:
            raise ValueError(
                f"reference with {ref_cfg.substeps(problem)} substeps is coarser than 100x the finest step"
            )
    ref, descriptor = _resolve_reference(problem, reference, cache_dir)
    grid = problem.grid()
    results = _map(_cell, [(problem, scheme, n, repeats) for n in steps], jobs)
    rows = []
    for n, (final, runtime) in zip(steps, results):
        diff = final.psi - ref.psi
        row = StudyRow(n, (problem.T - problem.t0) / n, rms_norm(diff), max(runtime, 1e-9))
        if norm_s:
            row.error_hs = sobolev_norm(grid, diff, norm_s) / math.sqrt(grid.volume)
        rows.append(row)
    report = ConvergenceReport(scheme.value, problem, rows, descriptor, norm_s)
    report.orders = observed_orders(report.errors, report.hs)
    return report


# ---------------------------------------------------------------------------
# regime sweeps


@dataclass
class RegimeTable:
    scheme: str
    omegas: list
    hs: list
    n_steps: list
    errors: np.ndarray  # shape (len(omegas), len(hs))
    runtimes: np.ndarray
    bound: np.ndarray
    constant: float
    alpha_zero: bool
    modes: int
    omega_extrema: list

    @property
    def slopes(self):
        return [observed_orders(list(row), self.hs) for row in self.errors]

    def column_order(self, i):
        return estimate_order(self.errors[i], self.hs)

    def csv_rows(self):
        out = []
        for i, ext in enumerate(self.omega_extrema):
            slopes = self.slopes[i]
            for j, h in enumerate(self.hs):
                out.append(
                    {
                        "scheme": self.scheme,
                        "omega_min": ext[0] if ext else None,
                        "omega_max": ext[1] if ext else None,
                        "M": self.modes,
                        "n_steps": self.n_steps[j],
                        "h": h,
                        "error_l2": self.errors[i, j],
                        "order_est": slopes[j - 1] if j > 0 else None,
                        "runtime_s": self.runtimes[i, j],
                        "bound": self.bound[i, j],
                    }
                )
        return out


def regime_sweep(template, omegas, steps, scheme, reference=None, jobs=1, cache_dir=None):
    """Error table over frequencies x step sizes with the fitted theoretical bound.

    The bound per cell is ``C * (h^5 + E)`` (or ``C * E`` when ``alpha == 0``),
    ``E = min{h^3, h^2/w_min, h^5 w_max^2}``, with ``C`` fitted as the geometric
    mean of error/shape over the smallest-frequency column.
    """
    steps = sorted(int(n) for n in steps)
    omegas = sorted(omegas, key=lambda w: np.min(w))
    alpha_zero = template.alpha_is_zero
    errors = np.zeros((len(omegas), len(steps)))
    runtimes = np.zeros_like(errors)
    shape = np.zeros_like(errors)
    extrema = []
    hs = None
    for i, omega in enumerate(omegas):
        problem = template.with_omega(omega)
        report = run_convergence_study(problem, scheme, steps, reference=reference, jobs=jobs, cache_dir=cache_dir)
        hs = report.hs
        ext = problem.omega_extrema()
        extrema.append(ext)
        errors[i] = [r.error_l2 for r in report.rows]
        runtimes[i] = [r.runtime_s for r in report.rows]
        shape[i] = [error_shape(h, ext, alpha_zero) for h in hs]
    usable = errors[0] > NOISE_FLOOR
    if np.any(usable):
        constant = float(np.exp(np.mean(np.log(errors[0, usable] / shape[0, usable]))))
    else:
        constant = float("nan")
    return RegimeTable(
        SchemeId(scheme).value,
        [w if np.ndim(w) == 0 else list(w) for w in omegas],
        list(hs),
        steps,
        errors,
        runtimes,
        constant * shape,
        constant,
        alpha_zero,
        template.modes,
        extrema,
    )


# ---------------------------------------------------------------------------
# CSV


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return "%.*e" % (16, float(value))


def sort_rows(rows):
    """Deterministic order: scheme, then frequency, then h descending."""

    def key(row):
        w = row["omega_min"]
        return (row["scheme"], -1.0 if w is None else w, row["omega_max"] or -1.0, -row["h"])

    return sorted(rows, key=key)


def write_csv(path_or_file, rows):
    rows = sort_rows(rows)
    own = isinstance(path_or_file, (str, os.PathLike))
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    finally:
        if own:
            fh.close()
