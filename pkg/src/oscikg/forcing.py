"""The input term f(x, t) = alpha(x, t) + sum_n a_n(x, t) e^{i w_n t} and its time integrals.

Amplitudes are callables taking the grid coordinates followed by ``t``
(``a(x, t)`` in 1D, ``a(x, y, t)`` in 2D) or :class:`~oscikg.expr.Expression`
objects.  Internally every component is stored in real form
``a(x, t) cos(w t)`` or ``a(x, t) sin(w t)``; conjugate pairs of complex
exponentials are folded into cosines at construction.

The step integrals

    F_k    = int_0^h f(t_k + s) ds
    Fcal_k = 1/2 int_0^h (s - h/2) f(t_k + s) ds

are computed with a Filon rule: each slow amplitude is replaced by its cubic
interpolant at four Chebyshev nodes of ``[t_k, t_k + h]`` and the product with
the oscillatory kernel is integrated exactly.  The error therefore depends on
the smoothness of the amplitudes only, not on the frequencies.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .expr import Expression


class PhaseForm(str, enum.Enum):
    COS = "cos"
    SIN = "sin"
    CEXP = "cexp"


@dataclass(frozen=True)
class OscComponent:
    """One oscillatory term ``amplitude * phase(frequency * t)``."""

    amplitude: object
    frequency: float
    form: PhaseForm = PhaseForm.COS

    def __post_init__(self):
        form = PhaseForm(self.form)
        object.__setattr__(self, "form", form)
        object.__setattr__(self, "frequency", float(self.frequency))
        if isinstance(self.amplitude, str):
            object.__setattr__(self, "amplitude", Expression(self.amplitude))
        if not np.isfinite(self.frequency):
            raise ValueError("frequency must be finite")
        if form is PhaseForm.CEXP:
            if abs(self.frequency) < 1:
                raise ValueError(f"complex exponential frequencies need |w| >= 1, got {self.frequency}")
        elif self.frequency < 0:
            raise ValueError(f"cosine/sine frequencies must be >= 0, got {self.frequency}")


def _as_callable(fn):
    if isinstance(fn, (str, int, float)):
        return Expression(fn)
    if not callable(fn):
        raise TypeError(f"expected a callable or expression, got {fn!r}")
    return fn


def _same_amplitude(a, b):
    return a is b or (isinstance(a, Expression) and a == b)


def _canonical(components):
    """Fold conjugate e^{+-iwt} pairs into cosines; reject unpaired ones."""
    out = []
    pending = []
    for comp in components:
        if comp.form is not PhaseForm.CEXP:
            out.append((comp.amplitude, comp.frequency, comp.form))
            continue
        for i, other in enumerate(pending):
            if other.frequency == -comp.frequency and _same_amplitude(other.amplitude, comp.amplitude):
                del pending[i]
                amp = comp.amplitude
                out.append((_Scaled(amp, 2.0), abs(comp.frequency), PhaseForm.COS))
                break
        else:
            pending.append(comp)
    if pending:
        freqs = ", ".join(f"{c.frequency:g}" for c in pending)
        raise ValueError(f"complex exponential components without conjugate partner (w = {freqs})")
    return tuple(out)


class _Scaled:
    def __init__(self, fn, factor):
        self.fn = fn
        self.factor = factor

    def __call__(self, *args):
        return self.factor * np.asarray(_invoke(self.fn, args[:-1], args[-1]))

    @property
    def depends_on_time(self):
        return getattr(self.fn, "depends_on_time", True)


class ForcingTerm:
    """Input term of the Klein-Gordon equation.

    Parameters
    ----------
    alpha : callable or str, optional
        Slow part; ``None`` means zero.
    components : sequence of OscComponent
    """

    def __init__(self, alpha=None, components=()):
        self.alpha = None if alpha is None else _as_callable(alpha)
        if isinstance(self.alpha, Expression) and self.alpha.is_zero:
            self.alpha = None
        self.components = tuple(components)
        for comp in self.components:
            if not isinstance(comp, OscComponent):
                raise TypeError(f"components must be OscComponent, got {comp!r}")
        self.terms = _canonical(self.components)

    @property
    def N(self):
        return len(self.components)

    @property
    def has_alpha(self):
        return self.alpha is not None

    @property
    def is_autonomous(self):
        """True when f does not depend on t (so its step integrals are trivial)."""
        if any(w != 0.0 for _, w, _ in self.terms):
            return False
        fns = [self.alpha] + [a for a, _, _ in self.terms]
        return all(not getattr(fn, "depends_on_time", True) for fn in fns if fn is not None)

    def frequencies(self):
        return sorted({abs(c.frequency) for c in self.components})

    def evaluate(self, coords, t):
        """Sample f on ``coords`` (tuple of coordinate arrays) at time(s) ``t``."""
        t = np.asarray(t, dtype=float)
        shape = np.broadcast(*coords, t).shape
        out = np.zeros(shape)
        if self.alpha is not None:
            out = out + _call(self.alpha, coords, t)
        for amp, w, form in self.terms:
            phase = np.cos(w * t) if form is PhaseForm.COS else np.sin(w * t)
            out = out + _call(amp, coords, t) * phase
        return out

    def __repr__(self):
        return f"ForcingTerm(alpha={self.alpha!r}, N={self.N})"


def _invoke(fn, coords, t):
    if isinstance(fn, Expression):
        # expressions take named coordinates; callables take them positionally
        return fn(**dict(zip("xy", coords)), t=t)
    return fn(*coords, t)


def _call(fn, coords, t):
    value = np.asarray(_invoke(fn, coords, t), dtype=float)
    if not np.all(np.isfinite(value)):
        raise ValueError(f"amplitude {fn!r} is not finite at t={np.max(t)!r}")
    return value


def eval_f(forcing, x, t):
    """Value of f at point ``x`` (scalar, or tuple ``(x, y)`` in 2D) and time ``t``."""
    coords = tuple(x) if isinstance(x, tuple) else (x,)
    value = forcing.evaluate(tuple(np.asarray(c, dtype=float) for c in coords), t)
    return float(value) if value.ndim == 0 else value


def freq_extrema(forcing):
    """``(w_min, w_max)`` over the oscillatory components, or ``None`` without any."""
    freqs = forcing.frequencies()
    if not freqs:
        return None
    return freqs[0], freqs[-1]


# ---------------------------------------------------------------------------
# Filon rule

# four Chebyshev nodes on [0, 1]
CHEB_NODES = 0.5 * (1.0 - np.cos((2 * np.arange(4) + 1) * np.pi / 8))
_VANDER_INV = np.linalg.inv(np.vander(CHEB_NODES, 4, increasing=True))
MOMENT_SWITCH = 1.0


def unit_moments(theta, jmax=4):
    """``nu_j = int_0^1 u^j exp(i theta u) du`` for ``j = 0..jmax``.

    Upward recurrence for ``|theta| >= 1``; for smaller arguments it loses
    digits, so the Taylor series in ``theta`` is summed instead.
    """
    theta = float(theta)
    nu = np.empty(jmax + 1, dtype=complex)
    if abs(theta) < MOMENT_SWITCH:
        j = np.arange(jmax + 1)
        term = np.ones(jmax + 1, dtype=complex)
        total = 1.0 / (j + 1)
        k = 0
        while True:
            k += 1
            term = term * (1j * theta) / k
            add = term / (j + k + 1)
            total = total + add
            if np.max(np.abs(add)) < 1e-17 * np.max(np.abs(total)):
                break
        nu[:] = total
        return nu
    e = complex(math.cos(theta), math.sin(theta))
    it = 1j * theta
    nu[0] = (e - 1.0) / it
    for j in range(1, jmax + 1):
        nu[j] = (e - j * nu[j - 1]) / it
    return nu


def filon_weights(omega, h):
    """Node weights for the plain and centred Filon integrals.

    Returns ``(w, wc)``, complex arrays of length 4 with

        int_0^h P(s) e^{i omega s} ds           = sum_i w[i]  a_i
        1/2 int_0^h (s - h/2) P(s) e^{i omega s} ds = sum_i wc[i] a_i

    where ``P`` interpolates the values ``a_i`` at ``s_i = h * CHEB_NODES[i]``.
    """
    nu = unit_moments(omega * h, 4)
    plain = h * nu[:4]
    centred = 0.5 * h * h * (nu[1:] - 0.5 * nu[:4])
    return plain @ _VANDER_INV, centred @ _VANDER_INV


@dataclass(frozen=True)
class QuadField:
    """A step integral sampled on the grid."""

    values: np.ndarray
    t_k: float
    h: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("quadrature field is not finite")


def _node_values(fn, grid, times):
    return np.stack([_call(fn, grid.coords, t) for t in times])


def _contract(weights, samples):
    return np.tensordot(weights, samples, axes=(0, 0))


def _centred_slow(wc0, samples):
    # the centred weights are odd about the midpoint; pairing mirrored samples
    # makes the result exactly zero for amplitudes constant in time
    w = 0.5 * (wc0.real[:2] - wc0.real[:1:-1])
    return w[0] * (samples[0] - samples[3]) + w[1] * (samples[1] - samples[2])


def step_quadratures(forcing, grid, t_k, h):
    """Both Filon integrals ``(F_k, Fcal_k)`` for the step ``[t_k, t_k + h]``.

    ``h`` may be negative (backward steps); only ``h == 0`` is rejected.
    """
    t_k = float(t_k)
    h = float(h)
    if h == 0.0 or not np.isfinite(h):
        raise ValueError(f"step size must be finite and nonzero, got {h}")
    times = t_k + h * CHEB_NODES
    F = np.zeros(grid.shape)
    Fcal = np.zeros(grid.shape)
    w0, wc0 = filon_weights(0.0, h)
    if forcing.alpha is not None:
        samples = _node_values(forcing.alpha, grid, times)
        F += _contract(w0.real, samples)
        Fcal += _centred_slow(wc0, samples)
    for amp, omega, form in forcing.terms:
        samples = _node_values(amp, grid, times)
        if omega == 0.0:
            if form is PhaseForm.COS:
                F += _contract(w0.real, samples)
                Fcal += _centred_slow(wc0, samples)
            continue
        w, wc = filon_weights(omega, h)
        shift = complex(math.cos(omega * t_k), math.sin(omega * t_k))
        w = shift * w
        wc = shift * wc
        if form is PhaseForm.COS:
            F += _contract(w.real, samples)
            Fcal += _contract(wc.real, samples)
        else:
            F += _contract(w.imag, samples)
            Fcal += _contract(wc.imag, samples)
    return QuadField(F, t_k, h), QuadField(Fcal, t_k, h)


def integral_F(forcing, grid, t_k, h):
    """``F_k(x) = int_0^h f(x, t_k + s) ds`` on the grid."""
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    return step_quadratures(forcing, grid, t_k, h)[0]


def integral_Fcal(forcing, grid, t_k, h):
    """``Fcal_k(x) = 1/2 int_0^h (s - h/2) f(x, t_k + s) ds`` on the grid."""
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    return step_quadratures(forcing, grid, t_k, h)[1]


# ---------------------------------------------------------------------------
# nested oscillatory integrals (test oracle)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)


def composite_gauss(fn, lo, hi, panels, order=20):
    """Composite Gauss-Legendre rule for a vectorised (possibly complex) ``fn``."""
    if order == 20:
        x, w = _GL_NODES, _GL_WEIGHTS
    else:
        x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    pts = mid + half * x[None, :]
    return np.sum(fn(pts) * (half * w[None, :]))


def nested_osc_integral(a, omega, h, m, k, panels=None):
    """``int_0^h int_0^{t_1} ... int_0^{t_{m-1}} a(t_k) e^{i omega t_k} dt_m ... dt_1``.

    The integrand depends on ``t_k`` only, so the other ``m - 1`` variables
    integrate to simplex volumes and the nested integral collapses to

        int_0^h a(t) e^{i omega t} (h - t)^{k-1} t^{m-k} / ((k-1)! (m-k)!) dt,

    evaluated by composite Gauss-Legendre with panels narrower than the
    oscillation period.  Meant as a reference, not for speed.
    """
    if not 1 <= m <= 4:
        raise ValueError(f"nesting depth must be between 1 and 4, got {m}")
    if not 1 <= k <= m:
        raise ValueError(f"index k must satisfy 1 <= k <= m, got k={k}, m={m}")
    norm = math.factorial(k - 1) * math.factorial(m - k)
    if panels is None:
        panels = max(4, int(math.ceil(abs(omega * h) / math.pi)) * 2)

    def integrand(t):
        return np.asarray(a(t)) * np.exp(1j * omega * t) * (h - t) ** (k - 1) * t ** (m - k) / norm

    return complex(composite_gauss(integrand, 0.0, h, panels))
