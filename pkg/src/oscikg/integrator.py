"""Time steppers for the semidiscrete Klein-Gordon system z' = A(t) z.

With ``z = (psi, dpsi)`` and ``A(t) = [[0, 1], [c*Lap + f(t), 0]]`` one step of
either scheme is the product

    outer(Fcal) . inner-splitting(D, F) . outer(Fcal)

where ``D = h*c*Lap``, ``F = int f`` and ``Fcal = 1/2 int (s - h/2) f`` over the
step.  The inner exponential ``exp([[0, h], [D + F, 0]])`` is replaced by a
five-factor compact splitting with a ``D**2`` correction in the middle factor.
Every factor is either diagonal on the grid or a Fourier multiplier, so a
step costs a handful of FFTs and no complex arithmetic.
"""

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .forcing import step_quadratures
from .matfun import inner_factor

# exp(700) is close to the double overflow threshold
OVERFLOW_GUARD = 700.0
DENSE_LIMIT = {1: 128, 2: 32 * 32}


class NumericalAbort(ArithmeticError):
    """A step produced a non-finite state or an overflowing exponential."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class SchemeId(str, enum.Enum):
    GAMMA1 = "gamma1"
    GAMMA2 = "gamma2"
    REFERENCE = "reference"


@dataclass(frozen=True)
class Model:
    """The semidiscrete equation ``psi_tt = c Lap psi + f psi`` on ``grid``."""

    grid: object
    forcing: object
    laplacian_scale: float = 1.0


@dataclass(frozen=True)
class State:
    psi: np.ndarray
    dpsi: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=float)
        dpsi = np.asarray(self.dpsi, dtype=float)
        if psi.shape != dpsi.shape:
            raise ValueError(f"psi {psi.shape} and dpsi {dpsi.shape} differ in shape")
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "dpsi", dpsi)
        object.__setattr__(self, "t", float(self.t))

    @property
    def is_finite(self):
        return bool(np.all(np.isfinite(self.psi)) and np.all(np.isfinite(self.dpsi)))

    def stacked(self):
        return np.concatenate([self.psi.ravel(), self.dpsi.ravel()])

    def __add__(self, other):
        return State(self.psi + other.psi, self.dpsi + other.dpsi, self.t)

    def __sub__(self, other):
        return State(self.psi - other.psi, self.dpsi - other.dpsi, self.t)

    def __rmul__(self, a):
        return State(a * self.psi, a * self.dpsi, self.t)


@dataclass(frozen=True)
class StepContext:
    """Everything one step from ``t_k`` to ``t_k + h`` needs."""

    model: Model
    t_k: float
    h: float
    F: object
    Fcal: object

    @property
    def grid(self):
        return self.model.grid

    @property
    def forcing(self):
        return self.model.forcing

    @property
    def D_scale(self):
        """The scalar multiplying the Laplacian in ``D``."""
        return self.h * self.model.laplacian_scale


def make_context(model, t_k, h):
    F, Fcal = step_quadratures(model.forcing, model.grid, t_k, h)
    return StepContext(model, float(t_k), float(h), F, Fcal)


def outer_exponential(state, Fcal, sign=1):
    """``psi <- exp(-sign*Fcal) psi``, ``dpsi <- exp(sign*Fcal) dpsi``."""
    values = np.asarray(getattr(Fcal, "values", Fcal))
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if np.max(np.abs(values), initial=0.0) > OVERFLOW_GUARD:
        raise NumericalAbort(f"|Fcal| = {np.max(np.abs(values)):.3g} would overflow exp")
    e = np.exp(sign * values)
    return State(state.psi / e, state.dpsi * e, state.t)


def _outer(q, p, Fcal):
    if np.max(np.abs(Fcal), initial=0.0) > OVERFLOW_GUARD:
        raise NumericalAbort(f"|Fcal| = {np.max(np.abs(Fcal)):.3g} would overflow exp")
    e = np.exp(Fcal)
    return q / e, p * e


def step_gamma1(state, ctx):
    """One step of the scheme that keeps ``F`` inside the hyperbolic half-step factors."""
    grid = ctx.grid
    h = ctx.h
    D = ctx.D_scale
    lap = grid.symbol
    edge = (D / 6.0) * lap
    # (2/3) D + (2/72) h D^2 as one Fourier multiplier
    middle = (2.0 * D / 3.0) * lap + (h * D * D / 36.0) * lap * lap
    inner = inner_factor(ctx.F.values, h)
    Fcal = ctx.Fcal.values

    q0, p0 = _outer(state.psi, state.dpsi, Fcal)
    p1 = grid.apply_symbol(q0, edge) + p0
    q1, p2 = inner.apply(q0, p1)
    p3 = grid.apply_symbol(q1, middle) + p2
    q2, p4 = inner.apply(q1, p3)
    p5 = grid.apply_symbol(q2, edge) + p4
    q3, p6 = _outer(q2, p5, Fcal)
    return State(q3, p6, ctx.t_k + h)


def step_gamma2(state, ctx):
    """One step of the scheme that shears with the full ``D + F`` operator."""
    grid = ctx.grid
    h = ctx.h
    D = ctx.D_scale
    lap = grid.symbol
    F = ctx.F.values
    Fcal = ctx.Fcal.values

    def kick(u):
        # (D + F) u, with D a Fourier multiplier and F pointwise
        return grid.apply_symbol(u, D * lap) + F * u

    q0, p0 = _outer(state.psi, state.dpsi, Fcal)
    p1 = kick(q0) / 6.0 + p0
    q1 = q0 + 0.5 * h * p1
    r = kick(q1)
    p2 = (2.0 / 3.0) * r + (h / 36.0) * kick(r) + p1
    q2 = q1 + 0.5 * h * p2
    p3 = kick(q2) / 6.0 + p2
    q3, p4 = _outer(q2, p3, Fcal)
    return State(q3, p4, ctx.t_k + h)


# ---------------------------------------------------------------------------
# reference oracle


def _gauss_quadratures(forcing, grid, t0, dt, panels, order=8):
    """``int f`` and ``1/2 int (s - dt/2) f`` over ``[t0, t0+dt]`` by composite Gauss-Legendre."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, dt, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    s = (0.5 * (edges[1:] + edges[:-1])[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    values = forcing.evaluate(tuple(c[..., None] for c in grid.coords), t0 + s)
    F = values @ weights
    Fcal = 0.5 * (values @ (weights * (s - 0.5 * dt)))
    return F, Fcal


class _DenseExp:
    def __init__(self, model):
        grid = model.grid
        limit = DENSE_LIMIT[grid.dim]
        if grid.size > limit:
            raise ValueError(f"dense reference limited to {limit} nodes, grid has {grid.size}")
        self.n = grid.size
        self.L = model.laplacian_scale * grid.laplacian_matrix()

    def __call__(self, z, dt, diag_q, offdiag_F):
        n = self.n
        omega = np.zeros((2 * n, 2 * n))
        omega[:n, n:] = dt * np.eye(n)
        omega[n:, :n] = dt * self.L + np.diag(offdiag_F)
        omega[:n, :n] = np.diag(diag_q)
        omega[n:, n:] = np.diag(-diag_q)
        return scipy.linalg.expm(omega) @ z


class _TaylorExp:
    """``exp(Omega) z`` by a scaled Taylor series, matrix free."""

    def __init__(self, model):
        self.grid = model.grid
        self.lap = model.laplacian_scale * model.grid.symbol
        self.kmax = model.laplacian_scale * model.grid.kappa_max_sq
        self.shape = model.grid.shape

    def __call__(self, z, dt, diag_q, offdiag_F):
        n = z.size // 2
        q = z[:n].reshape(self.shape)
        p = z[n:].reshape(self.shape)
        dq = diag_q.reshape(self.shape)
        Fv = offdiag_F.reshape(self.shape)
        norm = max(np.max(np.abs(dq)) + abs(dt), dt * self.kmax + np.max(np.abs(Fv)) + np.max(np.abs(dq)))
        parts = max(1, int(math.ceil(norm / 0.5)))
        dq, Fv, tau = dq / parts, Fv / parts, dt / parts
        for _ in range(parts):
            tq, tp = q, p
            sq, sp = q.copy(), p.copy()
            for j in range(1, 40):
                nq = dq * tq + tau * tp
                np_ = self.grid.apply_symbol(tq, tau * self.lap) + Fv * tq - dq * tp
                tq, tp = nq / j, np_ / j
                sq += tq
                sp += tp
                if max(np.max(np.abs(tq)), np.max(np.abs(tp))) < 1e-18 * max(
                    np.max(np.abs(sq)), np.max(np.abs(sp)), 1e-300
                ):
                    break
            q, p = sq, sp
        return np.concatenate([q.ravel(), p.ravel()])


def _exponentiator(model, mode):
    if mode == "auto":
        mode = "dense" if model.grid.size <= DENSE_LIMIT[model.grid.dim] // 2 else "matrix_free"
    if mode == "dense":
        return _DenseExp(model)
    if mode == "matrix_free":
        return _TaylorExp(model)
    raise ValueError(f"unknown reference mode {mode!r}")


def reference_propagate(model, state, t_end, substeps, rule="midpoint", mode="auto", panels=None):
    """Integrate from ``state.t`` to ``t_end`` with ``substeps`` exponential micro-steps.

    ``rule='midpoint'`` uses ``exp(dt A(t + dt/2))`` (second order).
    ``rule='magnus4'`` uses ``exp(int A - 1/2 int int [A, A])`` with the
    integrals taken by composite Gauss-Legendre (fourth order, and accurate
    for ``dt`` far above the forcing period).
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    expo = _exponentiator(model, mode)
    t0 = state.t
    dt = (t_end - t0) / substeps
    forcing = model.forcing
    grid = model.grid
    z = state.stacked()
    zero = np.zeros(grid.size)
    if panels is None:
        freqs = forcing.frequencies()
        wmax = freqs[-1] if freqs else 0.0
        panels = max(1, int(math.ceil(abs(wmax * dt))))
    static = forcing.is_autonomous and isinstance(expo, _DenseExp)
    cached = None
    for i in range(substeps):
        t = t0 + i * dt
        if rule == "midpoint":
            Fv = dt * forcing.evaluate(grid.coords, t + 0.5 * dt).ravel()
            dq = zero
        elif rule == "magnus4":
            Fv, Fcal = _gauss_quadratures(forcing, grid, t, dt, panels)
            Fv = Fv.ravel()
            dq = -2.0 * Fcal.ravel()
        else:
            raise ValueError(f"unknown reference rule {rule!r}")
        if static:
            if cached is None:
                n = grid.size
                omega = np.zeros((2 * n, 2 * n))
                omega[:n, n:] = dt * np.eye(n)
                omega[n:, :n] = dt * expo.L + np.diag(Fv)
                cached = scipy.linalg.expm(omega)
            z = cached @ z
        else:
            z = expo(z, dt, dq, Fv)
        if not np.all(np.isfinite(z)):
            raise NumericalAbort("reference produced non-finite values", step_index=i)
    n = grid.size
    return State(z[:n].reshape(grid.shape), z[n:].reshape(grid.shape), t_end)


def step_reference(state, ctx, substeps, rule="midpoint", mode="auto"):
    """One macro step of length ``ctx.h`` by the exponential reference rule."""
    return reference_propagate(ctx.model, state, ctx.t_k + ctx.h, substeps, rule=rule, mode=mode)


STEPPERS = {SchemeId.GAMMA1: step_gamma1, SchemeId.GAMMA2: step_gamma2}


def integrate(scheme, model, state0, t0, T, n_steps, reference_substeps=64, reference_rule="magnus4"):
    """Advance ``state0`` from ``t0`` to ``T`` in ``n_steps`` uniform steps."""
    scheme = SchemeId(scheme)
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    t0 = float(t0)
    T = float(T)
    h = (T - t0) / n_steps
    state = replace(state0, t=t0)
    for k in range(n_steps):
        # t_k from the integer index: no accumulated drift in the phases
        t_k = t0 + k * h
        ctx = make_context(model, t_k, h)
        if scheme is SchemeId.REFERENCE:
            state = step_reference(state, ctx, reference_substeps, rule=reference_rule)
        else:
            state = STEPPERS[scheme](state, ctx)
        if not state.is_finite:
            raise NumericalAbort(f"non-finite state after step {k}", step_index=k)
    return replace(state, t=T)
