"""Time integrators for the linear Klein-Gordon equation with oscillatory potentials."""

from .expr import Expression, ExpressionError
from .forcing import ForcingTerm, OscComponent, PhaseForm, eval_f, freq_extrema, integral_F, integral_Fcal
from .harness import (
    ConvergenceReport,
    Problem,
    ReferenceConfig,
    RegimeTable,
    estimate_order,
    reference_solution,
    regime_sweep,
    run_convergence_study,
)
from .integrator import (
    Model,
    NumericalAbort,
    SchemeId,
    State,
    integrate,
    reference_propagate,
    step_gamma1,
    step_gamma2,
    step_reference,
)
from .matfun import cosh_sqrt, inner_factor, sinhc_sqrt
from .spectral import SpectralGrid, apply_laplacian, make_grid, sobolev_norm

__version__ = "0.1.0"
