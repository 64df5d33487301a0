"""Built-in problem configurations for the five benchmark equations."""

_TWO_BUMPS = "exp(-0.5*(x-3)**2) + exp(-0.5*(x+3)**2)"
_FOUR_BUMPS = _TWO_BUMPS + " + exp(-0.5*(y-3)**2) + exp(-0.5*(y+3)**2)"
_PI_BOX = [-3.141592653589793, 3.141592653589793]


def _num(v):
    return repr(float(v))


def example1(epsilon=0.1, omega=100.0):
    """``psi_tt = psi_xx - (1 + eps cos(w t)) x^2 psi`` on [-10, 10]."""
    return {
        "domain": [-10.0, 10.0],
        "modes": 200,
        "dim": 1,
        "laplacian_scale": 1.0,
        "forcing": {
            "alpha": "-x**2",
            "components": [{"amplitude": f"-{_num(epsilon)}*x**2", "omega": float(omega), "form": "cos"}],
        },
        "psi0": "exp(-x**2/2)",
        "phi0": "0",
        "horizon": [0.0, 1.0],
    }


def example2(omega=500.0):
    """Semiclassical scaling: ``1e-3 psi_xx - 1e3 (1 + cos(w t)/5) x^2 psi``."""
    return {
        "domain": list(_PI_BOX),
        "modes": 200,
        "dim": 1,
        "laplacian_scale": 1e-3,
        "forcing": {
            "alpha": "-1000*x**2",
            "components": [{"amplitude": "-200*x**2", "omega": float(omega), "form": "cos"}],
        },
        "psi0": _TWO_BUMPS,
        "phi0": "0",
        "horizon": [0.0, 1.0],
    }


def example3(omega=100.0, sigma=1.0):
    """Two dimensions: ``lap psi - sigma (1 + cos(w t)/5) x^2 y^2 psi``."""
    s = _num(sigma)
    return {
        "domain": list(_PI_BOX),
        "modes": 32,
        "dim": 2,
        "laplacian_scale": 1.0,
        "forcing": {
            "alpha": f"-{s}*x**2*y**2",
            "components": [{"amplitude": f"-{s}/5*x**2*y**2", "omega": float(omega), "form": "cos"}],
        },
        "psi0": _FOUR_BUMPS,
        "phi0": "0",
        "horizon": [0.0, 1.0],
    }


def example4(omega=1000.0):
    """Decaying envelope: ``psi_xx - (1 + cos(w t)/5) x^2 psi / (1 + t^2)``."""
    return {
        "domain": list(_PI_BOX),
        "modes": 64,
        "dim": 1,
        "laplacian_scale": 1.0,
        "forcing": {
            "alpha": "-x**2/(1+t**2)",
            "components": [{"amplitude": "-x**2/(5*(1+t**2))", "omega": float(omega), "form": "cos"}],
        },
        "psi0": _TWO_BUMPS,
        "phi0": "0",
        "horizon": [0.0, 1.0],
    }


def example5():
    """Six frequencies ``10^0 .. 10^5``: ``psi_xx - sum_k (1 + cos(10^k t)) x^2 psi``."""
    return {
        "domain": list(_PI_BOX),
        "modes": 64,
        "dim": 1,
        "laplacian_scale": 1.0,
        "forcing": {
            "alpha": "-6*x**2",
            "components": [
                {"amplitude": "-x**2", "omega": float(10**k), "form": "cos"} for k in range(6)
            ],
        },
        "psi0": _TWO_BUMPS,
        "phi0": "0",
        "horizon": [0.0, 1.0],
    }


PRESETS = {
    "example1": example1,
    "example2": example2,
    "example3": example3,
    "example4": example4,
    "example5": example5,
}

# default steps keep h*kappa_max below the splitting's stability limit (~3.4)
_RUN_DEFAULTS = {
    "example1": {"steps": [10, 20, 40, 80], "substeps_per_unit": 4000},
    "example2": {"steps": [1000, 2000, 5000, 10000], "substeps_per_unit": 80000},
    "example3": {"steps": [16, 32, 64], "substeps_per_unit": 4000},
    "example4": {"steps": [10, 20, 40, 80], "substeps_per_unit": 8000},
    "example5": {"steps": [100, 200, 400, 800], "substeps_per_unit": 80000},
}


def preset_config(name, **overrides):
    """Full run configuration for a named preset.

    ``overrides`` may hold ``epsilon``, ``omega`` or ``sigma`` where the
    equation has that parameter; unsupported ones raise ``KeyError``.
    """
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    params = {k: v for k, v in overrides.items() if v is not None}
    try:
        problem = PRESETS[name](**params)
    except TypeError:
        raise KeyError(f"preset {name} does not take parameters {sorted(params)}") from None
    defaults = _RUN_DEFAULTS[name]
    return {
        "problem": problem,
        "schemes": ["gamma1", "gamma2"],
        "steps": list(defaults["steps"]),
        "norm_s": 0.0,
        "reference": {"substeps_per_unit": defaults["substeps_per_unit"], "rule": "magnus4", "mode": "auto"},
        "output": f"{name}.csv",
        "seed": 0,
        "jobs": 1,
    }

