"""Even entire functions of a real argument used by the Gamma1 inner factor.

``cosh_sqrt(z) = cosh(sqrt(z))`` and ``sinhc_sqrt(z) = sinh(sqrt(z))/sqrt(z)``
are power series in ``z``, so they are real and smooth for either sign of
``z``: for ``z < 0`` they become ``cos(sqrt(-z))`` and ``sin(sqrt(-z))/sqrt(-z)``.
"""

from dataclasses import dataclass
from math import factorial

import numpy as np

# |z| below this uses the power series
BRANCH_SWITCH = 0.25
_TERMS = 12
_COSH_COEFFS = np.array([1.0 / factorial(2 * k) for k in range(_TERMS)])
_SINHC_COEFFS = np.array([1.0 / factorial(2 * k + 1) for k in range(_TERMS)])


def _series(z, coeffs):
    out = np.full_like(z, coeffs[-1])
    for c in coeffs[-2::-1]:
        out = out * z + c
    return out


def _evaluate(z, small, positive, negative):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    lo = np.abs(z) < BRANCH_SWITCH
    pos = ~lo & (z > 0)
    neg = ~lo & (z < 0)
    out[lo] = small(z[lo])
    out[pos] = positive(np.sqrt(z[pos]))
    out[neg] = negative(np.sqrt(-z[neg]))
    return out if out.ndim else float(out)


def cosh_sqrt(z):
    """``sum z^k / (2k)!`` for real ``z`` (scalar or array)."""
    return _evaluate(z, lambda w: _series(w, _COSH_COEFFS), np.cosh, np.cos)


def sinhc_sqrt(z):
    """``sum z^k / (2k+1)!`` for real ``z`` (scalar or array)."""
    return _evaluate(
        z,
        lambda w: _series(w, _SINHC_COEFFS),
        lambda r: np.sinh(r) / r,
        lambda r: np.sin(r) / r,
    )


@dataclass(frozen=True)
class InnerFactorEntries:
    """Pointwise entries of ``exp([[0, h/2], [F/2, 0]]) = [[c, s], [sf, c]]``."""

    c: np.ndarray
    s: np.ndarray
    sf: np.ndarray

    def apply(self, q, p):
        return self.c * q + self.s * p, self.sf * q + self.c * p


def inner_factor(F, h):
    """Entries of the half-step potential exponential for the field ``F``.

    ``F`` is either a :class:`~oscikg.forcing.QuadField` or a bare array.
    With ``z = h F / 4`` the entries are ``cosh_sqrt(z)``, ``(h/2) sinhc_sqrt(z)``
    and ``(F/2) sinhc_sqrt(z)``.
    """
    F = np.asarray(getattr(F, "values", F), dtype=float)
    z = 0.25 * h * F
    sh = sinhc_sqrt(z)
    return InnerFactorEntries(c=np.asarray(cosh_sqrt(z)), s=0.5 * h * sh, sf=0.5 * F * sh)
