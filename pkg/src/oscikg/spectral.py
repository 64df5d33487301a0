"""Fourier spectral collocation on periodic tensor grids (1D and 2D)."""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform periodic grid on ``[a, b)^dim`` with ``M`` nodes per axis.

    Fields are plain numpy arrays of shape :attr:`shape` (``(M,)`` or
    ``(M, M)`` with ``indexing='ij'``, i.e. row-major in ``(x, y)``).
    """

    a: float
    b: float
    M: int
    dim: int = 1
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    coords: tuple = field(init=False, repr=False, compare=False)
    symbol: np.ndarray = field(init=False, repr=False, compare=False)
    kappa_sq: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not self.b > self.a:
            raise ValueError(f"need b > a, got [{self.a}, {self.b})")
        if int(self.M) != self.M or self.M % 2:
            raise ValueError(f"M must be an even integer, got {self.M}")
        object.__setattr__(self, "M", int(self.M))
        if self.M < 8:
            raise ValueError(f"M must be at least 8, got {self.M}")
        length = self.b - self.a
        nodes = self.a + np.arange(self.M) * (length / self.M)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "coords", tuple(np.meshgrid(*([nodes] * self.dim), indexing="ij")))

        full = 2 * np.pi * np.fft.fftfreq(self.M, d=length / self.M)
        half = 2 * np.pi * np.fft.rfftfreq(self.M, d=length / self.M)
        # Laplacian is even in kappa: the Nyquist mode keeps -kappa_N^2, no zeroing needed
        if self.dim == 1:
            ksq_r = half**2
            ksq = full**2
        else:
            ksq_r = full[:, None] ** 2 + half[None, :] ** 2
            ksq = full[:, None] ** 2 + full[None, :] ** 2
        object.__setattr__(self, "symbol", -ksq_r)
        object.__setattr__(self, "kappa_sq", ksq)

    @property
    def shape(self):
        return (self.M,) * self.dim

    @property
    def size(self):
        return self.M**self.dim

    @property
    def length(self):
        return self.b - self.a

    @property
    def volume(self):
        return self.length**self.dim

    @property
    def kappa_max_sq(self):
        return float(self.kappa_sq.max())

    def check(self, u):
        u = np.asarray(u)
        if u.shape != self.shape:
            if u.size == self.size:
                return u.reshape(self.shape)
            raise ValueError(f"field of shape {u.shape} does not match grid shape {self.shape}")
        return u

    def apply_symbol(self, u, symbol):
        """Apply the Fourier multiplier ``symbol`` (in rfftn layout) to ``u``."""
        u = self.check(u)
        axes = tuple(range(self.dim))
        return np.fft.irfftn(symbol * np.fft.rfftn(u, axes=axes), s=self.shape, axes=axes)

    def laplacian_matrix(self):
        """Dense spectral Laplacian acting on row-major flattened fields."""
        eye = np.eye(self.size).reshape((self.size,) + self.shape)
        axes = tuple(range(1, self.dim + 1))
        cols = np.fft.irfftn(self.symbol * np.fft.rfftn(eye, axes=axes), s=self.shape, axes=axes)
        return cols.reshape(self.size, self.size).T


def make_grid(a, b, M, dim=1):
    """Build a :class:`SpectralGrid`; odd ``M`` or ``M < 8`` raise ``ValueError``."""
    return SpectralGrid(float(a), float(b), M, dim)


def apply_laplacian(grid, u):
    return grid.apply_symbol(u, grid.symbol)


def sobolev_norm(grid, u, s=0.0):
    """H^s norm on the torus, normalised so that ``s=0`` is the continuous L2 norm."""
    u = grid.check(u)
    if not np.isfinite(s):
        raise ValueError("Sobolev index must be finite")
    uhat = np.fft.fftn(u)
    weight = (1.0 + grid.kappa_sq) ** s
    total = np.sum(weight * np.abs(uhat) ** 2)
    return float(np.sqrt(total * grid.volume) / grid.size)


def rms_norm(u):
    """Discrete l2 norm scaled by 1/sqrt(node count)."""
    u = np.asarray(u)
    return float(np.sqrt(np.mean(u * u)))
