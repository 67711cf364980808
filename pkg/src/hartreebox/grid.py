"""Periodic-box discretization with spectral differentiation and discrete norms.

The domain is the periodic box [-L/2, L/2)^d sampled on n points per axis
(n a power of two). All discrete norms carry the cell-volume factor so they
approximate the corresponding continuum integrals, which keeps measured
decay rates comparable across grids.

Wavenumbers follow the symmetric FFT convention with the Nyquist mode on
the negative side, i.e. k = 2*pi*m/L for m = 0, 1, ..., n/2-1, -n/2, ..., -1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import GridMismatchError, InvalidParameterError

__all__ = [
    "Grid",
    "WaveFunction",
    "gaussian_packet",
    "l2_norm",
    "sobolev_norm",
    "weighted_norm",
    "lp_norm",
    "inner",
]


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [-L/2, L/2)^d with d in {1, 2, 3}."""

    dim: int
    n: int
    box_length: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise InvalidParameterError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 8 or not _is_power_of_two(self.n):
            raise InvalidParameterError(
                f"points per axis must be a power of two >= 8, got {self.n}"
            )
        if not (self.box_length > 0 and math.isfinite(self.box_length)):
            raise InvalidParameterError(f"box_length must be positive, got {self.box_length}")

    @property
    def dx(self) -> float:
        return self.box_length / self.n

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def npoints(self) -> int:
        return self.n**self.dim

    @cached_property
    def axis_coords(self) -> np.ndarray:
        # x_j = -L/2 + j*L/n
        return -0.5 * self.box_length + self.dx * np.arange(self.n)

    @cached_property
    def axis_wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dx)

    @cached_property
    def coords(self) -> tuple:
        """Meshgrid coordinate arrays, one per axis (ij indexing)."""
        axes = [self.axis_coords] * self.dim
        return tuple(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        """|x| at every grid point."""
        r2 = np.zeros(self.shape)
        for c in self.coords:
            r2 += c**2
        return np.sqrt(r2)

    @cached_property
    def x_bracket(self) -> np.ndarray:
        """<x> = sqrt(1 + |x|^2) at every grid point."""
        return np.sqrt(1.0 + self.radius**2)

    @cached_property
    def k_mesh(self) -> tuple:
        axes = [self.axis_wavenumbers] * self.dim
        return tuple(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def k2(self) -> np.ndarray:
        """|k|^2 at every Fourier lattice point."""
        out = np.zeros(self.shape)
        for k in self.k_mesh:
            out += k**2
        return out

    @cached_property
    def k_bracket2(self) -> np.ndarray:
        """<k>^2 = 1 + |k|^2 on the Fourier lattice."""
        return 1.0 + self.k2

    def check_same(self, other: "Grid"):
        if self != other:
            raise GridMismatchError(f"grids differ: {self} vs {other}")


@dataclass(frozen=True, eq=False)
class WaveFunction:
    """Complex scalar field on a Grid. Immutable after construction."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.complex128)
        if v.shape != self.grid.shape:
            raise InvalidParameterError(
                f"value shape {v.shape} does not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise InvalidParameterError("wave function contains NaN or Inf entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def with_values(self, values: np.ndarray) -> "WaveFunction":
        return WaveFunction(self.grid, values)


def gaussian_packet(
    grid: Grid,
    width: float,
    center=None,
    momentum=None,
    amplitude: float = 1.0,
) -> WaveFunction:
    """Gaussian wave packet exp(-|x-c|^2/(2 w^2) + i k0.x), scaled by amplitude."""
    if width <= 0:
        raise InvalidParameterError("width must be positive")
    center = np.zeros(grid.dim) if center is None else np.atleast_1d(np.asarray(center, float))
    momentum = np.zeros(grid.dim) if momentum is None else np.atleast_1d(np.asarray(momentum, float))
    if center.size != grid.dim or momentum.size != grid.dim:
        raise InvalidParameterError("center/momentum must have one entry per dimension")
    phase = np.zeros(grid.shape)
    r2 = np.zeros(grid.shape)
    for j, c in enumerate(grid.coords):
        r2 += (c - center[j]) ** 2
        phase += momentum[j] * c
    vals = amplitude * np.exp(-r2 / (2.0 * width**2)) * np.exp(1j * phase)
    return WaveFunction(grid, vals)


def l2_norm(psi: WaveFunction) -> float:
    """Discrete L^2 norm: sqrt(cell_volume * sum |psi|^2)."""
    v = psi.values
    return float(np.sqrt(psi.grid.cell_volume * np.vdot(v, v).real))


def sobolev_norm(psi: WaveFunction, s: float) -> float:
    """Discrete H^s norm via the Fourier multiplier <k>^s."""
    if s < 0:
        raise InvalidParameterError(f"Sobolev index must be >= 0, got {s}")
    g = psi.grid
    fhat = np.fft.fftn(psi.values)
    weighted = g.k_bracket2**s * np.abs(fhat) ** 2
    return float(np.sqrt(g.cell_volume * weighted.sum() / g.npoints))


def weighted_norm(psi: WaveFunction, gamma: float) -> float:
    """Discrete weighted norm || <x>^gamma psi ||_{L^2}."""
    if gamma < 0:
        raise InvalidParameterError(f"weight exponent must be >= 0, got {gamma}")
    g = psi.grid
    weighted = (g.x_bracket ** (2.0 * gamma)) * np.abs(psi.values) ** 2
    return float(np.sqrt(g.cell_volume * weighted.sum()))


def lp_norm(psi: WaveFunction, p: float) -> float:
    """Discrete L^p norm; p = inf gives the max of |psi|."""
    if p < 1:
        raise InvalidParameterError(f"Lebesgue exponent must be in [1, inf], got {p}")
    absv = np.abs(psi.values)
    if math.isinf(p):
        return float(absv.max(initial=0.0))
    g = psi.grid
    return float((g.cell_volume * np.sum(absv**p)) ** (1.0 / p))


def inner(phi: WaveFunction, psi: WaveFunction) -> complex:
    """Discrete inner product <phi, psi> = cell_volume * sum conj(phi) psi."""
    phi.grid.check_same(psi.grid)
    return complex(phi.grid.cell_volume * np.vdot(phi.values, psi.values))
