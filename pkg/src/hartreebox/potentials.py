"""External and pair potentials, the self-consistent effective potential,
and admissibility checks on their parameters.

The effective potential is the periodic convolution W = v * |psi|^2 computed
spectrally. Periodic convolution stands in for convolution on R^d, which is
only sound while the pair potential is negligible at half the box length;
`effective_potential` warns when that fails.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .grid import Grid, WaveFunction

__all__ = [
    "ExternalPotentialSpec",
    "PairPotentialSpec",
    "EffectivePotentialField",
    "evaluate_external",
    "pair_kernel",
    "effective_potential",
    "nls_effective_potential",
    "check_conditions",
    "wt_norms",
    "spectral_gradient_fields",
]

_EXTERNAL_FAMILIES = ("zero", "inverse_power", "gaussian_well")
_PAIR_FAMILIES = ("zero", "gaussian", "inverse_power_regularized")


@dataclass(frozen=True)
class ExternalPotentialSpec:
    """One-body potential V.

    Families: zero; inverse_power V0*<x>^-sigma; gaussian_well V0*exp(-|x|^2/(2 w^2)).
    """

    family: str = "zero"
    amplitude: float = 0.0
    decay_rate: float = 3.0  # sigma for inverse_power, alpha used in decay checks
    width: float = 1.0  # gaussian_well only

    def __post_init__(self):
        if self.family not in _EXTERNAL_FAMILIES:
            raise InvalidParameterError(
                f"unknown external potential family {self.family!r}; "
                f"expected one of {_EXTERNAL_FAMILIES}"
            )
        if self.family == "gaussian_well" and self.width <= 0:
            raise InvalidParameterError("gaussian_well width must be positive")
        if self.family == "inverse_power" and self.decay_rate <= 0:
            raise InvalidParameterError("inverse_power decay rate must be positive")


@dataclass(frozen=True)
class PairPotentialSpec:
    """Pair (convolution) potential v with its declared integrability indices.

    Families: zero; gaussian v0*exp(-|x|^2/(2 w^2)); inverse_power_regularized
    v0*<x>^-mu. The Lebesgue index q and smoothness index gamma are declared
    by the scenario and only enter the admissibility report.
    """

    family: str = "gaussian"
    amplitude: float = 0.0
    width: float = 1.0  # w for gaussian, mu for inverse_power_regularized
    lq_index: float = 1.0
    smoothness_index: float = 2.0

    def __post_init__(self):
        if self.family not in _PAIR_FAMILIES:
            raise InvalidParameterError(
                f"unknown pair potential family {self.family!r}; "
                f"expected one of {_PAIR_FAMILIES}"
            )
        if self.family != "zero" and self.width <= 0:
            raise InvalidParameterError("pair potential width must be positive")


@dataclass(frozen=True, eq=False)
class EffectivePotentialField:
    """Real field v * |psi|^2 on a grid, stamped with its evolution time."""

    grid: Grid
    values: np.ndarray = field(repr=False)
    time_stamp: float = 0.0

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.shape != self.grid.shape:
            raise InvalidParameterError(
                f"field shape {v.shape} does not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise InvalidParameterError("effective potential contains NaN or Inf")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def evaluate_external(spec: ExternalPotentialSpec, grid: Grid) -> np.ndarray:
    """Evaluate the external potential pointwise on the lattice."""
    if spec.family == "zero":
        return np.zeros(grid.shape)
    if spec.family == "inverse_power":
        return spec.amplitude * grid.x_bracket ** (-spec.decay_rate)
    if spec.family == "gaussian_well":
        return spec.amplitude * np.exp(-grid.radius**2 / (2.0 * spec.width**2))
    raise InvalidParameterError(f"unknown external potential family {spec.family!r}")


def pair_kernel(spec: PairPotentialSpec, grid: Grid) -> np.ndarray:
    """Evaluate the pair potential v on the lattice (centered at the origin)."""
    if spec.family == "zero":
        return np.zeros(grid.shape)
    if spec.family == "gaussian":
        return spec.amplitude * np.exp(-grid.radius**2 / (2.0 * spec.width**2))
    if spec.family == "inverse_power_regularized":
        return spec.amplitude * grid.x_bracket ** (-spec.width)
    raise InvalidParameterError(f"unknown pair potential family {spec.family!r}")


def _periodic_convolve(kernel_hat: np.ndarray, density: np.ndarray, cell_volume: float) -> np.ndarray:
    """Periodic convolution with the continuum measure (the cell-volume factor)."""
    out = np.fft.ifftn(kernel_hat * np.fft.fftn(density)) * cell_volume
    imag_residue = np.abs(out.imag).max(initial=0.0)
    scale = np.abs(out.real).max(initial=0.0)
    if scale > 0 and imag_residue > 1e-12 * max(scale, 1.0):
        raise InvalidParameterError(
            f"convolution imaginary residue {imag_residue:.3e} exceeds tolerance"
        )
    return np.ascontiguousarray(out.real)


class _KernelCache:
    """FFT of the pair kernel per (spec, grid), reused across evolution steps.

    The kernel is rolled onto the displacement lattice (zero displacement at
    index 0) so the FFT product implements the periodic convolution sum.
    """

    def __init__(self):
        self._cache = {}

    def get(self, spec: PairPotentialSpec, grid: Grid) -> np.ndarray:
        key = (spec, grid)
        if key not in self._cache:
            kernel = pair_kernel(spec, grid)
            if spec.family != "zero" and spec.amplitude != 0.0:
                edge = abs(kernel[(0,) * grid.dim])  # x = -L/2 corner
                peak = abs(spec.amplitude)
                if peak > 0 and edge / peak > 1e-10:
                    warnings.warn(
                        "pair potential is not negligible at half the box length "
                        f"(v(L/2)/v(0) = {edge / peak:.2e}); periodic convolution "
                        "will differ from the whole-space one",
                        stacklevel=3,
                    )
            self._cache[key] = np.fft.fftn(np.fft.ifftshift(kernel))
        return self._cache[key]


_kernels = _KernelCache()


def effective_potential(
    vspec: PairPotentialSpec, psi: WaveFunction, time_stamp: float = 0.0
) -> EffectivePotentialField:
    """Self-consistent potential W = v * |psi|^2 (spectral periodic convolution)."""
    grid = psi.grid
    if vspec.family == "zero" or vspec.amplitude == 0.0:
        return EffectivePotentialField(grid, np.zeros(grid.shape), time_stamp)
    density = np.abs(psi.values) ** 2
    w = _periodic_convolve(_kernels.get(vspec, grid), density, grid.cell_volume)
    return EffectivePotentialField(grid, w, time_stamp)


def nls_effective_potential(
    sigma: float, psi: WaveFunction, time_stamp: float = 0.0
) -> EffectivePotentialField:
    """Local power nonlinearity |psi|^(2 sigma) used by the pure-power flow."""
    if sigma <= 0:
        raise InvalidParameterError("power exponent must be positive")
    w = np.abs(psi.values) ** (2.0 * sigma)
    return EffectivePotentialField(psi.grid, w, time_stamp)


def _negative_part_sup(spec: ExternalPotentialSpec, alpha: float) -> float:
    """sup_x V_-(x) <x>^alpha from the closed form of each family."""
    if spec.family == "zero" or spec.amplitude >= 0:
        return 0.0
    v0 = abs(spec.amplitude)
    if spec.family == "inverse_power":
        # V_-(x)<x>^alpha = v0 <x>^(alpha - sigma): bounded iff alpha <= sigma
        return v0 if alpha <= spec.decay_rate else math.inf
    if spec.family == "gaussian_well":
        # maximize alpha*log<r> - r^2/(2w^2): critical radius r^2 = alpha w^2 - 1
        aw2 = alpha * spec.width**2
        if aw2 <= 1.0:
            return v0
        return v0 * math.exp(-(aw2 - 1.0) / (2.0 * spec.width**2)) * aw2 ** (alpha / 2.0)
    return math.inf


def check_conditions(
    vspec_external: ExternalPotentialSpec,
    vspec_pair: PairPotentialSpec,
    dim: int,
    *,
    alpha: float = 2.5,
    delta: float = 0.1,
) -> dict:
    """Parameter-arithmetic admissibility report for (V, v) in dimension d.

    Checks, with the declared (q, gamma) of the pair potential:
      - q_range: 1 <= q < d/2,
      - v_integrability / v_smoothness_margin: gamma - d/(2q) > 0,
      - V_decay: sigma >= 3d/2 + 3,
      - V_negative_part_small: sup V_-(x)<x>^alpha <= delta with alpha > 2.

    Unknown combinations are reported as "unchecked" rather than failed.
    """
    q = vspec_pair.lq_index
    gamma = vspec_pair.smoothness_index
    margin = gamma - dim / (2.0 * q)

    report = {
        "dim": dim,
        "q": q,
        "gamma": gamma,
        "q_range": bool(1.0 <= q < dim / 2.0),
        "v_smoothness_margin": margin,
        "v_integrability": bool(margin > 0.0),
        "alpha": alpha,
        "delta": delta,
    }

    if vspec_external.family == "zero":
        report["V_decay"] = True
        report["V_negative_part_small"] = True
        report["V_negative_part_sup"] = 0.0
    elif vspec_external.family == "inverse_power":
        report["V_decay"] = bool(vspec_external.decay_rate >= 1.5 * dim + 3.0)
        sup = _negative_part_sup(vspec_external, alpha)
        report["V_negative_part_sup"] = sup
        report["V_negative_part_small"] = bool(alpha > 2.0 and sup <= delta)
    elif vspec_external.family == "gaussian_well":
        # decays faster than any inverse power
        report["V_decay"] = True
        sup = _negative_part_sup(vspec_external, alpha)
        report["V_negative_part_sup"] = sup
        report["V_negative_part_small"] = bool(alpha > 2.0 and sup <= delta)
    else:
        report["V_decay"] = "unchecked"
        report["V_negative_part_small"] = "unchecked"

    report["all_pass"] = all(
        v is True for k, v in report.items()
        if k in ("q_range", "v_integrability", "V_decay", "V_negative_part_small")
    )
    return report


def spectral_gradient_fields(grid: Grid, values: np.ndarray) -> list:
    """First spectral derivatives of a real field, one array per axis."""
    fhat = np.fft.fftn(values)
    grads = []
    for k in grid.k_mesh:
        grads.append(np.fft.ifftn(1j * k * fhat).real)
    return grads


def wt_norms(w: EffectivePotentialField) -> dict:
    """Sup-norm diagnostics of an effective potential.

    Returns linf = ||W||_inf, w1inf = ||W||_inf + max_i ||d_i W||_inf
    (the discrete W^{1,inf} norm), and max_second = the largest sup norm
    over all first and second spectral derivatives.
    """
    grid = w.grid
    vals = w.values
    linf = float(np.abs(vals).max(initial=0.0))
    fhat = np.fft.fftn(vals)
    first_sups = []
    deriv_sups = []
    for i, ki in enumerate(grid.k_mesh):
        gi_hat = 1j * ki * fhat
        gi = np.fft.ifftn(gi_hat).real
        si = float(np.abs(gi).max(initial=0.0))
        first_sups.append(si)
        deriv_sups.append(si)
        for kj in grid.k_mesh[i:]:
            gij = np.fft.ifftn(1j * kj * gi_hat).real
            deriv_sups.append(float(np.abs(gij).max(initial=0.0)))
    return {
        "linf": linf,
        "w1inf": linf + max(first_sups, default=0.0),
        "max_second": max(deriv_sups, default=0.0),
    }
