"""Matrix-free Hamiltonian H = -Laplacian/2 + V, energy functionals, and
spectral-range / bound-state diagnostics.

The kinetic term is exact on the Fourier lattice; no finite differences are
involved, so no dispersion error enters downstream speed measurements.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConvergenceError, InvalidParameterError
from .grid import Grid, WaveFunction, inner, l2_norm
from .potentials import PairPotentialSpec, effective_potential

__all__ = [
    "HamiltonianOp",
    "SpectralRange",
    "apply_hamiltonian",
    "hartree_energy",
    "spectral_range",
    "bound_state_check",
]


@dataclass(frozen=True, eq=False)
class HamiltonianOp:
    """H = -Laplacian/2 + V on a periodic grid, applied matrix-free."""

    grid: Grid
    potential: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.potential, dtype=np.float64)
        if v.shape != self.grid.shape:
            raise InvalidParameterError(
                f"potential shape {v.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise InvalidParameterError("potential contains NaN or Inf")
        v.setflags(write=False)
        object.__setattr__(self, "potential", v)

    @cached_property
    def kinetic_multiplier(self) -> np.ndarray:
        """Fourier multiplier |k|^2 / 2 of the kinetic term."""
        m = 0.5 * self.grid.k2
        m.setflags(write=False)
        return m

    @property
    def kinetic_max(self) -> float:
        return float(self.kinetic_multiplier.max())

    def apply_array(self, values: np.ndarray) -> np.ndarray:
        """H acting on raw values (hot path; no wrapping or validation)."""
        kin = np.fft.ifftn(self.kinetic_multiplier * np.fft.fftn(values))
        return kin + self.potential * values


def apply_hamiltonian(h: HamiltonianOp, psi: WaveFunction) -> WaveFunction:
    h.grid.check_same(psi.grid)
    return WaveFunction(h.grid, h.apply_array(psi.values))


def hartree_energy(h: HamiltonianOp, vspec: PairPotentialSpec, psi: WaveFunction) -> float:
    """Conserved functional: integral of |grad psi|^2/2 + V|psi|^2 + W|psi|^2/2
    with W = v * |psi|^2 and the gradient taken spectrally."""
    h.grid.check_same(psi.grid)
    g = h.grid
    fhat = np.fft.fftn(psi.values)
    kinetic = 0.5 * g.cell_volume * float(np.sum(g.k2 * np.abs(fhat) ** 2)) / g.npoints
    density = np.abs(psi.values) ** 2
    external = g.cell_volume * float(np.sum(h.potential * density))
    w = effective_potential(vspec, psi).values
    interaction = 0.5 * g.cell_volume * float(np.sum(w * density))
    return kinetic + external + interaction


@dataclass(frozen=True)
class SpectralRange:
    """Extreme eigenvalue estimates of a discretized Hamiltonian."""

    lambda_min: float
    lambda_max: float
    iterations: int
    residual: float

    def __post_init__(self):
        if self.lambda_min > self.lambda_max:
            raise InvalidParameterError("lambda_min exceeds lambda_max")


def _lanczos_extremes(apply_op, n_total: int, m: int, rng) -> tuple:
    """Lanczos with full reorthogonalization; returns extreme Ritz pairs.

    apply_op works on flat complex vectors of length n_total.
    """
    m = min(m, n_total)
    Q = np.empty((m, n_total), dtype=np.complex128)
    alphas = np.empty(m)
    betas = np.empty(max(m - 1, 0))
    q = rng.standard_normal(n_total) + 1j * rng.standard_normal(n_total)
    q /= np.linalg.norm(q)
    Q[0] = q
    r = apply_op(q)
    a = np.vdot(q, r).real
    alphas[0] = a
    r = r - a * q
    k = 1
    for k in range(1, m):
        # full reorthogonalization keeps Ritz residuals trustworthy
        r -= Q[:k].T @ (Q[:k].conj() @ r)
        b = np.linalg.norm(r)
        if b < 1e-13:
            k -= 1
            break
        betas[k - 1] = b
        q = r / b
        Q[k] = q
        r = apply_op(q)
        a = np.vdot(q, r).real
        alphas[k] = a
        r = r - a * q - b * Q[k - 1]
    kdim = k + 1
    T = np.diag(alphas[:kdim]) + np.diag(betas[: kdim - 1], 1) + np.diag(betas[: kdim - 1], -1)
    evals, evecs = np.linalg.eigh(T)
    v_min = evecs[:, 0] @ Q[:kdim]
    v_max = evecs[:, -1] @ Q[:kdim]
    res_min = np.linalg.norm(apply_op(v_min) - evals[0] * v_min)
    res_max = np.linalg.norm(apply_op(v_max) - evals[-1] * v_max)
    return float(evals[0]), float(evals[-1]), float(max(res_min, res_max)), kdim


def spectral_range(
    h: HamiltonianOp,
    tol: float,
    *,
    max_dim: int = 2048,
    seed: int = 7,
) -> SpectralRange:
    """Estimate [lambda_min, lambda_max] of H by Lanczos iteration.

    The residual of both extreme Ritz pairs is certified to be <= tol;
    otherwise a ConvergenceError carrying the best estimate is raised.
    """
    if tol <= 0:
        raise InvalidParameterError("tolerance must be positive")
    grid = h.grid
    n_total = grid.npoints
    shape = grid.shape

    def apply_flat(vec):
        return h.apply_array(vec.reshape(shape)).ravel()

    rng = np.random.default_rng(seed)
    m = 48
    best = None
    total_iters = 0
    while True:
        lo, hi, res, used = _lanczos_extremes(apply_flat, n_total, m, rng)
        total_iters += used
        best = SpectralRange(lo, hi, total_iters, res)
        if res <= tol:
            return best
        if m >= min(max_dim, n_total):
            raise ConvergenceError(
                f"Lanczos residual {res:.3e} above tol {tol:.3e} at subspace size {m}",
                best_estimate=best,
                residual=res,
                iterations=total_iters,
            )
        m = min(2 * m, max_dim, n_total)


def bound_state_check(h: HamiltonianOp, tol: float = None, **kwargs) -> dict:
    """Report whether the discretized H has an eigenvalue below -tol.

    tol defaults to 1e-8 * lambda_max, which separates genuine bound states
    from discretization noise at the bottom of the continuous spectrum.
    """
    rng_tol = kwargs.pop("range_tol", 1e-9)
    sr = spectral_range(h, rng_tol, **kwargs)
    if tol is None:
        tol = 1e-8 * max(abs(sr.lambda_max), 1.0)
    elif tol <= 0:
        raise InvalidParameterError("tolerance must be positive")
    return {
        "has_negative_eigenvalue": bool(sr.lambda_min < -tol),
        "lambda_min": sr.lambda_min,
        "lambda_max": sr.lambda_max,
        "tol": float(tol),
        "residual": sr.residual,
    }
