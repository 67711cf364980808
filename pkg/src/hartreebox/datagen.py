"""Construction of energy-and-space localized initial data.

The admissible datum solves a fixed point problem: evolve the candidate
nonlinearly to a finite horizon, transport a localized seed forward under
the recorded time-dependent potential, apply the energy window, transport
back, and iterate until successive iterates agree. The discarded part of
the infinite-horizon limit is certified by integrating a power law fitted
to the decay of the effective-potential norms over the second half of the
horizon (the commutator of the window with W is controlled by twice the
W^{1,inf} norm).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, InvalidParameterError
from .funcalc import ChebyshevWindow, SpectralWindow, smooth_step
from .grid import WaveFunction, l2_norm, sobolev_norm, weighted_norm
from .observables import decay_fit
from .operators import HamiltonianOp
from .potentials import EffectivePotentialField, PairPotentialSpec, wt_norms
from .propagators import StepperConfig, Trajectory, WSeries, evolve_hartree, evolve_td_linear

__all__ = [
    "SpatialCutoff",
    "localize",
    "CutoffJob",
    "CutoffResult",
    "asymptotic_cutoff",
    "DataGenSpec",
    "DatumResult",
    "construct_datum",
    "injectivity_probe",
    "combined_norm",
]


@dataclass(frozen=True)
class SpatialCutoff:
    """Radial bump: 1 for |x| <= b/2, 0 for |x| >= b, smooth in between."""

    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise InvalidParameterError("cutoff radius must be positive")

    def profile(self, r_over_b: np.ndarray) -> np.ndarray:
        # falling transition on [1/2, 1]
        return smooth_step(2.0 * (1.0 - np.asarray(r_over_b, dtype=float)), 0)


def localize(phi: WaveFunction, cutoff: SpatialCutoff) -> WaveFunction:
    """Multiply pointwise by the spatial bump chi(|x|/b)."""
    chi = cutoff.profile(phi.grid.radius / cutoff.radius)
    return WaveFunction(phi.grid, chi * phi.values)


def combined_norm(psi: WaveFunction, s_index: float, gamma_index: float) -> float:
    """Stopping metric: H^s norm plus weighted L^2_gamma norm."""
    return sobolev_norm(psi, s_index) + weighted_norm(psi, gamma_index)


@dataclass(frozen=True, eq=False)
class CutoffJob:
    """Everything needed to evaluate the finite-horizon energy cutoff."""

    window: SpectralWindow
    h: HamiltonianOp
    vspec: PairPotentialSpec
    stepper: StepperConfig
    tau_max: float
    tol_tail: float
    cheb_degree: int = None

    def __post_init__(self):
        if self.tau_max < 1.0:
            raise InvalidParameterError("tau_max must be >= 1")
        if self.tol_tail <= 0:
            raise InvalidParameterError("tol_tail must be positive")


@dataclass(frozen=True, eq=False)
class CutoffResult:
    state: WaveFunction
    tail_certificate: float
    converged: bool
    w_fit: object
    trajectory: Trajectory


def _w_norm_series(traj: Trajectory, max_frames: int = 257) -> tuple:
    """(times, W^{1,inf} norms) subsampled from a trajectory's W frames."""
    idx = np.arange(traj.times.size)
    if idx.size > max_frames:
        idx = np.unique(np.linspace(0, idx.size - 1, max_frames).astype(int))
    times = traj.times[idx]
    vals = np.array(
        [wt_norms(traj.effective_potentials[i])["w1inf"] for i in idx]
    )
    return times, vals


def _tail_certificate(traj: Trajectory) -> tuple:
    """Bound on the neglected commutator integral beyond the horizon.

    || [g(H), W] || <= 2 ||W||_{W^{1,inf}}, so twice the integral of the
    power law fitted to the recorded norms over the second half of the
    horizon bounds the dropped tail. A non-decaying fit yields an infinite
    certificate.
    """
    times, vals = _w_norm_series(traj)
    tau = float(times[-1])
    floor = 1e-300
    if np.all(vals <= 1e-14 * max(vals.max(initial=0.0), 1.0)) or vals.max(initial=0.0) == 0.0:
        return 0.0, None
    keep = (times >= 0.5 * tau) & (vals > floor)
    if np.count_nonzero(keep) < 8:
        return math.inf, None
    fit = decay_fit(times[keep], vals[keep], (0.5 * tau, tau))
    if fit.exponent >= -1.0:
        return math.inf, fit
    bt = math.sqrt(1.0 + tau**2)
    integral = fit.amplitude * bt ** (fit.exponent + 1.0) / (-(fit.exponent + 1.0))
    return 2.0 * integral, fit


def asymptotic_cutoff(
    job: CutoffJob,
    psi0: WaveFunction,
    phi: WaveFunction,
    trajectory: Trajectory = None,
) -> CutoffResult:
    """Finite-horizon realization of the conjugated energy cutoff applied to phi.

    Transports phi forward to the horizon under the time-dependent linear
    flow recorded from the nonlinear evolution of psi0, applies the energy
    window, and transports back. The result carries a tail certificate for
    the neglected remainder; if that exceeds tol_tail the result is flagged
    unconverged (soft failure).
    """
    h = job.h
    if trajectory is None:
        trajectory = evolve_hartree(h, job.vspec, psi0, job.tau_max, job.stepper)
    ws = trajectory.w_series()
    forward = evolve_td_linear(h, ws, phi, 0.0, job.tau_max, job.stepper)
    applier = ChebyshevWindow(h, job.window, job.cheb_degree)
    windowed = applier.apply(forward)
    back = evolve_td_linear(h, ws, windowed, job.tau_max, 0.0, job.stepper)
    cert, fit = _tail_certificate(trajectory)
    return CutoffResult(back, cert, bool(cert <= job.tol_tail), fit, trajectory)


@dataclass(frozen=True, eq=False)
class DataGenSpec:
    """Parameters of the fixed-point data construction."""

    window: SpectralWindow
    localization_radius: float
    phi_seed: WaveFunction
    amplitude: float
    s_index: float
    gamma_index: float
    fp_tol: float
    max_iters: int
    h: HamiltonianOp
    vspec: PairPotentialSpec
    stepper: StepperConfig
    tau_max: float
    tol_tail: float = 1e-3
    cheb_degree: int = None

    def __post_init__(self):
        if self.amplitude <= 0:
            raise InvalidParameterError("amplitude must be positive")
        if self.fp_tol <= 0 or self.max_iters < 1:
            raise InvalidParameterError("fp_tol must be positive and max_iters >= 1")

    def admissibility(self) -> dict:
        """Nominal index constraints gamma in (d/(2q), d/q - 1), reported only.

        At desk-scale dimensions these cannot all hold as stated for the
        regime the estimates target (d >= 3); the construction still runs.
        """
        d = self.h.grid.dim
        q = self.vspec.lq_index
        lo, hi = d / (2.0 * q), d / q - 1.0
        return {
            "d": d,
            "q": q,
            "gamma": self.gamma_index,
            "gamma_window": (lo, hi),
            "gamma_ok": bool(lo < self.gamma_index < hi),
            "s_ok": bool(self.s_index >= self.gamma_index),
        }


@dataclass(frozen=True, eq=False)
class DatumResult:
    psi0: WaveFunction
    iterations: int
    residual: float
    contraction_ratios: tuple
    tail_certificates: tuple
    admissibility: dict
    seed_norm: float


def _prepare_seed(spec: DataGenSpec) -> tuple:
    """Scale the raw seed to H^s amplitude eps, then localize it."""
    raw_norm = sobolev_norm(spec.phi_seed, spec.s_index)
    if raw_norm == 0:
        raise InvalidParameterError("seed state is identically zero")
    scaled = WaveFunction(
        spec.phi_seed.grid, spec.phi_seed.values * (spec.amplitude / raw_norm)
    )
    chi_phi = localize(scaled, SpatialCutoff(spec.localization_radius))
    return chi_phi


def construct_datum(spec: DataGenSpec) -> DatumResult:
    """Fixed-point iteration for the admissible datum.

    The iteration map evolves the current candidate nonlinearly, then
    applies the conjugated energy cutoff to the localized seed. The seed
    candidate is the windowed localized seed itself, which is the exact
    solution when the pair coupling vanishes. Stops when the combined
    H^s + L^2_gamma norm of successive differences drops below fp_tol.
    """
    chi_phi = _prepare_seed(spec)
    job = CutoffJob(
        spec.window, spec.h, spec.vspec, spec.stepper,
        spec.tau_max, spec.tol_tail, spec.cheb_degree,
    )
    applier = ChebyshevWindow(spec.h, spec.window, spec.cheb_degree)
    psi = applier.apply(chi_phi)
    seed_norm = combined_norm(psi, spec.s_index, spec.gamma_index)

    ratios = []
    certs = []
    prev_diff = None
    for it in range(1, spec.max_iters + 1):
        result = asymptotic_cutoff(job, psi, chi_phi)
        certs.append(result.tail_certificate)
        diff = combined_norm(
            WaveFunction(psi.grid, result.state.values - psi.values),
            spec.s_index,
            spec.gamma_index,
        )
        if prev_diff is not None and prev_diff > 0:
            ratios.append(diff / prev_diff)
        prev_diff = diff
        psi = result.state
        if diff < spec.fp_tol:
            return DatumResult(
                psi, it, float(diff), tuple(ratios), tuple(certs),
                spec.admissibility(), seed_norm,
            )
    raise ConvergenceError(
        f"fixed point did not reach {spec.fp_tol:.1e} in {spec.max_iters} iterations "
        f"(last residual {prev_diff:.3e})",
        best_estimate=psi,
        residual=float(prev_diff) if prev_diff is not None else None,
        iterations=spec.max_iters,
    )


def injectivity_probe(spec: DataGenSpec, phi1: WaveFunction, phi2: WaveFunction) -> dict:
    """Compare the data built from two seeds against their windowed difference.

    Reports ||psi0(phi1) - psi0(phi2)|| next to ||g(H) chi (phi1 - phi2)||
    in the combined norm; distinct windowed seeds must produce distinct
    data with at most a small-relative shrinkage.
    """
    applier = ChebyshevWindow(spec.h, spec.window, spec.cheb_degree)
    cut = SpatialCutoff(spec.localization_radius)
    gchi = []
    results = []
    for phi in (phi1, phi2):
        sub = DataGenSpec(
            spec.window, spec.localization_radius, phi, spec.amplitude,
            spec.s_index, spec.gamma_index, spec.fp_tol, spec.max_iters,
            spec.h, spec.vspec, spec.stepper, spec.tau_max, spec.tol_tail,
            spec.cheb_degree,
        )
        chi_phi = _prepare_seed(sub)
        gchi.append(applier.apply(chi_phi))
        results.append(construct_datum(sub))
    input_diff = combined_norm(
        WaveFunction(phi1.grid, gchi[0].values - gchi[1].values),
        spec.s_index, spec.gamma_index,
    )
    if input_diff == 0.0:
        raise InvalidParameterError("windowed localized seeds coincide")
    output_diff = combined_norm(
        WaveFunction(phi1.grid, results[0].psi0.values - results[1].psi0.values),
        spec.s_index, spec.gamma_index,
    )
    return {
        "input_diff": float(input_diff),
        "output_diff": float(output_diff),
        "margin": float(output_diff / input_diff),
        "iterations": (results[0].iterations, results[1].iterations),
    }
