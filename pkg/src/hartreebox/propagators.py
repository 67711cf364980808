"""Time evolution by Strang splitting with exact spectral kinetic steps.

Four flows share one stepping kernel: the linear flow of H, the
time-dependent linear flow of H + W(t) (forward or backward), the Hartree
flow (W recomputed self-consistently inside each step), and the pure-power
NLS flow. Every substep is a unitary phase, so the discrete L^2 norm is
conserved to roundoff; norm drift therefore signals instability, not
physics, and trips a detector in the nonlinear evolutions.

A Hartree step applies the potential half-step, the exact kinetic step,
then the potential half-step with W recomputed. Because potential phases
leave |psi| unchanged, the two W evaluations in a step equal W at the step
endpoints; replaying the recorded W series through the time-dependent
linear stepper therefore reproduces the Hartree trajectory exactly up to
interpolation between recorded frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BlowUpError,
    CoverageError,
    GridMismatchError,
    InvalidParameterError,
)
from .grid import Grid, WaveFunction
from .operators import HamiltonianOp
from .potentials import EffectivePotentialField, PairPotentialSpec, pair_kernel

__all__ = [
    "StepperConfig",
    "Trajectory",
    "WSeries",
    "evolve_linear",
    "evolve_hartree",
    "evolve_nls",
    "evolve_td_linear",
]

_L2_DRIFT_LIMIT = 1e-6


@dataclass(frozen=True)
class StepperConfig:
    """Step size and recording plan; the scheme is fixed to Strang splitting."""

    dt: float
    record_stride: int = 1
    scheme: str = "strang"

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise InvalidParameterError(f"dt must be positive, got {self.dt}")
        if self.record_stride < 1 or self.record_stride != int(self.record_stride):
            raise InvalidParameterError("record_stride must be a positive integer")
        if self.scheme != "strang":
            raise InvalidParameterError(f"unsupported scheme {self.scheme!r}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded snapshots of one evolution, all on a single grid."""

    grid: Grid
    times: np.ndarray
    snapshots: tuple
    effective_potentials: tuple = None  # nonlinear runs only
    config: StepperConfig = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 1 or np.any(np.diff(t) <= 0):
            raise InvalidParameterError("recorded times must be strictly increasing")
        if len(self.snapshots) != t.size:
            raise InvalidParameterError("one snapshot per recorded time required")
        for s in self.snapshots:
            self.grid.check_same(s.grid)
        if self.effective_potentials is not None and len(self.effective_potentials) != t.size:
            raise InvalidParameterError("one effective potential per recorded time required")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    def w_series(self) -> "WSeries":
        if self.effective_potentials is None:
            raise InvalidParameterError("trajectory has no recorded effective potentials")
        vals = np.stack([w.values for w in self.effective_potentials])
        return WSeries(self.grid, self.times, vals)


@dataclass(frozen=True, eq=False)
class WSeries:
    """Time-indexed real potential frames with linear interpolation in time."""

    grid: Grid
    times: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=np.float64)
        if t.ndim != 1 or t.size < 1 or np.any(np.diff(t) <= 0):
            raise InvalidParameterError("series times must be strictly increasing")
        if v.shape != (t.size,) + self.grid.shape:
            raise InvalidParameterError("series values must be (n_times, *grid.shape)")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def zero(cls, grid: Grid, t0: float, t1: float) -> "WSeries":
        return cls(grid, np.array([t0, t1]), np.zeros((2,) + grid.shape))

    @property
    def t_min(self) -> float:
        return float(self.times[0])

    @property
    def t_max(self) -> float:
        return float(self.times[-1])

    def covers(self, t0: float, t1: float, fuzz: float = 1e-9) -> bool:
        lo, hi = min(t0, t1), max(t0, t1)
        span = max(1.0, abs(self.t_max - self.t_min))
        return self.t_min - fuzz * span <= lo and hi <= self.t_max + fuzz * span

    def at(self, t: float) -> np.ndarray:
        fuzz = 1e-9 * max(1.0, abs(self.t_max))
        if not self.t_min - fuzz <= t <= self.t_max + fuzz:
            raise CoverageError(
                f"time {t} outside recorded range [{self.t_min}, {self.t_max}]"
            )
        t = min(max(t, self.t_min), self.t_max)
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        idx = min(max(idx, 0), self.times.size - 2) if self.times.size > 1 else 0
        if self.times.size == 1:
            return self.values[0]
        t0, t1 = self.times[idx], self.times[idx + 1]
        lam = (t - t0) / (t1 - t0)
        return (1.0 - lam) * self.values[idx] + lam * self.values[idx + 1]


def _check_step(h: HamiltonianOp, cfg: StepperConfig, n_steps: int):
    phase = cfg.dt * h.kinetic_max
    if phase > np.pi + 1e-12:
        raise InvalidParameterError(
            f"dt*lambda_max = {phase:.3f} exceeds pi; the kinetic phase would wrap"
        )
    if n_steps % cfg.record_stride != 0:
        raise InvalidParameterError(
            f"record_stride {cfg.record_stride} does not divide step count {n_steps}"
        )


def _n_steps(t_span: float, dt: float) -> int:
    n = int(round(t_span / dt))
    if n < 1 or abs(n * dt - t_span) > 1e-9 * max(1.0, abs(t_span)):
        raise InvalidParameterError(
            f"horizon {t_span} is not an integer multiple of dt={dt}"
        )
    return n


class _HartreeW:
    """W = v * |psi|^2 evaluated spectrally with a cached kernel transform."""

    def __init__(self, vspec: PairPotentialSpec, grid: Grid):
        self.cv = grid.cell_volume
        if vspec.family == "zero" or vspec.amplitude == 0.0:
            self.kernel_hat = None
            self._zero = np.zeros(grid.shape)
        else:
            # displacement lattice: zero displacement at index 0
            self.kernel_hat = np.fft.fftn(np.fft.ifftshift(pair_kernel(vspec, grid)))

    def __call__(self, density: np.ndarray) -> np.ndarray:
        if self.kernel_hat is None:
            return self._zero
        return (np.fft.ifftn(self.kernel_hat * np.fft.fftn(density)) * self.cv).real


class _NlsW:
    """Local power nonlinearity W = |psi|^(2 sigma) = density^sigma."""

    def __init__(self, sigma: float):
        if sigma <= 0:
            raise InvalidParameterError("power exponent must be positive")
        self.sigma = sigma

    def __call__(self, density: np.ndarray) -> np.ndarray:
        if self.sigma == 1.0:
            return density
        return density**self.sigma


def _evolve_selfconsistent(h, w_of_density, psi0, t_final, cfg) -> Trajectory:
    grid = h.grid
    grid.check_same(psi0.grid)
    if t_final <= 0:
        raise InvalidParameterError("horizon must be positive")
    n_steps = _n_steps(t_final, cfg.dt)
    _check_step(h, cfg, n_steps)
    dt = cfg.dt
    kin_phase = np.exp(-1j * dt * h.kinetic_multiplier)
    pot = h.potential

    v = psi0.values.copy()
    ref_norm = np.linalg.norm(v)
    w_now = w_of_density(np.abs(v) ** 2)

    times = [0.0]
    snaps = [psi0]
    wrecs = [EffectivePotentialField(grid, w_now.copy(), 0.0)]
    for i in range(n_steps):
        v *= np.exp(-0.5j * dt * (pot + w_now))
        v = np.fft.ifftn(kin_phase * np.fft.fftn(v))
        # the coming phase factor preserves |v|, so this W is exact at t+dt
        w_now = w_of_density(np.abs(v) ** 2)
        v *= np.exp(-0.5j * dt * (pot + w_now))
        if ref_norm > 0:
            drift = abs(np.linalg.norm(v) / ref_norm - 1.0)
            if drift > _L2_DRIFT_LIMIT:
                raise BlowUpError(
                    f"L2 norm drifted by {drift:.3e} at t={(i + 1) * dt:.6g}; "
                    "the run is unstable",
                    time=(i + 1) * dt,
                    drift=float(drift),
                )
        if (i + 1) % cfg.record_stride == 0:
            t = (i + 1) * dt
            times.append(t)
            snaps.append(WaveFunction(grid, v.copy()))
            wrecs.append(EffectivePotentialField(grid, w_now.copy(), t))
    return Trajectory(grid, np.array(times), tuple(snaps), tuple(wrecs), cfg)


def evolve_hartree(
    h: HamiltonianOp,
    vspec: PairPotentialSpec,
    psi0: WaveFunction,
    t_final: float,
    cfg: StepperConfig,
) -> Trajectory:
    """Self-consistent Hartree evolution; records W = v*|psi|^2 frames."""
    return _evolve_selfconsistent(h, _HartreeW(vspec, h.grid), psi0, t_final, cfg)


def evolve_nls(
    h: HamiltonianOp,
    sigma: float,
    psi0: WaveFunction,
    t_final: float,
    cfg: StepperConfig,
) -> Trajectory:
    """Pure-power NLS evolution with W = |psi|^(2 sigma); records W frames."""
    return _evolve_selfconsistent(h, _NlsW(sigma), psi0, t_final, cfg)


def evolve_linear(
    h: HamiltonianOp,
    psi0: WaveFunction,
    t_final: float,
    cfg: StepperConfig,
) -> Trajectory:
    """Linear evolution under H alone."""
    grid = h.grid
    grid.check_same(psi0.grid)
    if t_final <= 0:
        raise InvalidParameterError("horizon must be positive")
    n_steps = _n_steps(t_final, cfg.dt)
    _check_step(h, cfg, n_steps)
    dt = cfg.dt
    kin_phase = np.exp(-1j * dt * h.kinetic_multiplier)
    pot_half = np.exp(-0.5j * dt * h.potential)

    v = psi0.values.copy()
    times = [0.0]
    snaps = [psi0]
    for i in range(n_steps):
        v *= pot_half
        v = np.fft.ifftn(kin_phase * np.fft.fftn(v))
        v *= pot_half
        if (i + 1) % cfg.record_stride == 0:
            times.append((i + 1) * dt)
            snaps.append(WaveFunction(grid, v.copy()))
    return Trajectory(grid, np.array(times), tuple(snaps), None, cfg)


def evolve_td_linear(
    h: HamiltonianOp,
    w_series: WSeries,
    phi: WaveFunction,
    t_from: float,
    t_to: float,
    cfg: StepperConfig,
) -> WaveFunction:
    """Propagate phi from t_from to t_to under H + W(t), in either direction.

    W is interpolated linearly between recorded frames; each step uses the
    frame values at its own endpoints, which makes the backward run the
    exact inverse of the forward one.
    """
    grid = h.grid
    grid.check_same(phi.grid)
    if w_series.grid != grid:
        raise GridMismatchError("W series lives on a different grid")
    if t_from == t_to:
        return phi
    if not w_series.covers(t_from, t_to):
        raise CoverageError(
            f"W series [{w_series.t_min}, {w_series.t_max}] does not cover "
            f"[{min(t_from, t_to)}, {max(t_from, t_to)}]"
        )
    span = abs(t_to - t_from)
    n_steps = _n_steps(span, cfg.dt)
    _check_step(h, cfg, n_steps)
    direction = 1.0 if t_to > t_from else -1.0
    dt = direction * cfg.dt
    kin_phase = np.exp(-1j * dt * h.kinetic_multiplier)
    pot = h.potential

    v = phi.values.copy()
    w_next = w_series.at(t_from)
    for i in range(n_steps):
        t_a = t_from + i * dt
        t_b = t_from + (i + 1) * dt if i + 1 < n_steps else t_to
        v *= np.exp(-0.5j * dt * (pot + w_next))
        v = np.fft.ifftn(kin_phase * np.fft.fftn(v))
        w_next = w_series.at(t_b)
        v *= np.exp(-0.5j * dt * (pot + w_next))
    return WaveFunction(grid, v)
