"""Measured quantities: light-cone tail mass, decay-rate fits, tail
integrals of the effective-potential norms, and the propagation observable.

All measurements are pure functions over recorded trajectories. Fits use
log value against log<t> with <t> = sqrt(1 + t^2), and fit windows should
exclude the early transient (t < 5) and any box-limited times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .funcalc import smooth_step
from .grid import WaveFunction, l2_norm, lp_norm, sobolev_norm, weighted_norm
from .potentials import wt_norms
from .propagators import Trajectory

__all__ = [
    "ConeSpec",
    "TailMass",
    "tail_mass",
    "FitResult",
    "decay_fit",
    "ObservableSeries",
    "collect_series",
    "wt_tail_integrals",
    "PropagationObservableSpec",
    "propagation_observable",
    "envelope_fit",
]


@dataclass(frozen=True)
class ConeSpec:
    """Exterior region |x| >= c t + a with a sharp indicator cutoff."""

    speed: float
    offset: float
    reference_radius: float = None  # the localization radius b, for reporting

    def __post_init__(self):
        if self.speed <= 0 or self.offset <= 0:
            raise InvalidParameterError("cone speed and offset must be positive")

    def label(self) -> str:
        return f"tail_{self.speed:g}_{self.offset:g}"


@dataclass(frozen=True)
class TailMass:
    value: float
    box_limited: bool


def tail_mass(psi: WaveFunction, t: float, cone: ConeSpec) -> TailMass:
    """L^2 mass of psi outside the cone |x| >= c t + a at time t.

    Cell membership is decided by the cell-center radius. When the cone
    radius reaches half the box the measurement is flagged box-limited.
    """
    grid = psi.grid
    radius = cone.speed * abs(t) + cone.offset
    limited = radius >= 0.5 * grid.box_length
    mask = grid.radius >= radius
    val = math.sqrt(grid.cell_volume * float(np.sum(np.abs(psi.values[mask]) ** 2)))
    return TailMass(val, bool(limited))


@dataclass(frozen=True)
class FitResult:
    exponent: float
    amplitude: float
    r2: float
    window: tuple
    n_samples: int
    flags: tuple = ()


def decay_fit(times, values, window: tuple = None) -> FitResult:
    """Least-squares fit of log(value) against log<t>.

    Returns the slope as the decay exponent and exp(intercept) as the
    amplitude. Requires at least 8 positive samples inside the window.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise InvalidParameterError("times and values must be 1-d and matched")
    if window is None:
        window = (float(t.min(initial=0.0)), float(t.max(initial=0.0)))
    keep = (t >= window[0]) & (t <= window[1])
    t, v = t[keep], v[keep]
    if t.size < 8:
        raise InvalidParameterError(
            f"need at least 8 samples in the fit window, got {t.size}"
        )
    if np.any(v <= 0):
        raise InvalidParameterError("decay fit requires positive values")
    x = np.log(np.sqrt(1.0 + t**2))
    y = np.log(v)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(float(slope), float(math.exp(intercept)), r2, tuple(window), int(t.size))


@dataclass(frozen=True, eq=False)
class ObservableSeries:
    """Per-time measurement records of one trajectory."""

    times: np.ndarray
    columns: dict
    cones: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        for name, col in self.columns.items():
            if np.asarray(col).shape != t.shape:
                raise InvalidParameterError(f"column {name!r} length mismatch")
        object.__setattr__(self, "times", t)

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.columns[name])


def collect_series(
    traj: Trajectory,
    *,
    sobolev_index: float = None,
    weight_index: float = None,
    lp_exponents=(),
    cones=(),
    with_w_norms: bool = True,
) -> ObservableSeries:
    """Measure norms, cone tail masses, and W norms at every recorded time."""
    times = traj.times
    cols = {"l2": [], }
    if sobolev_index is not None:
        cols["hs"] = []
    if weight_index is not None:
        cols["l2g"] = []
    for p in lp_exponents:
        cols[f"lp_{p:g}"] = []
    for cone in cones:
        cols[cone.label()] = []
        cols[cone.label() + "_boxlimited"] = []
    have_w = with_w_norms and traj.effective_potentials is not None
    if have_w:
        cols["W_linf"] = []
        cols["W_w1inf"] = []
        cols["W_second"] = []

    for i, (t, snap) in enumerate(zip(times, traj.snapshots)):
        cols["l2"].append(l2_norm(snap))
        if sobolev_index is not None:
            cols["hs"].append(sobolev_norm(snap, sobolev_index))
        if weight_index is not None:
            cols["l2g"].append(weighted_norm(snap, weight_index))
        for p in lp_exponents:
            cols[f"lp_{p:g}"].append(lp_norm(snap, p))
        for cone in cones:
            tm = tail_mass(snap, t, cone)
            cols[cone.label()].append(tm.value)
            cols[cone.label() + "_boxlimited"].append(float(tm.box_limited))
        if have_w:
            norms = wt_norms(traj.effective_potentials[i])
            cols["W_linf"].append(norms["linf"])
            cols["W_w1inf"].append(norms["w1inf"])
            cols["W_second"].append(norms["max_second"])

    columns = {k: np.asarray(v) for k, v in cols.items()}
    return ObservableSeries(times.copy(), columns, tuple(cones))


def _tail_extrapolation(times, values) -> tuple:
    """Fit a power law over the last half of the horizon; returns
    (tail integral beyond the horizon, fit, flags)."""
    t_hi = float(times[-1])
    window = (0.5 * t_hi, t_hi)
    flags = []
    keep = (times >= window[0]) & (values > 0)
    if np.count_nonzero(keep) < 8:
        return 0.0, None, ("tail_truncated",)
    fit = decay_fit(times[keep], values[keep], (window[0], t_hi))
    if fit.exponent >= -1.0:
        return 0.0, fit, ("tail_truncated", "nonintegrable_fit")
    bt = math.sqrt(1.0 + t_hi**2)
    tail = fit.amplitude * bt ** (fit.exponent + 1.0) / (-(fit.exponent + 1.0))
    return tail, fit, tuple(flags)


def wt_tail_integrals(series: ObservableSeries) -> ObservableSeries:
    """Augment a series with w_t and wprime_t tail integrals.

    w_t integrates the W^{1,inf} norm from t to the horizon by trapezoid
    plus a fitted power-law tail beyond the horizon; wprime_t does the
    same for the largest first/second derivative sup norm.
    """
    if "W_w1inf" not in series.columns:
        raise InvalidParameterError("series lacks W norm columns")
    t = series.times
    out_cols = dict(series.columns)
    meta = dict(series.meta)
    for src, dst in (("W_w1inf", "w_t"), ("W_second", "wprime_t")):
        vals = series.column(src)
        partial = np.zeros_like(vals)
        if t.size > 1:
            seg = 0.5 * (vals[1:] + vals[:-1]) * np.diff(t)
            partial[:-1] = seg[::-1].cumsum()[::-1]
        tail, fit, flags = _tail_extrapolation(t, vals)
        out_cols[dst] = partial + tail
        meta[dst + "_tail"] = tail
        meta[dst + "_fit"] = fit
        meta[dst + "_flags"] = flags
    return ObservableSeries(t.copy(), out_cols, series.cones, meta)


@dataclass(frozen=True)
class PropagationObservableSpec:
    """Monotone profile f((<x> - a - v t)/s) tracked along a trajectory.

    The profile rises smoothly from 0 to 1 over [0, ramp] (ramp plays the
    role of the excess speed and 0 means the constant-1 test profile);
    its derivative has a smooth square root by construction.
    """

    threshold_speed: float
    offset: float
    scale: float
    ramp: float

    def __post_init__(self):
        if self.scale <= 0:
            raise InvalidParameterError("scale must be positive")
        if self.ramp < 0:
            raise InvalidParameterError("ramp must be >= 0")

    def profile(self, xi: np.ndarray) -> np.ndarray:
        if self.ramp == 0.0:
            return np.ones_like(xi)
        return smooth_step(xi / self.ramp, 0)


def propagation_observable(traj: Trajectory, spec: PropagationObservableSpec) -> dict:
    """<psi_t, f(x_ts) psi_t> at recorded times plus its finite-difference rate."""
    grid = traj.grid
    times = traj.times
    xb = grid.x_bracket
    phi = np.empty(times.size)
    for i, (t, snap) in enumerate(zip(times, traj.snapshots)):
        xi = (xb - spec.offset - spec.threshold_speed * t) / spec.scale
        phi[i] = grid.cell_volume * float(
            np.sum(spec.profile(xi) * np.abs(snap.values) ** 2)
        )
    dphi = np.gradient(phi, times) if times.size > 1 else np.zeros_like(phi)
    return {"times": times.copy(), "phi": phi, "dphi_dt": dphi}


def envelope_fit(dphi: np.ndarray, w_t: np.ndarray, scale: float) -> dict:
    """Smallest nonnegative (C, C1) with dphi <= C/scale + C1 * w_t pointwise.

    C1 is chosen on a grid to minimize the resulting envelope mass; the
    bound then holds by construction, so the useful outputs are the fitted
    coefficients and the margin.
    """
    dphi = np.asarray(dphi, dtype=float)
    w = np.asarray(w_t, dtype=float) if w_t is not None else np.zeros_like(dphi)
    wmax = w.max(initial=0.0)
    cands = [0.0]
    if wmax > 0:
        top = max(dphi.max(initial=0.0), 0.0) / wmax
        cands.extend(np.linspace(0.0, 2.0 * top, 41)[1:])
    best = None
    for c1 in cands:
        c = scale * max(0.0, float(np.max(dphi - c1 * w, initial=0.0)))
        cost = c / scale + c1 * (w.mean() if w.size else 0.0)
        if best is None or cost < best["cost"]:
            best = {"C": c, "C1": float(c1), "cost": cost}
    envelope = best["C"] / scale + best["C1"] * w
    slack = envelope - dphi
    return {
        "C": best["C"],
        "C1": best["C1"],
        "holds": bool(np.all(slack >= -1e-12)),
        "min_slack": float(slack.min(initial=0.0)),
    }
