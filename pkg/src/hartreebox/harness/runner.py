"""Experiment orchestration: builds scenario objects, runs the experiment
kinds end to end, applies verdict rules, and persists deterministic
artifacts (manifest.json, series.csv, fits.json, PSIWF1 snapshots).

Verdicts are pure functions of the recorded series and fit results, so a
run can be re-judged offline from its CSV alone.
"""

from __future__ import annotations

import copy
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..datagen import DataGenSpec, SpatialCutoff, construct_datum, localize
from ..errors import HartreeboxError, InvalidParameterError
from ..funcalc import ChebyshevWindow, SpectralWindow, speed_bound
from ..grid import Grid, WaveFunction, gaussian_packet, l2_norm, sobolev_norm
from ..observables import (
    ConeSpec,
    ObservableSeries,
    PropagationObservableSpec,
    collect_series,
    decay_fit,
    envelope_fit,
    propagation_observable,
    wt_tail_integrals,
)
from ..operators import HamiltonianOp
from ..potentials import check_conditions, evaluate_external
from ..propagators import StepperConfig, evolve_hartree, evolve_linear, evolve_nls
from .config import Scenario, config_hash, scenario_from_dict
from .snapshots import generator_version, write_snapshot

__all__ = ["RunRecord", "run_scenario", "sweep", "validate_run", "write_series_csv", "read_series_csv"]

TAIL_EXPONENT_MAX = -0.4      # cone tails must decay at least this fast
SHARPNESS_INNER_MIN = -0.1    # inner-cone tail must NOT decay faster than this
LINF_DECAY_TOL = 0.05
W_CONSISTENCY_TOL = 0.10


# ---------------------------------------------------------------------------
# Run record and persistence
# ---------------------------------------------------------------------------


@dataclass
class RunRecord:
    scenario: Scenario
    manifest: dict
    series: ObservableSeries = None
    fits: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)
    datum: WaveFunction = None
    trajectory_snapshots: list = field(default_factory=list)  # (time, WaveFunction)

    @property
    def passed(self) -> bool:
        return all(v["passed"] for v in self.verdicts)

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        h = self.scenario.hash
        if self.series is not None:
            write_series_csv(out / "series.csv", self.series, h)
        fits_doc = {"config_hash": h, "fits": _jsonable(self.fits)}
        (out / "fits.json").write_text(json.dumps(fits_doc, indent=2, sort_keys=True) + "\n")
        if self.datum is not None:
            snap_dir = out / "snapshots"
            snap_dir.mkdir(exist_ok=True)
            write_snapshot(
                snap_dir / "datum.psiwf",
                self.datum,
                {"scenario": self.scenario.scenario_id, "t": 0.0, "config_hash": h},
            )
        if self.trajectory_snapshots:
            snap_dir = out / "snapshots"
            snap_dir.mkdir(exist_ok=True)
            index = []
            for i, (t, psi) in enumerate(self.trajectory_snapshots):
                name = f"t_{i:05d}.psiwf"
                write_snapshot(
                    snap_dir / name,
                    psi,
                    {"scenario": self.scenario.scenario_id, "t": t, "config_hash": h},
                )
                index.append({"file": name, "t": t})
            (snap_dir / "index.json").write_text(
                json.dumps({"config_hash": h, "snapshots": index}, indent=2, sort_keys=True) + "\n"
            )
        self.manifest["verdicts"] = self.verdicts
        self.manifest["passed"] = self.passed
        (out / "manifest.json").write_text(
            json.dumps(_jsonable(self.manifest), indent=2, sort_keys=True) + "\n"
        )
        return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    if hasattr(obj, "__dataclass_fields__"):
        return _jsonable(
            {k: getattr(obj, k) for k in obj.__dataclass_fields__ if not k.startswith("_")}
        )
    return obj


def write_series_csv(path, series: ObservableSeries, cfg_hash: str):
    lines = ["# hartreebox-series-v1", f"# config_hash={cfg_hash}"]
    names = list(series.columns)
    lines.append(",".join(["t"] + names))
    cols = [np.asarray(series.columns[n]) for n in names]
    for i, t in enumerate(series.times):
        row = [repr(float(t))] + [repr(float(c[i])) for c in cols]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_series_csv(path) -> tuple:
    """Returns (times, columns dict, config hash)."""
    text = Path(path).read_text().strip().split("\n")
    cfg = None
    rows = []
    header = None
    for line in text:
        if line.startswith("# config_hash="):
            cfg = line.split("=", 1)[1]
        elif line.startswith("#"):
            continue
        elif header is None:
            header = line.split(",")
        else:
            rows.append([float(x) for x in line.split(",")])
    data = np.asarray(rows)
    cols = {name: data[:, j] for j, name in enumerate(header)}
    times = cols.pop("t")
    return times, cols, cfg


# ---------------------------------------------------------------------------
# Shared build steps
# ---------------------------------------------------------------------------


def _build_hamiltonian(scenario: Scenario) -> HamiltonianOp:
    grid = scenario.grid
    return HamiltonianOp(grid, evaluate_external(scenario.external, grid))


def _seed_state(scenario: Scenario, grid: Grid) -> WaveFunction:
    t = scenario.seed_state
    return gaussian_packet(
        grid,
        width=float(t["width"]),
        center=[float(x) for x in t["center"]],
        momentum=[float(x) for x in t["momentum"]],
        amplitude=float(t["amplitude"]),
    )


def _linear_datum(scenario: Scenario, h: HamiltonianOp) -> WaveFunction:
    """Windowed, localized, amplitude-scaled seed (the zero-coupling datum)."""
    dg = scenario.datagen
    seed = _seed_state(scenario, h.grid)
    target = float(dg["eps"])
    nrm = sobolev_norm(seed, float(dg["s"]))
    scaled = WaveFunction(h.grid, seed.values * (target / nrm))
    chi = localize(scaled, SpatialCutoff(float(dg["b"])))
    return ChebyshevWindow(h, scenario.window).apply(chi)


def _aux_speed_bound(scenario: Scenario) -> dict:
    """Speed bound on an auxiliary grid (the bound is a continuum quantity).

    The auxiliary lattice needs fine wavenumber spacing (set by the box
    size) and a top wavenumber comfortably above the window support's
    classical speed (set by the point count); it does not need the
    production grid's spectral span, which keeps the Chebyshev degree low.
    A free external potential allows a much smaller box.
    """
    kb = scenario.kbound
    grid = scenario.grid
    window = scenario.window
    if scenario.external.family == "zero":
        box_aux = min(grid.box_length, 64.0)
    else:
        box_aux = grid.box_length
    k_needed = 2.0 * math.sqrt(2.0 * max(window.e2, 0.5))
    n_aux = 8
    while n_aux < int(kb["aux_n"]) or math.pi * n_aux / box_aux < k_needed:
        n_aux *= 2
    aux = Grid(grid.dim, n_aux, box_aux)
    h_aux = HamiltonianOp(aux, evaluate_external(scenario.external, aux))
    res = speed_bound(h_aux, window, float(kb["tol"]), seed=scenario.seed + 101)
    return {
        "k_i": res.k_i,
        "residual": res.residual,
        "iterations": res.iterations,
        "aux_n": n_aux,
        "aux_box": box_aux,
        "window": {"e1": window.e1, "e2": window.e2, "shoulder": window.shoulder},
    }


def _cone_fit(series: ObservableSeries, cone: ConeSpec, window: tuple):
    vals = series.column(cone.label())
    limited = series.column(cone.label() + "_boxlimited") > 0
    keep = (series.times >= window[0]) & (series.times <= window[1]) & (~limited) & (vals > 0)
    if np.count_nonzero(keep) < 8:
        return None
    return decay_fit(series.times[keep], vals[keep])


def _fit_dict(fit) -> dict:
    if fit is None:
        return {"flags": ["insufficient_samples"]}
    return {
        "exponent": fit.exponent,
        "amplitude": fit.amplitude,
        "r2": fit.r2,
        "window": list(fit.window),
        "n_samples": fit.n_samples,
        "flags": list(fit.flags),
    }


def _verdict(rule: str, passed: bool, measured: dict, threshold: dict) -> dict:
    return {"rule": rule, "passed": bool(passed), "measured": _jsonable(measured),
            "threshold": _jsonable(threshold)}


# ---------------------------------------------------------------------------
# Experiment kinds
# ---------------------------------------------------------------------------


def _datagen_spec(scenario: Scenario, h: HamiltonianOp, eps: float = None) -> DataGenSpec:
    dg = scenario.datagen
    dt = scenario.stepper.dt
    return DataGenSpec(
        window=scenario.window,
        localization_radius=float(dg["b"]),
        phi_seed=_seed_state(scenario, h.grid),
        amplitude=float(eps if eps is not None else dg["eps"]),
        s_index=float(dg["s"]),
        gamma_index=float(dg["gamma"]),
        fp_tol=float(dg["fp_tol"]),
        max_iters=int(dg["max_iters"]),
        h=h,
        vspec=scenario.pair,
        stepper=StepperConfig(dt=dt, record_stride=1),
        tau_max=float(dg["tau_max"]),
        tol_tail=float(dg["tol_tail"]),
    )


def _measure_cone_run(scenario, h, traj, k_ref: float, manifest: dict):
    """Series + cone fits + propagation observable shared by the cone kinds."""
    dg = scenario.datagen
    cones_cfg = scenario.cones
    b = float(dg["b"])
    offset = float(cones_cfg["offset_multiplier"]) * b
    cones = tuple(
        ConeSpec(float(m) * k_ref, offset, b)
        for m in cones_cfg["speed_multipliers"]
    )
    series = collect_series(
        traj,
        sobolev_index=float(dg["s"]),
        weight_index=float(dg["gamma"]),
        lp_exponents=scenario.lp_exponents,
        cones=cones,
    )
    if traj.effective_potentials is not None:
        series = wt_tail_integrals(series)
    fits = {}
    verdicts = []
    for cone in cones:
        fit = _cone_fit(series, cone, scenario.fit_window)
        fits[cone.label()] = _fit_dict(fit)
        ok = fit is not None and fit.exponent <= TAIL_EXPONENT_MAX
        verdicts.append(_verdict(
            "lightcone_tail_decay",
            ok,
            {"cone": cone.label(), **_fit_dict(fit)},
            {"exponent_max": TAIL_EXPONENT_MAX},
        ))

    # propagation observable with threshold speed between k_ref and the cone
    c_min = min(c.speed for c in cones)
    v = 0.5 * (k_ref + c_min)
    pspec = PropagationObservableSpec(
        threshold_speed=v, offset=offset, scale=max(scenario.t_final, traj.times[-1]),
        ramp=max(c_min - v, 1e-6),
    )
    pobs = propagation_observable(traj, pspec)
    w_t = series.columns.get("w_t")
    env = envelope_fit(pobs["dphi_dt"], w_t, pspec.scale)
    l2sq = series.column("l2") ** 2
    phi_in_range = bool(
        np.all(pobs["phi"] >= -1e-12) and np.all(pobs["phi"] <= l2sq + 1e-9)
    )
    fits["propagation_observable"] = {
        "C": env["C"], "C1": env["C1"], "holds": env["holds"],
        "threshold_speed": v, "scale": pspec.scale, "ramp": pspec.ramp,
    }
    verdicts.append(_verdict(
        "propagation_observable_envelope",
        env["holds"] and env["C"] >= 0 and env["C1"] >= 0 and phi_in_range,
        {"C": env["C"], "C1": env["C1"], "phi_in_range": phi_in_range},
        {"nonnegative": True},
    ))
    manifest["propagation_observable"] = {
        "times": pobs["times"], "phi": pobs["phi"], "dphi_dt": pobs["dphi_dt"],
    }
    return series, fits, verdicts


def _run_linear_cone(scenario: Scenario, manifest: dict) -> RunRecord:
    h = _build_hamiltonian(scenario)
    kres = _aux_speed_bound(scenario)
    manifest["speed_bound"] = kres
    datum = _linear_datum(scenario, h)
    traj = evolve_linear(h, datum, scenario.t_final, scenario.stepper)
    series, fits, verdicts = _measure_cone_run(scenario, h, traj, kres["k_i"], manifest)
    rec = RunRecord(scenario, manifest, series, fits, verdicts, datum)
    _maybe_keep_snapshots(scenario, traj, rec)
    return rec


def _run_hartree_cone(scenario: Scenario, manifest: dict) -> RunRecord:
    h = _build_hamiltonian(scenario)
    kres = _aux_speed_bound(scenario)
    manifest["speed_bound"] = kres
    spec = _datagen_spec(scenario, h)
    datum_res = construct_datum(spec)
    manifest["datagen"] = {
        "iterations": datum_res.iterations,
        "residual": datum_res.residual,
        "contraction_ratios": list(datum_res.contraction_ratios),
        "tail_certificates": list(datum_res.tail_certificates),
        "admissibility": datum_res.admissibility,
        "seed_norm": datum_res.seed_norm,
    }
    traj = evolve_hartree(h, scenario.pair, datum_res.psi0, scenario.t_final, scenario.stepper)
    series, fits, verdicts = _measure_cone_run(scenario, h, traj, kres["k_i"], manifest)
    verdicts.append(_verdict(
        "datagen_contraction",
        all(r < 1.0 for r in datum_res.contraction_ratios),
        {"ratios": list(datum_res.contraction_ratios)},
        {"ratio_max": 1.0},
    ))
    rec = RunRecord(scenario, manifest, series, fits, verdicts, datum_res.psi0)
    _maybe_keep_snapshots(scenario, traj, rec)
    return rec


def _run_nls_cone(scenario: Scenario, manifest: dict) -> RunRecord:
    h = _build_hamiltonian(scenario)
    kres = _aux_speed_bound(scenario)
    manifest["speed_bound"] = kres
    datum = _linear_datum(scenario, h)
    traj = evolve_nls(h, scenario.nls_sigma, datum, scenario.t_final, scenario.stepper)
    series, fits, verdicts = _measure_cone_run(scenario, h, traj, kres["k_i"], manifest)
    rec = RunRecord(scenario, manifest, series, fits, verdicts, datum)
    _maybe_keep_snapshots(scenario, traj, rec)
    return rec


def _run_decay_rates(scenario: Scenario, manifest: dict) -> RunRecord:
    h = _build_hamiltonian(scenario)
    seed = _seed_state(scenario, h.grid)
    is_hartree = scenario.pair.family != "zero" and scenario.pair.amplitude != 0.0
    if is_hartree:
        traj = evolve_hartree(h, scenario.pair, seed, scenario.t_final, scenario.stepper)
    else:
        traj = evolve_linear(h, seed, scenario.t_final, scenario.stepper)
    series = collect_series(traj, lp_exponents=scenario.lp_exponents)
    if traj.effective_potentials is not None:
        series = wt_tail_integrals(series)
    window = scenario.fit_window
    fits, verdicts = {}, []
    keep = (series.times >= window[0]) & (series.times <= window[1])
    linf = series.column("lp_inf")
    fit_inf = decay_fit(series.times[keep], linf[keep])
    fits["lp_inf"] = _fit_dict(fit_inf)
    d = h.grid.dim
    target = -0.5 * d  # free-dispersion sup-norm rate
    verdicts.append(_verdict(
        "linf_decay_exponent",
        abs(fit_inf.exponent - target) <= LINF_DECAY_TOL,
        {"exponent": fit_inf.exponent},
        {"target": target, "tol": LINF_DECAY_TOL},
    ))
    if is_hartree:
        wvals = series.column("W_linf")
        ok = (series.times >= window[0]) & (series.times <= window[1]) & (wvals > 0)
        fit_w = decay_fit(series.times[ok], wvals[ok])
        fits["W_linf"] = _fit_dict(fit_w)
        rel = abs(fit_w.exponent - 2.0 * fit_inf.exponent) / abs(2.0 * fit_inf.exponent)
        verdicts.append(_verdict(
            "w_decay_consistency",
            rel <= W_CONSISTENCY_TOL,
            {"w_exponent": fit_w.exponent, "double_linf_exponent": 2.0 * fit_inf.exponent,
             "relative_gap": rel},
            {"tol": W_CONSISTENCY_TOL},
        ))
    rec = RunRecord(scenario, manifest, series, fits, verdicts)
    _maybe_keep_snapshots(scenario, traj, rec)
    return rec


def _run_datagen_probe(scenario: Scenario, manifest: dict) -> RunRecord:
    h = _build_hamiltonian(scenario)
    spec = _datagen_spec(scenario, h)
    res = construct_datum(spec)
    manifest["datagen"] = {
        "iterations": res.iterations,
        "residual": res.residual,
        "contraction_ratios": list(res.contraction_ratios),
        "tail_certificates": list(res.tail_certificates),
        "admissibility": res.admissibility,
        "seed_norm": res.seed_norm,
    }
    verdicts = [
        _verdict(
            "datagen_converged",
            res.iterations <= spec.max_iters and res.residual < spec.fp_tol,
            {"iterations": res.iterations, "residual": res.residual},
            {"max_iters": spec.max_iters, "fp_tol": spec.fp_tol},
        ),
        _verdict(
            "datagen_contraction",
            all(r < 1.0 for r in res.contraction_ratios),
            {"ratios": list(res.contraction_ratios)},
            {"ratio_max": 1.0},
        ),
    ]
    fits = {"contraction": {"ratios": list(res.contraction_ratios),
                            "max_ratio": max(res.contraction_ratios, default=0.0)}}
    return RunRecord(scenario, manifest, None, fits, verdicts, res.psi0)


def _run_kbound_validation(scenario: Scenario, manifest: dict) -> RunRecord:
    kb = scenario.kbound
    window = scenario.window
    p1, p2 = window.plateau
    results = []
    for sh in kb["shoulders"]:
        sub = copy.deepcopy(scenario.raw)
        sub.setdefault("window", {})
        sub["window"]["plateau"] = [p1, p2]
        sub["window"]["shoulder"] = float(sh)
        sc = scenario_from_dict(sub)
        results.append({"shoulder": float(sh), **_aux_speed_bound(sc)})
    manifest["kbound_sweep"] = results
    k_sharp_free = math.sqrt(2.0 * max(p2, 0.0))
    ks = [r["k_i"] for r in results]
    rs = [r["residual"] for r in results]
    shs = [r["shoulder"] for r in results]
    monotone = all(
        ks[i] >= ks[i + 1] - rs[i] - rs[i + 1] for i in range(len(ks) - 1)
    )
    brackets = []
    for sh, k, r in zip(shs, ks, rs):
        bound = math.sqrt(2.0 * (p2 + sh)) - k_sharp_free + r
        brackets.append(bool(-r <= k - k_sharp_free <= bound))
    # extrapolate the sharp-indicator value from the shoulder sweep
    slope, intercept = np.polyfit(shs, ks, 1)
    fits = {
        "kbound": {
            "shoulders": shs, "k_values": ks, "residuals": rs,
            "sharp_extrapolation": float(intercept),
            "sharp_reference_free": k_sharp_free,
        }
    }
    verdicts = [
        _verdict("kbound_monotone", monotone, {"k_values": ks}, {}),
        _verdict(
            "kbound_brackets_sharp_value",
            all(brackets),
            {"k_values": ks, "reference": k_sharp_free},
            {"per_shoulder_bound": "sqrt(2(E2+sh)) - sqrt(2 E2) + residual"},
        ),
    ]
    return RunRecord(scenario, manifest, None, fits, verdicts)


def _run_sharpness(scenario: Scenario, manifest: dict) -> RunRecord:
    if scenario.external.family != "zero" or (
        scenario.pair.family != "zero" and scenario.pair.amplitude != 0.0
    ):
        raise InvalidParameterError("sharpness runs require V = 0 and v = 0")
    h = _build_hamiltonian(scenario)
    window = scenario.window
    datum = _linear_datum(scenario, h)
    traj = evolve_linear(h, datum, scenario.t_final, scenario.stepper)
    c_ref = math.sqrt(2.0 * window.e2)  # top classical speed of the support
    cones_cfg = scenario.cones
    b = float(scenario.datagen["b"])
    offset = float(cones_cfg["offset_multiplier"]) * b
    inner = ConeSpec(float(cones_cfg["inner_multiplier"]) * c_ref, offset, b)
    outer = ConeSpec(float(cones_cfg["outer_multiplier"]) * c_ref, offset, b)
    series = collect_series(traj, lp_exponents=scenario.lp_exponents, cones=(inner, outer))
    manifest["sharpness"] = {"support_top_speed": c_ref,
                             "inner_speed": inner.speed, "outer_speed": outer.speed}
    fits, verdicts = {}, []
    fi = _cone_fit(series, inner, scenario.fit_window)
    fo = _cone_fit(series, outer, scenario.fit_window)
    fits["inner_" + inner.label()] = _fit_dict(fi)
    fits["outer_" + outer.label()] = _fit_dict(fo)
    verdicts.append(_verdict(
        "sharpness_inner_escapes",
        fi is not None and fi.exponent > SHARPNESS_INNER_MIN,
        {"exponent": None if fi is None else fi.exponent},
        {"exponent_min": SHARPNESS_INNER_MIN},
    ))
    verdicts.append(_verdict(
        "sharpness_outer_decays",
        fo is not None and fo.exponent <= TAIL_EXPONENT_MAX,
        {"exponent": None if fo is None else fo.exponent},
        {"exponent_max": TAIL_EXPONENT_MAX},
    ))
    rec = RunRecord(scenario, manifest, series, fits, verdicts, datum)
    _maybe_keep_snapshots(scenario, traj, rec)
    return rec


def _maybe_keep_snapshots(scenario: Scenario, traj, rec: RunRecord):
    save = scenario.raw.get("evolution", {}).get("save_snapshots", scenario.grid.dim == 1)
    if save:
        rec.trajectory_snapshots = list(zip(traj.times.tolist(), traj.snapshots))


_KIND_RUNNERS = {
    "linear_cone": _run_linear_cone,
    "hartree_cone": _run_hartree_cone,
    "nls_cone": _run_nls_cone,
    "decay_rates": _run_decay_rates,
    "datagen_probe": _run_datagen_probe,
    "kbound_validation": _run_kbound_validation,
    "sharpness": _run_sharpness,
}


def run_scenario(scenario: Scenario, out_dir=None, seed: int = None) -> RunRecord:
    """Execute one scenario end to end; optionally persist artifacts."""
    if seed is not None:
        raw = copy.deepcopy(scenario.raw)
        raw.setdefault("scenario", {})["seed"] = int(seed)
        scenario = scenario_from_dict(raw)
    t0 = time.time()
    manifest = {
        "schema": "hartreebox-run-v1",
        "scenario_id": scenario.scenario_id,
        "kind": scenario.kind,
        "config_hash": scenario.hash,
        "scenario_raw": scenario.raw,
        "generator": generator_version(),
        "seed": scenario.seed,
        "conditions": check_conditions(scenario.external, scenario.pair, scenario.grid.dim),
    }
    try:
        rec = _KIND_RUNNERS[scenario.kind](scenario, manifest)
    except HartreeboxError as exc:
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        manifest["elapsed_seconds"] = time.time() - t0
        rec = RunRecord(scenario, manifest, verdicts=[_verdict(
            "execution", False, {"error": manifest["error"]}, {})])
        if out_dir is not None:
            rec.write(out_dir)
        raise
    manifest["elapsed_seconds"] = time.time() - t0
    if out_dir is not None:
        rec.write(out_dir)
    return rec


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def _set_path(raw: dict, axis: str, value):
    keys = axis.split(".")
    node = raw
    for k in keys[:-1]:
        if k not in node or not isinstance(node[k], dict):
            node[k] = {}
        node = node[k]
    node[keys[-1]] = value


def _sweep_cell(payload):
    raw, out_dir = payload
    scenario = scenario_from_dict(raw)
    try:
        rec = run_scenario(scenario, out_dir=out_dir)
        return {
            "config_hash": scenario.hash,
            "passed": rec.passed,
            "error": "",
            "metrics": _cell_metrics(rec),
        }
    except HartreeboxError as exc:
        return {"config_hash": scenario.hash, "passed": False,
                "error": f"{type(exc).__name__}: {exc}", "metrics": {}}


def _cell_metrics(rec: RunRecord) -> dict:
    out = {}
    for v in rec.verdicts:
        for key, val in v["measured"].items():
            if isinstance(val, (int, float)) and not isinstance(val, bool):
                out[f"{v['rule']}.{key}"] = val
    dg = rec.manifest.get("datagen")
    if dg:
        ratios = [r for r in dg.get("contraction_ratios", []) if isinstance(r, (int, float))]
        if ratios:
            out["datagen.max_ratio"] = max(ratios)
        out["datagen.iterations"] = dg.get("iterations")
        out["datagen.residual"] = dg.get("residual")
    sb = rec.manifest.get("speed_bound")
    if sb:
        out["speed_bound.k_i"] = sb["k_i"]
    return out


def sweep(scenario: Scenario, axis: str, values, out_dir, threads: int = 1) -> list:
    """Run independent copies of the scenario with axis set to each value.

    Per-cell failures are isolated into the summary; the aggregate table
    goes to sweep_summary.csv in out_dir.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payloads = []
    for i, value in enumerate(values):
        raw = copy.deepcopy(scenario.raw)
        _set_path(raw, axis, value)
        payloads.append((raw, str(out / f"cell_{i:03d}")))
    if threads > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_sweep_cell, payloads))
    else:
        rows = [_sweep_cell(p) for p in payloads]

    metric_names = sorted({k for r in rows for k in r["metrics"]})
    lines = ["# hartreebox-sweep-v1", f"# axis={axis}"]
    lines.append(",".join(["value", "config_hash", "passed", "error"] + metric_names))
    for value, row in zip(values, rows):
        cells = [repr(value) if isinstance(value, float) else str(value),
                 row["config_hash"], str(row["passed"]), json.dumps(row["error"])]
        for name in metric_names:
            val = row["metrics"].get(name)
            cells.append("" if val is None else repr(float(val)))
        lines.append(",".join(cells))
    (out / "sweep_summary.csv").write_text("\n".join(lines) + "\n")
    return rows


# ---------------------------------------------------------------------------
# Validation of persisted runs
# ---------------------------------------------------------------------------


def validate_run(run_dir) -> dict:
    """Re-derive the config hash and check every artifact embeds it."""
    run = Path(run_dir)
    problems = []
    manifest_path = run / "manifest.json"
    if not manifest_path.exists():
        return {"ok": False, "problems": ["manifest.json missing"]}
    manifest = json.loads(manifest_path.read_text())
    expected = manifest.get("config_hash", "")
    rehash = config_hash(manifest.get("scenario_raw", {}))
    if rehash != expected:
        problems.append(f"manifest hash mismatch: {rehash} != {expected}")
    csv_path = run / "series.csv"
    if csv_path.exists():
        _, _, embedded = read_series_csv(csv_path)
        if embedded != expected:
            problems.append(f"series.csv hash mismatch: {embedded} != {expected}")
    fits_path = run / "fits.json"
    if fits_path.exists():
        doc = json.loads(fits_path.read_text())
        if doc.get("config_hash") != expected:
            problems.append("fits.json hash mismatch")
    snap_dir = run / "snapshots"
    if snap_dir.exists():
        for side in sorted(snap_dir.glob("*.psiwf.json")):
            meta = json.loads(side.read_text())
            if meta.get("config_hash") != expected:
                problems.append(f"{side.name} hash mismatch")
    return {"ok": not problems, "problems": problems, "config_hash": expected}
