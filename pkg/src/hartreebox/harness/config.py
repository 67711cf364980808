"""TOML scenario configuration with a versioned schema and content hashing.

The raw parsed table is retained verbatim; the config hash is the sha256 of
its canonical JSON encoding, and every output artifact embeds that hash.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..errors import InvalidParameterError
from ..funcalc import SpectralWindow
from ..grid import Grid
from ..potentials import ExternalPotentialSpec, PairPotentialSpec
from ..propagators import StepperConfig

__all__ = ["SCHEMA_VERSION", "Scenario", "load_scenario", "scenario_from_dict", "config_hash"]

SCHEMA_VERSION = 1

KINDS = (
    "linear_cone",
    "hartree_cone",
    "nls_cone",
    "decay_rates",
    "datagen_probe",
    "kbound_validation",
    "sharpness",
)


def config_hash(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode()).hexdigest()


def _get(raw: dict, table: str, key: str, default=None, required: bool = False):
    t = raw.get(table, {})
    if key not in t:
        if required:
            raise InvalidParameterError(f"config missing [{table}] {key}")
        return default
    return t[key]


@dataclass(frozen=True)
class Scenario:
    """Validated scenario built from one raw TOML table."""

    raw: dict = field(repr=False)
    scenario_id: str
    kind: str
    seed: int
    hash: str

    @property
    def grid(self) -> Grid:
        return Grid(
            int(_get(self.raw, "grid", "dim", 1)),
            int(_get(self.raw, "grid", "n", required=True)),
            float(_get(self.raw, "grid", "box_length", required=True)),
        )

    @property
    def external(self) -> ExternalPotentialSpec:
        t = self.raw.get("external", {})
        return ExternalPotentialSpec(
            family=t.get("family", "zero"),
            amplitude=float(t.get("amplitude", 0.0)),
            decay_rate=float(t.get("decay_rate", 3.0)),
            width=float(t.get("width", 1.0)),
        )

    @property
    def pair(self) -> PairPotentialSpec:
        t = self.raw.get("pair", {})
        return PairPotentialSpec(
            family=t.get("family", "zero"),
            amplitude=float(t.get("amplitude", 0.0)),
            width=float(t.get("width", 1.0)),
            lq_index=float(t.get("lq_index", 1.0)),
            smoothness_index=float(t.get("smoothness_index", 2.0)),
        )

    @property
    def window(self) -> SpectralWindow:
        t = self.raw.get("window", {})
        if "plateau" in t:
            p1, p2 = (float(x) for x in t["plateau"])
            sh = float(t.get("shoulder", 0.25 * (p2 - p1)))
            return SpectralWindow(p1 - sh, p2 + sh, sh)
        e1, e2 = (float(x) for x in t.get("interval", (0.0, 1.0)))
        frac = float(t.get("plateau_fraction", 0.5))
        sh = 0.5 * (1.0 - frac) * (e2 - e1)
        return SpectralWindow(e1, e2, sh)

    @property
    def stepper(self) -> StepperConfig:
        t = self.raw.get("evolution", {})
        return StepperConfig(
            dt=float(t.get("dt", 5e-3)),
            record_stride=int(t.get("record_stride", 1)),
        )

    @property
    def t_final(self) -> float:
        return float(_get(self.raw, "evolution", "t_final", 40.0))

    @property
    def fit_window(self) -> tuple:
        t = self.raw.get("fits", {})
        lo, hi = t.get("window", (5.0, self.t_final))
        return (float(lo), float(hi))

    @property
    def seed_state(self) -> dict:
        t = dict(self.raw.get("seed_state", {}))
        t.setdefault("width", 2.0)
        t.setdefault("momentum", [0.0] * int(_get(self.raw, "grid", "dim", 1)))
        t.setdefault("center", [0.0] * int(_get(self.raw, "grid", "dim", 1)))
        t.setdefault("amplitude", 1.0)
        return t

    @property
    def datagen(self) -> dict:
        t = dict(self.raw.get("datagen", {}))
        t.setdefault("b", 10.0)
        t.setdefault("eps", 0.05)
        t.setdefault("s", 1.0)
        t.setdefault("gamma", 1.0)
        t.setdefault("fp_tol", 1e-8)
        t.setdefault("max_iters", 10)
        t.setdefault("tau_max", 20.0)
        t.setdefault("tol_tail", 1e-3)
        return t

    @property
    def cones(self) -> dict:
        t = dict(self.raw.get("cones", {}))
        t.setdefault("speed_multipliers", [1.25])
        t.setdefault("offset_multiplier", 1.5)
        t.setdefault("inner_multiplier", 0.8)
        t.setdefault("outer_multiplier", 1.25)
        return t

    @property
    def kbound(self) -> dict:
        t = dict(self.raw.get("kbound", {}))
        t.setdefault("tol", 1e-6)
        t.setdefault("aux_n", 16)  # minimum; auto-sized to the window support
        t.setdefault("shoulders", [0.2, 0.1, 0.05])
        return t

    @property
    def nls_sigma(self) -> float:
        return float(_get(self.raw, "nls", "sigma", 1.0))

    @property
    def lp_exponents(self) -> tuple:
        t = self.raw.get("fits", {})
        ps = [float(p) for p in t.get("lp", [])]
        return tuple(ps) + (float("inf"),)


def scenario_from_dict(raw: dict) -> Scenario:
    if int(raw.get("schema", 0)) != SCHEMA_VERSION:
        raise InvalidParameterError(
            f"unsupported or missing schema version (expected {SCHEMA_VERSION})"
        )
    sc = raw.get("scenario", {})
    kind = sc.get("kind")
    if kind not in KINDS:
        raise InvalidParameterError(f"unknown experiment kind {kind!r}; expected one of {KINDS}")
    scenario = Scenario(
        raw=raw,
        scenario_id=str(sc.get("id", "unnamed")),
        kind=kind,
        seed=int(sc.get("seed", 0)),
        hash=config_hash(raw),
    )
    # touch the lazy accessors so malformed tables fail at load time
    scenario.grid, scenario.external, scenario.pair, scenario.window, scenario.stepper
    return scenario


def load_scenario(path) -> Scenario:
    with open(Path(path), "rb") as fh:
        raw = tomllib.load(fh)
    return scenario_from_dict(raw)
