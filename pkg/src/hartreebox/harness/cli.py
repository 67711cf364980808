"""Command-line surface.

Exit codes: 0 all verdicts pass, 1 a verdict failed, 2 execution error.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

from ..errors import HartreeboxError
from .config import load_scenario, scenario_from_dict
from .runner import run_scenario, sweep, validate_run

_FORCED_KIND = {
    "kbound": "kbound_validation",
    "prepare-data": "datagen_probe",
    "decay": "decay_rates",
}
_CONE_KINDS = ("linear_cone", "hartree_cone", "nls_cone", "sharpness")


def _parse_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hartreebox",
        description="Pseudo-spectral Hartree/NLS simulator and verification harness",
    )
    parser.add_argument("--config", type=Path, help="scenario TOML file")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--seed", type=int, help="override the scenario seed")
    parser.add_argument("--threads", type=int, default=1,
                        help="parallel runs (sweeps only)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("simulate", "run the experiment kind configured in the scenario"),
        ("kbound", "estimate the propagation speed bound (shoulder sweep)"),
        ("prepare-data", "construct the admissible initial datum"),
        ("lightcone", "run a light-cone experiment"),
        ("decay", "measure dispersive decay rates"),
    ]:
        sub.add_parser(name, help=help_text)
    p_sweep = sub.add_parser("sweep", help="run a parameter sweep")
    p_sweep.add_argument("--axis", required=True, help="dotted config path, e.g. datagen.eps")
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated values for the axis")
    p_val = sub.add_parser("validate", help="check a run directory's embedded hashes")
    p_val.add_argument("--run", type=Path, required=True)
    p_rep = sub.add_parser("report", help="validate and summarize a run directory")
    p_rep.add_argument("--run", type=Path, required=True)
    return parser


def _load(args) -> "Scenario":
    if args.config is None:
        raise HartreeboxError("--config is required for this command")
    scenario = load_scenario(args.config)
    raw = copy.deepcopy(scenario.raw)
    changed = False
    forced = _FORCED_KIND.get(args.command)
    if forced and raw["scenario"].get("kind") != forced:
        raw["scenario"]["kind"] = forced
        changed = True
    if args.command == "lightcone" and raw["scenario"].get("kind") not in _CONE_KINDS:
        raw["scenario"]["kind"] = "hartree_cone"
        changed = True
    if args.seed is not None:
        raw["scenario"]["seed"] = args.seed
        changed = True
    return scenario_from_dict(raw) if changed else scenario


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            result = validate_run(args.run)
            print(json.dumps(result, indent=2))
            return 0 if result["ok"] else 1
        if args.command == "report":
            result = validate_run(args.run)
            manifest_path = Path(args.run) / "manifest.json"
            manifest = json.loads(manifest_path.read_text())
            report = {
                "validation": result,
                "scenario_id": manifest.get("scenario_id"),
                "kind": manifest.get("kind"),
                "config_hash": manifest.get("config_hash"),
                "passed": manifest.get("passed"),
                "verdicts": manifest.get("verdicts", []),
            }
            out = Path(args.run) / "report.json"
            out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
            print(json.dumps(report, indent=2, sort_keys=True))
            return 0 if (result["ok"] and manifest.get("passed")) else 1
        if args.command == "sweep":
            scenario = _load(args)
            values = [_parse_value(v) for v in args.values.split(",") if v != ""]
            out = args.out or Path("runs") / f"{scenario.scenario_id}-sweep"
            rows = sweep(scenario, args.axis, values, out, threads=args.threads)
            print(f"sweep summary written to {out / 'sweep_summary.csv'}")
            return 0 if all(r["passed"] for r in rows) else 1

        scenario = _load(args)
        out = args.out or Path("runs") / scenario.scenario_id
        rec = run_scenario(scenario, out_dir=out)
        for v in rec.verdicts:
            state = "PASS" if v["passed"] else "FAIL"
            print(f"[{state}] {v['rule']}: {json.dumps(v['measured'])}")
        print(f"artifacts in {out}")
        return 0 if rec.passed else 1
    except HartreeboxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
