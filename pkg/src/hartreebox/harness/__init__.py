"""Scenario configuration, experiment orchestration, persistence, and CLI."""

from .config import Scenario, load_scenario, scenario_from_dict
from .runner import RunRecord, run_scenario, sweep
from .snapshots import read_snapshot, write_snapshot

__all__ = [
    "Scenario",
    "load_scenario",
    "scenario_from_dict",
    "RunRecord",
    "run_scenario",
    "sweep",
    "read_snapshot",
    "write_snapshot",
]
