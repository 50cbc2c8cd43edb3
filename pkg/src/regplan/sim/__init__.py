"""Deterministic closed-loop scenario simulator and compliance auditor."""

from regplan.sim.config import (
    ActorSpec,
    ScenarioConfig,
    SignalSpec,
    SignSpec,
    load_config,
    dump_config,
)
from regplan.sim.world import ACCEL_BOUND, CURVATURE_BOUND, EgoCommand, EgoState, SimState, World, step
from regplan.sim.eventlog import EventLog, Sample
from regplan.sim.audit import ComplianceReport, Finding, check_compliance
from regplan.sim.scenarios import get_scenario, scenario_library, scenario_variants
from regplan.sim.runner import run_scenario

__all__ = [
    "ActorSpec",
    "ScenarioConfig",
    "SignalSpec",
    "SignSpec",
    "load_config",
    "dump_config",
    "ACCEL_BOUND",
    "CURVATURE_BOUND",
    "EgoCommand",
    "EgoState",
    "SimState",
    "World",
    "step",
    "EventLog",
    "Sample",
    "ComplianceReport",
    "Finding",
    "check_compliance",
    "get_scenario",
    "scenario_library",
    "scenario_variants",
    "run_scenario",
]
