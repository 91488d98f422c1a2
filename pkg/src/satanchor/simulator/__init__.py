"""Slot-based simulation of satellite-anchor and baseline mobility management."""
from .engine import RunLog, SlotRecord, UserSample, probe_rtt, run
from .scenario import ConvergenceModel, GroundStation, LatencyMode, MechanismKind, Scenario, UserTrace
from .world import World, build_world, plan_division

__all__ = [
    "ConvergenceModel",
    "GroundStation",
    "LatencyMode",
    "MechanismKind",
    "RunLog",
    "Scenario",
    "SlotRecord",
    "UserSample",
    "UserTrace",
    "World",
    "build_world",
    "plan_division",
    "probe_rtt",
    "run",
]
