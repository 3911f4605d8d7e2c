"""Python bindings for the adaptive traffic-light controller."""

from ._core import (
    Action,
    Phase,
    PhaseGateQNet,
    ReplayPalace,
    TrafficEnv,
    fixed_plan,
    percent_change,
    run_baseline,
    scenario_flows,
    scenarios,
    timetable_action,
)

__all__ = [
    "Action",
    "Phase",
    "PhaseGateQNet",
    "ReplayPalace",
    "TrafficEnv",
    "fixed_plan",
    "percent_change",
    "run_baseline",
    "scenario_flows",
    "scenarios",
    "timetable_action",
]
