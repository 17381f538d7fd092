from .control import (
    DEFAULT_PLAN,
    ActuatedController,
    FixedTimeController,
    LogRow,
    RandomController,
    run_actuated,
    run_controller,
    run_fixed_time,
    validate_plan,
    write_metrics_log,
)
from .signal import APPROACHES, CONFLICT, LEFT, PHASE_NAMES, PHASES, RIGHT, THROUGH, SignalState
from .world import MetricsWindow, SimParams, SimWorld, fuel_step

__all__ = [
    "APPROACHES", "CONFLICT", "DEFAULT_PLAN", "LEFT", "PHASES", "PHASE_NAMES", "RIGHT", "THROUGH",
    "ActuatedController", "FixedTimeController", "LogRow", "MetricsWindow", "RandomController", "SignalState",
    "SimParams", "SimWorld", "fuel_step", "run_actuated", "run_controller", "run_fixed_time", "validate_plan",
    "write_metrics_log",
]
