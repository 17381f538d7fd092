"""Controllers and the closed-loop runner that logs 60 s metric windows."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from ..errors import InvalidPlan
from .signal import APPROACHES, NUM_PHASES, PHASES, check_phase
from .world import SimWorld

DEFAULT_PLAN = ((1, 30.0), (2, 15.0), (3, 30.0), (4, 15.0))


@dataclass
class LogRow:
    sim_time_s: float
    cur_waiting_s: float
    cur_mean_speed_mps: float
    cur_fuel_ml: float
    queue_N: int
    queue_E: int
    queue_S: int
    queue_W: int
    active_phase: int
    queue_veh_s: float


LOG_COLUMNS = [f.name for f in fields(LogRow)]


class FixedTimeController:
    def __init__(self, plan=DEFAULT_PLAN):
        self.plan = validate_plan(plan)
        self._i = 0

    @property
    def cycle_s(self) -> float:
        return sum(g for _, g in self.plan)

    def decide(self, world):
        phase, green = self.plan[self._i % len(self.plan)]
        self._i += 1
        return phase, green


class ActuatedController:
    """Queue-proportional greens in a fixed phase order.

    green = clamp(queued vehicles on the phase's lanes * headway, min, max)
    """

    def __init__(self, headway_s=2.0, min_green_s=15.0, max_green_s=60.0, order=(1, 2, 3, 4)):
        self.headway_s, self.min_green_s, self.max_green_s = headway_s, min_green_s, max_green_s
        self.order = tuple(check_phase(p) for p in order)
        self._i = 0

    def green_for(self, queue: int) -> float:
        return float(np.clip(queue * self.headway_s, self.min_green_s, self.max_green_s))

    def decide(self, world):
        phase = self.order[self._i % len(self.order)]
        self._i += 1
        return phase, self.green_for(world.phase_queue(phase))


class RandomController:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def decide(self, world):
        return int(self.rng.integers(1, NUM_PHASES + 1)), None


def validate_plan(plan):
    plan = tuple((check_phase(p), float(g)) for p, g in plan)
    if not plan:
        raise InvalidPlan("empty plan")
    if any(g <= 0 for _, g in plan):
        raise InvalidPlan("green times must be positive")
    served = set().union(*(PHASES[p] for p, _ in plan))
    missing = sorted(set(range(8)) - served)
    if missing:
        raise InvalidPlan(f"movements {missing} never receive green")
    return plan


def run_controller(world: SimWorld, controller, duration_s: float, window_s: float = 60.0,
                   warmup_s: float = 0.0) -> list[LogRow]:
    """Drive ``world`` for ``warmup_s + duration_s``; log windows after warm-up only."""
    t_warm_end = world.time + warmup_s
    t_end = t_warm_end + duration_s
    reader = None
    next_log = None
    if warmup_s <= 0:
        reader, next_log = world.new_reader(), world.time + window_s
    rows = []
    while world.time < t_end - 1e-9:
        if world.awaiting_decision:
            phase, green = controller.decide(world)
            world.set_phase(phase, green)
        world.step()
        if reader is None and world.time >= t_warm_end - 1e-9:
            reader = world.new_reader()
            next_log = world.time + window_s
        elif reader is not None and world.time >= next_log - 1e-9:
            rows.append(_row(world, reader.read()))
            next_log += window_s
    return rows


def run_fixed_time(world: SimWorld, plan=DEFAULT_PLAN, duration_s: float = 3600.0, **kw) -> list[LogRow]:
    return run_controller(world, FixedTimeController(plan), duration_s, **kw)


def run_actuated(world: SimWorld, duration_s: float = 3600.0, headway_s=2.0, min_green_s=15.0,
                 max_green_s=60.0, **kw) -> list[LogRow]:
    return run_controller(world, ActuatedController(headway_s, min_green_s, max_green_s), duration_s, **kw)


def _row(world, m) -> LogRow:
    return LogRow(world.time, m.cur_waiting_s, m.cur_mean_speed_mps, m.cur_fuel_ml,
                  *(m.queue[a] for a in APPROACHES), world.signal.active or 0, m.queue_veh_s)


def write_metrics_log(rows: list[LogRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in asdict(r).items()})
