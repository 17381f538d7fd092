"""Signal phases, movement conflicts and the green/yellow state machine."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

APPROACHES = ("N", "E", "S", "W")
LEFT, THROUGH, RIGHT = 0, 1, 2
MOVEMENT_NAMES = ("Left", "Through", "Right")

GREEN, YELLOW, RED = 0, 1, 2


def movement_index(approach: str | int, movement: int) -> int:
    """Index 0..7 of a signal-controlled movement (left/through per approach)."""
    a = APPROACHES.index(approach) if isinstance(approach, str) else int(approach)
    if movement not in (LEFT, THROUGH):
        raise ValueError("right turns are not signal controlled")
    return 2 * a + movement


def _m(approach, movement):
    return movement_index(approach, movement)


# action id -> protected movements
PHASES: dict[int, frozenset[int]] = {
    1: frozenset({_m("E", THROUGH), _m("W", THROUGH)}),
    2: frozenset({_m("E", LEFT), _m("W", LEFT)}),
    3: frozenset({_m("N", THROUGH), _m("S", THROUGH)}),
    4: frozenset({_m("N", LEFT), _m("S", LEFT)}),
    5: frozenset({_m("E", THROUGH), _m("E", LEFT)}),
    6: frozenset({_m("S", THROUGH), _m("S", LEFT)}),
    7: frozenset({_m("W", THROUGH), _m("W", LEFT)}),
    8: frozenset({_m("N", THROUGH), _m("N", LEFT)}),
}
PHASE_NAMES = {
    1: "EW-Through", 2: "EW-Left", 3: "NS-Through", 4: "NS-Left",
    5: "E-Through+Left", 6: "S-Through+Left", 7: "W-Through+Left", 8: "N-Through+Left",
}
NUM_PHASES = len(PHASES)

# Two movements are compatible iff some phase protects both.
COMPATIBLE = np.eye(8, dtype=bool)
for _mv in PHASES.values():
    for _i in _mv:
        for _j in _mv:
            COMPATIBLE[_i, _j] = True
CONFLICT = ~COMPATIBLE


def check_phase(phase: int) -> int:
    if isinstance(phase, bool) or int(phase) != phase or not 1 <= phase <= NUM_PHASES:
        raise ValueError(f"phase must be in 1..{NUM_PHASES}, got {phase!r}")
    return int(phase)


@dataclass
class SignalState:
    """Phase machine: green for the active phase, yellow between phases.

    Movements shared by the outgoing and incoming phase stay green through the
    yellow; movements only in the outgoing phase show yellow; the rest is red.
    """

    fixed_green_s: float = 15.0
    yellow_s: float = 3.0
    active: int | None = None
    mode: int = GREEN
    time_in_mode_s: float = 0.0
    green_remaining_s: float = 0.0
    _next: int | None = field(default=None, repr=False)
    _next_green_s: float = field(default=0.0, repr=False)

    @property
    def awaiting_decision(self) -> bool:
        return self.active is None or (self.mode == GREEN and self.green_remaining_s <= 1e-9)

    def set_phase(self, phase: int, green_s: float | None = None) -> None:
        phase = check_phase(phase)
        g = self.fixed_green_s if green_s is None else float(green_s)
        if self.mode == YELLOW:
            raise RuntimeError("cannot select a phase during a yellow interval")
        if self.active is None:
            self.active, self.mode, self.time_in_mode_s, self.green_remaining_s = phase, GREEN, 0.0, g
        elif phase == self.active:
            self.green_remaining_s = max(self.green_remaining_s, 0.0) + g
        else:
            self._next, self._next_green_s = phase, g
            self.mode, self.time_in_mode_s = YELLOW, 0.0

    def movement_modes(self) -> np.ndarray:
        out = np.full(8, RED, dtype=np.int8)
        if self.active is None:
            return out
        cur = PHASES[self.active]
        if self.mode == GREEN:
            out[list(cur)] = GREEN
        else:
            nxt = PHASES[self._next]
            out[list(cur - nxt)] = YELLOW
            if cur & nxt:
                out[list(cur & nxt)] = GREEN
        return out

    def green_movements(self) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.movement_modes() == GREEN).tolist())

    def advance(self, dt: float) -> None:
        self.time_in_mode_s += dt
        if self.mode == YELLOW:
            if self.time_in_mode_s >= self.yellow_s - 1e-9:
                self.active, self._next = self._next, None
                self.mode, self.time_in_mode_s = GREEN, 0.0
                self.green_remaining_s = self._next_green_s
        elif self.active is not None:
            self.green_remaining_s -= dt
