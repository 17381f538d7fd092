"""Deterministic microscopic simulation of one signalized intersection.

Each compass arm carries four inbound lanes up to the stop line (left,
two through, right) and one outbound lane.  Vehicles follow a Krauss-style
safe-speed rule, cross the junction in a fixed latency once their movement
is green, and leave the network at the far end of their outbound lane.

Lane indices::

    0..11   controlled inbound lanes, approach-major: [L, T1, T2] x N, E, S, W
    12..15  right-turn lanes N, E, S, W (never signal controlled)
    16..19  outbound lanes towards N, E, S, W
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import kernels as _default_kernels
from ..errors import ConsistencyError
from ..network import Network, Route, load_network
from .signal import APPROACHES, GREEN, LEFT, PHASES, RIGHT, THROUGH, SignalState

N_CONTROLLED = 12
N_LANES = 20

PENDING, ON_LANE, TRANSIT, EXITED = 0, 1, 2, 3

# fuel model, see fuel_step
C_IDLE = 0.25    # mL/s
C_SPEED = 0.035  # mL/m
C_POWER = 0.06   # mL s^2/m^2


def fuel_step(speed_mps, accel_mps2, dt_s=1.0):
    """Fuel burnt over one step (mL): idle + distance + positive-power terms."""
    return np.maximum(0.0, C_IDLE + C_SPEED * speed_mps + C_POWER * np.maximum(0.0, accel_mps2) * speed_mps) * dt_s


@dataclass(frozen=True)
class SimParams:
    dt_s: float = 1.0
    v_max: float = 20.0
    accel: float = 2.0
    decel: float = 4.5
    min_gap: float = 2.5
    veh_length: float = 5.0
    tau: float = 1.0
    yellow_s: float = 3.0
    fixed_green_s: float = 15.0
    crossing_delay_s: float = 3.0
    stop_speed: float = 0.1
    detection_range_m: float = 500.0
    check_every_step: bool = True


@dataclass
class MetricsWindow:
    window_s: float
    cur_waiting_s: float
    cur_mean_speed_mps: float
    cur_fuel_ml: float
    queue: dict[str, int]
    queue_veh_s: float = 0.0


@dataclass
class StepEvents:
    inserted: int = 0
    crossed: int = 0
    exited: int = 0


def lane_of(approach: int, movement: int, through_slot: int = 0) -> int:
    if movement == RIGHT:
        return 12 + approach
    if movement == LEFT:
        return 3 * approach
    return 3 * approach + 1 + through_slot


def movement_of_turn(approach: int, exit_arm: int) -> int:
    rel = (exit_arm - approach) % 4
    if rel == 2:
        return THROUGH
    if rel == 1:
        return LEFT
    if rel == 3:
        return RIGHT
    raise ValueError(f"U-turn from approach {APPROACHES[approach]} is not modelled")


# controlled lanes of each movement index 0..7
MOVEMENT_LANES = {2 * a + LEFT: (3 * a,) for a in range(4)}
MOVEMENT_LANES.update({2 * a + THROUGH: (3 * a + 1, 3 * a + 2) for a in range(4)})


class WindowReader:
    """Deltas of the world's running totals since the previous ``read``."""

    def __init__(self, world: "SimWorld"):
        self.world = world
        self._snap = world._totals.copy()
        self._t0 = world.time

    def read(self) -> MetricsWindow:
        w = self.world
        d = w._totals - self._snap
        wait, speed_sum, speed_n, fuel, qvs = d
        m = MetricsWindow(
            window_s=w.time - self._t0,
            cur_waiting_s=float(wait),
            cur_mean_speed_mps=float(speed_sum / speed_n) if speed_n > 0 else 0.0,
            cur_fuel_ml=float(fuel),
            queue={a: w.queue_count(a) for a in APPROACHES},
            queue_veh_s=float(qvs),
        )
        self._snap = w._totals.copy()
        self._t0 = w.time
        return m


class SimWorld:
    def __init__(self, routes: list[Route] = (), network: Network | None = None,
                 params: SimParams = SimParams(), kernels=None):
        self.params = params
        self.network = network or load_network()
        self.k = kernels or _default_kernels
        self.time = 0.0
        self.signal = SignalState(params.fixed_green_s, params.yellow_s)

        self.lane_len = np.empty(N_LANES)
        for a, name in enumerate(APPROACHES):
            arm = self.network.arm_length_m(name)
            self.lane_len[3 * a:3 * a + 3] = arm
            self.lane_len[12 + a] = arm
            self.lane_len[16 + a] = arm

        n = len(routes)
        self._cap = 0
        self._n = 0
        self._alloc(max(n, 16))
        self.injected = 0
        self.exited = 0
        # running totals over in-range controlled vehicles:
        # waiting s, speed sum, speed samples, fuel mL, queued veh*s (whole lanes)
        self._totals = np.zeros(5)
        self._reader = WindowReader(self)

        sig = self.network.signalized
        pending = {a: [] for a in range(4)}
        for r in routes:
            seq = r.node_sequence
            if sig not in seq[1:-1]:
                raise ValueError(f"route {r.id} does not cross signalized node {sig}")
            i = seq.index(sig)
            a = APPROACHES.index(self.network.approach_of(seq[i - 1]))
            e = APPROACHES.index(self.network.approach_of(seq[i + 1]))
            v = self._new_vehicle(a, movement_of_turn(a, e), e, r.depart_time_s)
            pending[a].append(v)
        self._pending = {a: sorted(vs, key=lambda v: (self.depart[v], v)) for a, vs in pending.items()}
        self._pend_ptr = {a: 0 for a in range(4)}
        self._sort()

    # ---------------------------------------------------------------- storage

    def _alloc(self, cap):
        def grow(name, dtype, fill=0):
            old = getattr(self, name, None)
            new = np.full(cap, fill, dtype=dtype)
            if old is not None:
                new[:self._n] = old[:self._n]
            setattr(self, name, new)
        for name, dt, fill in (("approach", np.int64, -1), ("movement", np.int64, -1), ("exit_arm", np.int64, -1),
                               ("lane", np.int64, -1), ("pos", float, 0.0), ("speed", float, 0.0),
                               ("length", float, self.params.veh_length), ("wait", float, 0.0),
                               ("fuel", float, 0.0), ("status", np.int8, PENDING), ("depart", float, 0.0),
                               ("release_t", float, np.inf)):
            grow(name, dt, fill)
        self._cap = cap

    def _new_vehicle(self, approach, movement, exit_arm, depart):
        if self._n == self._cap:
            self._alloc(2 * self._cap)
        v = self._n
        self._n += 1
        self.approach[v], self.movement[v], self.exit_arm[v], self.depart[v] = approach, movement, exit_arm, depart
        return v

    def add_vehicle(self, approach: str, movement: int, pos_m: float, speed_mps: float = 0.0,
                    through_slot: int = 0, exit_arm: str | None = None) -> int:
        """Place a vehicle directly on an inbound lane (bypasses the route queue)."""
        a = APPROACHES.index(approach)
        if exit_arm is None:
            e = {THROUGH: (a + 2) % 4, LEFT: (a + 1) % 4, RIGHT: (a + 3) % 4}[movement]
        else:
            e = APPROACHES.index(exit_arm)
        v = self._new_vehicle(a, movement, e, self.time)
        self.lane[v] = lane_of(a, movement, through_slot)
        self.pos[v], self.speed[v], self.status[v] = pos_m, speed_mps, ON_LANE
        self.injected += 1
        self._sort()
        return v

    # ---------------------------------------------------------------- queries

    @property
    def on_network(self) -> int:
        s = self.status[:self._n]
        return int(np.count_nonzero((s == ON_LANE) | (s == TRANSIT)))

    @property
    def awaiting_decision(self) -> bool:
        return self.signal.awaiting_decision

    def set_phase(self, phase: int, green_s: float | None = None) -> None:
        self.signal.set_phase(phase, green_s)

    def lane_modes(self) -> np.ndarray:
        modes = np.zeros(N_LANES, dtype=np.int8)
        mv = self.signal.movement_modes()
        for m, lanes in MOVEMENT_LANES.items():
            modes[list(lanes)] = mv[m]
        return modes

    def green_movements(self) -> frozenset[int]:
        return self.signal.green_movements()

    def queue_count(self, approach: str) -> int:
        a = APPROACHES.index(approach)
        idx = self._idx
        ln = self.lane[idx]
        sel = (ln >= 3 * a) & (ln < 3 * a + 3) & (self.speed[idx] < self.params.stop_speed)
        return int(np.count_nonzero(sel))

    def phase_queue(self, phase: int) -> int:
        """Stopped vehicles on the lanes a phase would serve."""
        lanes = [ln for m in PHASES[phase] for ln in MOVEMENT_LANES[m]]
        idx = self._idx
        sel = np.isin(self.lane[idx], lanes) & (self.speed[idx] < self.params.stop_speed)
        return int(np.count_nonzero(sel))

    def controlled_snapshot(self):
        """(lane, distance of front bumper to stop line, speed, length) on controlled lanes."""
        idx = self._idx
        keep = self.lane[idx] < N_CONTROLLED
        idx = idx[keep]
        ln = self.lane[idx]
        return ln, self.lane_len[ln] - self.pos[idx], self.speed[idx], self.length[idx]

    def window_metrics(self) -> MetricsWindow:
        return self._reader.read()

    def new_reader(self) -> WindowReader:
        return WindowReader(self)

    @property
    def total_queue_veh_s(self) -> float:
        return float(self._totals[4])

    # ---------------------------------------------------------------- dynamics

    def _sort(self):
        act = np.flatnonzero(self.status[:self._n] == ON_LANE)
        order = np.lexsort((-self.pos[act], self.lane[act]))
        self._idx = act[order]

    def _tails(self):
        """Rearmost vehicle position/speed per lane (inf when empty)."""
        tail_pos = np.full(N_LANES, np.inf)
        tail_v = np.zeros(N_LANES)
        idx = self._idx
        if idx.size:
            ln = self.lane[idx]
            last = np.ones(idx.size, dtype=bool)
            last[:-1] = ln[1:] != ln[:-1]
            tail_pos[ln[last]] = self.pos[idx[last]]
            tail_v[ln[last]] = self.speed[idx[last]]
        return tail_pos, tail_v

    def _entry_gap(self, tail_pos, lane):
        return tail_pos[lane] - self.params.veh_length - self.params.min_gap

    def _insert_pending(self, tail_pos, tail_v, ev):
        p = self.params
        for a in range(4):
            queue = self._pending[a]
            i = self._pend_ptr[a]
            while i < len(queue) and self.depart[queue[i]] <= self.time + 1e-9:
                v = queue[i]
                mv = self.movement[v]
                if mv == THROUGH:
                    l1, l2 = lane_of(a, THROUGH, 0), lane_of(a, THROUGH, 1)
                    lane = l2 if tail_pos[l2] > tail_pos[l1] else l1
                else:
                    lane = lane_of(a, mv)
                if self._entry_gap(tail_pos, lane) < 0.0:
                    break
                self.lane[v], self.pos[v], self.speed[v], self.status[v] = lane, 0.0, 0.0, ON_LANE
                tail_pos[lane], tail_v[lane] = 0.0, 0.0
                self.injected += 1
                ev.inserted += 1
                i += 1
            self._pend_ptr[a] = i

    def _release_transit(self, tail_pos, tail_v):
        tr = np.flatnonzero((self.status[:self._n] == TRANSIT) & (self.release_t[:self._n] <= self.time + 1e-9))
        if not tr.size:
            return
        tr = tr[np.lexsort((tr, self.release_t[tr]))]
        for v in tr:
            lane = 16 + self.exit_arm[v]
            g = self._entry_gap(tail_pos, lane)
            if g < 0.0:
                continue
            self.lane[v], self.pos[v], self.status[v] = lane, 0.0, ON_LANE
            self.speed[v] = min(self.speed[v], g / self.params.dt_s, self.params.v_max)
            tail_pos[lane], tail_v[lane] = 0.0, self.speed[v]

    def step(self, dt_s: float | None = None) -> StepEvents:
        p = self.params
        dt = p.dt_s if dt_s is None else dt_s
        ev = StepEvents()
        modes = self.lane_modes()

        tail_pos, tail_v = self._tails()
        self._release_transit(tail_pos, tail_v)
        self._insert_pending(tail_pos, tail_v, ev)
        self._sort()

        idx = self._idx
        if idx.size:
            ln = self.lane[idx]
            v_old = self.speed[idx]
            new_v, new_x = self.k.follow_step(ln, self.pos[idx], v_old, self.length[idx], self.lane_len, modes,
                                              p.v_max, p.accel, p.decel, p.min_gap, p.tau, dt)
            self.speed[idx] = new_v
            self.pos[idx] = new_x
            past_end = new_x > self.lane_len[ln]
            crossed = past_end & (ln < 16)
            gone = past_end & (ln >= 16)
            if crossed.any():
                cv = idx[crossed]
                self.status[cv] = TRANSIT
                self.release_t[cv] = self.time + dt + p.crossing_delay_s
                self.lane[cv] = -1
                ev.crossed = int(cv.size)
            if gone.any():
                self.status[idx[gone]] = EXITED
                self.lane[idx[gone]] = -1
                self.exited += int(np.count_nonzero(gone))
                ev.exited = int(np.count_nonzero(gone))

            stay = ~past_end
            sv = new_v[stay]
            accel = (new_v - v_old)[stay] / dt
            fuel = fuel_step(sv, accel, dt)
            stopped = sv < p.stop_speed
            vid = idx[stay]
            self.wait[vid[stopped]] += dt
            self.fuel[vid] += fuel
            sl = ln[stay]
            ctrl = sl < N_CONTROLLED
            in_range = ctrl & (self.lane_len[sl] - new_x[stay] < p.detection_range_m)
            self._totals[0] += dt * np.count_nonzero(in_range & stopped)
            self._totals[1] += sv[in_range].sum()
            self._totals[2] += np.count_nonzero(in_range)
            self._totals[3] += fuel[in_range].sum()
            self._totals[4] += dt * np.count_nonzero(ctrl & stopped)

        self._sort()
        if p.check_every_step:
            self.check_consistency()
        self.time += dt
        self.signal.advance(dt)
        return ev

    def check_consistency(self) -> None:
        idx = self._idx
        if idx.size < 2:
            return
        ln = self.lane[idx]
        same = ln[1:] == ln[:-1]
        lead, foll = idx[:-1][same], idx[1:][same]
        slack = self.pos[lead] - self.length[lead] - self.params.min_gap - self.pos[foll]
        if slack.size and slack.min() < -1e-6:
            k = int(np.argmin(slack))
            raise ConsistencyError(
                f"t={self.time}: vehicle {foll[k]} overlaps leader {lead[k]} on lane {ln[1:][same][k]} "
                f"(slack {slack[k]:.3g} m)")

    def run_until(self, t_end: float) -> None:
        while self.time < t_end - 1e-9:
            self.step()
