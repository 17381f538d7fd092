"""Lane x cell x channel state tensors, historical-max normalisation, reward.

Channels, in order: vehicle count, mean speed, space occupancy.  Count and
speed attach a vehicle to the cell holding its front bumper; occupancy
apportions each vehicle's body across every cell it overlaps.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .partition import CellLayout, fixed_layout

N_CHANNELS = 3
COUNT, SPEED, OCCUPANCY = range(N_CHANNELS)
DEFAULT_FLOORS = (1.0, 20.0, 1.0)


@dataclass
class NormState:
    max_hist: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_FLOORS))

    def __post_init__(self):
        self.max_hist = np.asarray(self.max_hist, dtype=float).copy()
        if self.max_hist.shape != (N_CHANNELS,) or np.any(self.max_hist <= 0):
            raise ValueError(f"max_hist must be 3 positive floats, got {self.max_hist}")

    def copy(self) -> "NormState":
        return NormState(self.max_hist.copy())


def normalize(tensor: np.ndarray, norm: NormState, update: bool = True) -> tuple[np.ndarray, NormState]:
    """Divide each channel (last axis) by its historical maximum.

    New maxima are recorded before dividing, so outputs stay in [0, 1].  With
    ``update=False`` the maxima are frozen and outputs are clipped instead.
    """
    x = np.asarray(tensor, dtype=float)
    flat = x.reshape(-1, N_CHANNELS)
    if update and flat.size:
        norm.max_hist = np.maximum(norm.max_hist, flat.max(axis=0))
    out = (flat / norm.max_hist).reshape(x.shape)
    if not update:
        out = np.minimum(out, 1.0)
    return out, norm


def occupancy(lower_m: float, upper_m: float, fronts_m, lengths_m) -> float:
    """Overlapped vehicle length in ``[lower, upper)`` over the cell length, capped at 1."""
    width = upper_m - lower_m
    if width <= 0:
        raise ValueError("cell length must be positive")
    f = np.asarray(fronts_m, dtype=float)
    r = f + np.asarray(lengths_m, dtype=float)
    ov = np.clip(np.minimum(upper_m, r) - np.maximum(lower_m, f), 0.0, None).sum()
    return float(min(ov / width, 1.0))


def _encode(world, boundaries: np.ndarray, n_lanes: int = 12) -> np.ndarray:
    lane, dist, speed, length = world.controlled_snapshot()
    count, speed_sum, occ_len = kernels.encode_cells(lane, dist, speed, length, boundaries, n_lanes)
    out = np.empty(count.shape + (N_CHANNELS,))
    out[..., COUNT] = count
    out[..., SPEED] = np.divide(speed_sum, count, out=np.zeros_like(speed_sum), where=count > 0)
    out[..., OCCUPANCY] = np.minimum(occ_len / np.diff(boundaries), 1.0)
    return out


def encode_raw(world, layout: CellLayout) -> np.ndarray:
    """Unnormalised (12, n_cells, 3) tensor for a cell layout."""
    return _encode(world, layout.boundaries())


def encode_fcl(world, detection_range_m: float, num_cells: int) -> np.ndarray:
    return encode_raw(world, fixed_layout(detection_range_m, num_cells))


def encode_aggregate(world, detection_range_m: float) -> np.ndarray:
    """Per-lane [count, mean speed, occupancy] over the whole range: 36 entries."""
    return _encode(world, np.array([0.0, float(detection_range_m)])).reshape(-1)


class StateEncoder:
    """Binds a cell layout (or the aggregate view) to a running NormState."""

    def __init__(self, kind: str, layout: CellLayout | None = None, detection_range_m: float | None = None,
                 norm: NormState | None = None):
        if kind not in ("vcl", "fcl", "agg"):
            raise ValueError(f"unknown encoder kind {kind!r}")
        self.kind = kind
        self.layout = layout
        self.detection_range_m = detection_range_m if detection_range_m is not None else layout.detection_range_m
        self.norm = norm or NormState()
        self.update_norm = True

    @property
    def shape(self) -> tuple[int, ...]:
        if self.kind == "agg":
            return (12 * N_CHANNELS,)
        return (12, self.layout.num_cells, N_CHANNELS)

    def raw(self, world) -> np.ndarray:
        if self.kind == "agg":
            return encode_aggregate(world, self.detection_range_m)
        return encode_raw(world, self.layout)

    def __call__(self, world) -> np.ndarray:
        x, self.norm = normalize(self.raw(world), self.norm, update=self.update_norm)
        return x


# ---------------------------------------------------------------- reward

@dataclass(frozen=True)
class RewardWeights:
    w_wait: float = -0.7
    w_speed: float = 0.2
    w_fuel: float = -0.1
    norm_wait_s: float = 200.0
    norm_speed_mps: float = 20.0
    norm_fuel_ml: float = 100.0


# Alternative normalisers quoted alongside the formula (15 m/s, 50 mL).
PROSE_REWARD_WEIGHTS = RewardWeights(norm_speed_mps=15.0, norm_fuel_ml=50.0)


def reward(metrics, weights: RewardWeights = RewardWeights()) -> float:
    wait = min(metrics.cur_waiting_s / weights.norm_wait_s, 1.0)
    speed = min(metrics.cur_mean_speed_mps / weights.norm_speed_mps, 1.0)
    fuel = min(metrics.cur_fuel_ml / weights.norm_fuel_ml, 1.0)
    # weights are tenths; summing in tenths keeps results like -0.7 - 0.1 == -0.8 exact
    tenths = (round(weights.w_wait * 10, 12) * wait + round(weights.w_speed * 10, 12) * speed
              + round(weights.w_fuel * 10, 12) * fuel)
    return tenths / 10


# ---------------------------------------------------------------- dumps

def write_tensor(tensor: np.ndarray, path: str | Path) -> None:
    """3 little-endian int32 dims, then float32 values in C order."""
    t = np.asarray(tensor)
    if t.ndim != 3:
        raise ValueError("tensor dumps are (lanes, cells, channels)")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<3i", *t.shape))
        fh.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    shape = struct.unpack_from("<3i", raw)
    return np.frombuffer(raw, dtype="<f4", offset=12).reshape(shape).copy()
