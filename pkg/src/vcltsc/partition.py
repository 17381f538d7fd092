"""Logarithmic-linear variable cell partition of a detection range.

Cell ``x`` (1-based, counted upstream from the stop line) has length
``f(x) = a*ln(x+1) + b*x``.  The coefficients are pinned by two conditions:
the first cell has a prescribed length ``l1`` and the ``n`` cells add up to
the detection range ``d``.  Because ``n`` is fixed while ``d`` varies, a
policy trained on one sensor range sees the same tensor shape at another.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateDenominator,
    InvalidSpec,
    LastCellInvalid,
    NonMonotonicLayout,
    NonPositiveCell,
    OutOfRange,
)

LN2 = math.log(2.0)


@dataclass(frozen=True)
class PartitionSpec:
    detection_range_m: float
    first_cell_m: float = 7.0
    num_cells: int = 10

    def check(self) -> None:
        d, l1, n = self.detection_range_m, self.first_cell_m, self.num_cells
        if not (isinstance(n, (int, np.integer)) and n >= 2):
            raise InvalidSpec(f"num_cells must be an integer >= 2, got {n!r}")
        if not (math.isfinite(d) and math.isfinite(l1) and d > 0 and l1 > 0):
            raise InvalidSpec(f"lengths must be positive and finite (d={d}, l1={l1})")
        if not d > l1:
            raise InvalidSpec(f"detection range {d} must exceed first cell {l1}")


@dataclass(frozen=True)
class Coefficients:
    a: float
    b: float


@dataclass(frozen=True)
class CellLayout:
    lengths_m: tuple[int, ...]
    real_lengths_m: tuple[float, ...] = ()
    boundaries_m: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if not self.boundaries_m:
            object.__setattr__(self, "boundaries_m", tuple(np.concatenate([[0.0], np.cumsum(self.lengths_m)]).tolist()))

    @property
    def num_cells(self) -> int:
        return len(self.lengths_m)

    @property
    def detection_range_m(self) -> float:
        return self.boundaries_m[-1]

    def boundaries(self) -> np.ndarray:
        return np.asarray(self.boundaries_m, dtype=float)


def log_factorial_sum(n: int) -> float:
    """sum_{x=1..n} ln(x+1), i.e. ln((n+1)!)."""
    return math.lgamma(n + 2)


def linear_sum(n: int) -> int:
    return n * (n + 1) // 2


def solve_coefficients(spec: PartitionSpec) -> Coefficients:
    spec.check()
    d, l1, n = float(spec.detection_range_m), float(spec.first_cell_m), int(spec.num_cells)
    s_log = log_factorial_sum(n)
    s_lin = linear_sum(n)
    denom = s_log - LN2 * s_lin
    if abs(denom) < 1e-12:
        raise DegenerateDenominator(f"denominator {denom!r} too small for n={n}")
    a = (d - l1 * s_lin) / denom
    b = l1 - LN2 * a
    return Coefficients(a, b)


def cell_lengths(spec: PartitionSpec) -> list[float]:
    """Unrounded cell lengths, nearest-to-stop-line first."""
    c = solve_coefficients(spec)
    x = np.arange(1, spec.num_cells + 1, dtype=float)
    f = c.a * np.log(x + 1.0) + c.b * x
    if np.any(f <= 0.0):
        bad = int(np.argmax(f <= 0.0)) + 1
        raise NonPositiveCell(f"cell {bad} has non-positive length {f[bad - 1]:.6g} for {spec}")
    steps = np.diff(f)
    if np.any(steps <= 0.0):
        bad = int(np.argmax(steps <= 0.0)) + 1
        raise NonMonotonicLayout(f"cell {bad + 1} ({f[bad]:.6g}) is not longer than cell {bad} ({f[bad - 1]:.6g})")
    return f.tolist()


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def rounded_layout(spec: PartitionSpec) -> CellLayout:
    """Integer-metre layout; the last cell absorbs the rounding remainder."""
    real = cell_lengths(spec)
    d = spec.detection_range_m
    if float(d) != round(d):
        raise InvalidSpec(f"rounded layouts need an integer detection range, got {d}")
    lengths = [round_half_up(v) for v in real[:-1]]
    lengths.append(int(round(d)) - sum(lengths))
    if lengths[-1] <= 0 or lengths[-1] <= lengths[-2]:
        raise LastCellInvalid(f"remainder cell {lengths[-1]} breaks the layout {lengths}")
    problems = validate_layout(CellLayout(tuple(lengths)), d)
    if problems:
        raise NonMonotonicLayout("; ".join(problems))
    return CellLayout(tuple(lengths), tuple(real))


def fixed_layout(detection_range_m: float, num_cells: int) -> CellLayout:
    """Uniform cells of length d/n (the fixed-cell-length baseline)."""
    if num_cells < 1 or detection_range_m <= 0:
        raise InvalidSpec(f"bad fixed layout d={detection_range_m}, n={num_cells}")
    w = detection_range_m / num_cells
    return CellLayout((w,) * num_cells, (w,) * num_cells,
                      tuple(np.linspace(0.0, detection_range_m, num_cells + 1).tolist()))


def cell_index_of(distance_to_stopline_m: float, layout: CellLayout) -> int:
    """1-based cell holding a position; cells are half-open ``[lower, upper)``."""
    b = layout.boundaries_m
    if distance_to_stopline_m < 0 or distance_to_stopline_m >= b[-1]:
        raise OutOfRange(f"{distance_to_stopline_m} m is outside [0, {b[-1]})")
    return int(np.searchsorted(b, distance_to_stopline_m, side="right"))


def validate_layout(layout: CellLayout, detection_range_m: float | None = None,
                    first_cell_m: float | None = None) -> list[str]:
    """List every violated layout invariant (empty when the layout is valid)."""
    out = []
    lengths = list(layout.lengths_m)
    if len(lengths) < 2:
        out.append(f"need at least 2 cells, got {len(lengths)}")
    for i, v in enumerate(lengths, 1):
        if not v > 0:
            out.append(f"cell {i} length {v} is not positive")
    for i in range(1, len(lengths)):
        if not lengths[i] > lengths[i - 1]:
            out.append(f"monotonicity: cell {i + 1} ({lengths[i]}) <= cell {i} ({lengths[i - 1]})")
    if detection_range_m is not None and sum(lengths) != detection_range_m:
        out.append(f"sum: cells add to {sum(lengths)}, expected {detection_range_m}")
    if layout.real_lengths_m:
        if len(layout.real_lengths_m) != len(lengths):
            out.append("real_lengths_m and lengths_m differ in size")
        elif first_cell_m is not None and abs(layout.real_lengths_m[0] - first_cell_m) > 1e-6:
            out.append(f"first cell {layout.real_lengths_m[0]} != {first_cell_m}")
    return out
