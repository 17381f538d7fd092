"""Seeded evaluation experiments, method comparisons and plot-ready data."""

from __future__ import annotations

import csv
import enum
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

from .agents import PolicyController, load_policy
from .errors import CheckpointMismatch, ConfigError, MissingInput
from .network import DemandSpec, Network, generate_demand, generate_trajectories, load_network
from .nn import load_checkpoint
from .sim import ActuatedController, FixedTimeController, RandomController, SimParams, SimWorld, run_controller

PAPER_FLOWS = (500, 1000, 1500, 2000, 2500, 3000)


class Method(str, enum.Enum):
    VCL_PPO = "VclPpo"
    VCL_DQN = "VclDqn"
    FCL_PPO = "FclPpo"
    AGG_PPO = "AggPpo"
    FIXED_TIME = "FixedTime"
    ACTUATED = "Actuated"
    RANDOM = "Random"

    @property
    def learned(self) -> bool:
        return self in (Method.VCL_PPO, Method.VCL_DQN, Method.FCL_PPO, Method.AGG_PPO)


EXPECTED_STATE = {Method.VCL_PPO: ("ppo", "vcl"), Method.VCL_DQN: ("dqn", "vcl"),
                  Method.FCL_PPO: ("ppo", "fcl"), Method.AGG_PPO: ("ppo", "agg")}


@dataclass(frozen=True)
class ScenarioSpec:
    flow_veh_per_h: float
    warmup_s: float = 1800.0
    eval_s: float = 5400.0
    replicates: int = 10
    seed_base: int = 0
    window_s: float = 60.0

    def check(self) -> None:
        if self.flow_veh_per_h < 0:
            raise ConfigError("flow must be >= 0")
        if self.warmup_s < 0 or self.eval_s <= 0:
            raise ConfigError("need warmup_s >= 0 and eval_s > 0")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")

    @property
    def name(self) -> str:
        return f"{self.flow_veh_per_h:g}"


@dataclass(frozen=True)
class MethodSpec:
    controller: Method
    checkpoint: str | None = None
    detection_range_m: float | None = None   # runtime range; defaults to the checkpoint's
    num_cells: int | None = None             # runtime cell count; must equal the checkpoint's
    label: str | None = None

    @property
    def name(self) -> str:
        return self.label or self.controller.value

    def check(self) -> None:
        if self.controller.learned and not self.checkpoint:
            raise ConfigError(f"{self.controller.value} needs a checkpoint")


@dataclass(frozen=True)
class ResultRow:
    method: str
    scenario: str
    replicate: str
    cumulative_queue_veh_s: float
    cumulative_wait_s: float
    mean_speed: float
    total_fuel_ml: float


RESULT_COLUMNS = [f.name for f in fields(ResultRow)]


def replicate_routes(scenario: ScenarioSpec, k: int, network: Network):
    """Routes for replicate ``k``: seed ``seed_base + k``, shared by every method."""
    rng = np.random.default_rng(scenario.seed_base + k)
    horizon = scenario.warmup_s + scenario.eval_s
    d = generate_demand(rng, DemandSpec.fixed_flow(scenario.flow_veh_per_h, horizon), network.sources)
    return generate_trajectories(rng, network, d.counts, horizon)


def make_controller(method: MethodSpec, seed: int):
    method.check()
    c = method.controller
    if c is Method.FIXED_TIME:
        return FixedTimeController(), None
    if c is Method.ACTUATED:
        return ActuatedController(), None
    if c is Method.RANDOM:
        return RandomController(np.random.default_rng(10_000 + seed)), None
    ck = load_checkpoint(method.checkpoint)
    want_agent, want_state = EXPECTED_STATE[c]
    if (ck.meta.get("agent"), ck.meta.get("state")) != (want_agent, want_state):
        raise CheckpointMismatch(f"{method.checkpoint} holds {ck.meta.get('agent')}/{ck.meta.get('state')}, "
                                 f"{c.value} needs {want_agent}/{want_state}")
    pol: PolicyController = load_policy(method.checkpoint, method.detection_range_m, method.num_cells)
    return pol, pol.encoder.detection_range_m


def _aggregate(method: str, scenario: str, k, rows) -> ResultRow:
    speeds = [r.cur_mean_speed_mps for r in rows]
    return ResultRow(method, scenario, str(k),
                     float(sum(r.queue_veh_s for r in rows)),
                     float(sum(r.cur_waiting_s for r in rows)),
                     float(np.mean(speeds)) if speeds else 0.0,
                     float(sum(r.cur_fuel_ml for r in rows)))


def run_replicate(scenario: ScenarioSpec, method: MethodSpec, k: int, network: Network | None = None) -> ResultRow:
    network = network or load_network()
    seed = scenario.seed_base + k
    controller, d = make_controller(method, seed)
    params = SimParams(detection_range_m=d if d is not None else SimParams.detection_range_m,
                       check_every_step=False)
    try:
        world = SimWorld(replicate_routes(scenario, k, network), network, params)
        rows = run_controller(world, controller, scenario.eval_s, scenario.window_s, scenario.warmup_s)
    except Exception as exc:  # attach replicate context, keep the type
        exc.args = (f"{method.name} @ {scenario.name} veh/h, replicate {k}: {exc}",) + exc.args[1:]
        raise
    return _aggregate(method.name, scenario.name, k, rows)


def _mean_row(rows: list[ResultRow]) -> ResultRow:
    a = np.array([astuple(r)[3:] for r in rows], dtype=float)
    return ResultRow(rows[0].method, rows[0].scenario, "mean", *(float(x) for x in a.mean(axis=0)))


def write_results(rows: list[ResultRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow([r.method, r.scenario, r.replicate, *(repr(x) for x in astuple(r)[3:])])


def read_results(path: str | Path) -> list[ResultRow]:
    p = Path(path)
    if not p.exists():
        raise MissingInput(f"result file {p} not found")
    with open(p, newline="", encoding="utf-8") as fh:
        return [ResultRow(r["method"], r["scenario"], r["replicate"], *(float(r[c]) for c in RESULT_COLUMNS[3:]))
                for r in csv.DictReader(fh)]


def run_experiment(scenario: ScenarioSpec, method: MethodSpec, out_dir: str | Path | None = None,
                   workers: int = 1) -> list[ResultRow]:
    """All replicates plus a trailing mean row; written to ``<method>_<flow>.csv`` if ``out_dir``."""
    scenario.check()
    method.check()
    ks = range(scenario.replicates)
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(run_replicate, [scenario] * len(ks), [method] * len(ks), ks))
    else:
        net = load_network()
        rows = [run_replicate(scenario, method, k, net) for k in ks]
    rows.sort(key=lambda r: int(r.replicate))
    rows.append(_mean_row(rows))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_results(rows, out / f"{method.name}_{scenario.name}.csv")
    return rows


def transfer_eval(checkpoint: str | Path, detection_range_m: float, scenario: ScenarioSpec,
                  native_checkpoint: str | Path | None = None, num_cells: int | None = None,
                  out_dir: str | Path | None = None) -> dict[str, list[ResultRow]]:
    """Transferred vs natively trained vs fixed-time, on identical seeds."""
    ck = load_checkpoint(checkpoint)
    n = num_cells if num_cells is not None else ck.partition[2]
    kind = {"vcl": Method.VCL_PPO, "fcl": Method.FCL_PPO, "agg": Method.AGG_PPO}[ck.meta.get("state", "vcl")]
    if ck.meta.get("agent") == "dqn":
        kind = Method.VCL_DQN
    methods = [MethodSpec(kind, str(checkpoint), detection_range_m, n, label="transferred")]
    if native_checkpoint is not None:
        methods.append(MethodSpec(kind, str(native_checkpoint), detection_range_m, n, label="native"))
    methods.append(MethodSpec(Method.FIXED_TIME, label="fixed_time"))
    out = {m.name: run_experiment(scenario, m, out_dir) for m in methods}
    if out_dir is not None:
        write_results([r for rows in out.values() for r in rows], Path(out_dir) / "transfer_comparison.csv")
    return out


@dataclass
class Comparison:
    means: dict[tuple[str, str], ResultRow]          # (method, scenario) -> mean row
    rankings: dict[str, list[str]]                   # scenario -> methods by ascending cumulative wait
    spread: dict[str, float]                         # scenario -> max - min mean cumulative wait


def compare_methods(scenarios: list[ScenarioSpec], methods: list[MethodSpec], out_dir: str | Path) -> Comparison:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for m in methods:
        m.check()
        if m.checkpoint and not Path(m.checkpoint).exists():
            raise MissingInput(f"checkpoint {m.checkpoint} not found")
    means = {}
    for sc in scenarios:
        for m in methods:
            means[(m.name, sc.name)] = run_experiment(sc, m, out / "runs")[-1]
    rankings, spread = {}, {}
    for sc in scenarios:
        cells = [(means[(m.name, sc.name)].cumulative_wait_s, m.name) for m in methods]
        rankings[sc.name] = [name for _, name in sorted(cells)]
        waits = [w for w, _ in cells]
        spread[sc.name] = max(waits) - min(waits)
    with open(out / "compare_long.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["flow_veh_per_h", "method", "metric", "value"])
        for (mname, sname), r in sorted(means.items(), key=lambda kv: (float(kv[0][1]), kv[0][0])):
            w.writerow([sname, mname, "cumulative_queue_veh_s", repr(r.cumulative_queue_veh_s)])
            w.writerow([sname, mname, "cumulative_wait_s", repr(r.cumulative_wait_s)])
    with open(out / "compare_rankings.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["flow_veh_per_h", "rank", "method", "cumulative_wait_s", "spread_s"])
        for sname in sorted(rankings, key=float):
            for i, mname in enumerate(rankings[sname], 1):
                w.writerow([sname, i, mname, repr(means[(mname, sname)].cumulative_wait_s), repr(spread[sname])])
    return Comparison(means, rankings, spread)


# ---------------------------------------------------------------- plot data

def _tidy(path: Path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "series", "value"])
        for x, s, v in rows:
            w.writerow([x, s, repr(float(v))])


def emit_plot_data(result_files: list[str | Path], out_dir: str | Path,
                   train_logs: list[str | Path] = ()) -> list[Path]:
    """Long-format (x, series, value) CSVs; nothing is rendered."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    means = []
    for f in result_files:
        means += [r for r in read_results(f) if r.replicate == "mean"]
    means.sort(key=lambda r: (float(r.scenario), r.method))
    written = []
    for fname, attr in (("queue_by_flow.csv", "cumulative_queue_veh_s"), ("wait_by_flow.csv", "cumulative_wait_s")):
        _tidy(out / fname, [(r.scenario, r.method, getattr(r, attr)) for r in means])
        written.append(out / fname)
    for log in train_logs:
        p = Path(log)
        if not p.exists():
            raise MissingInput(f"training log {p} not found")
        with open(p, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        dst = out / f"curve_{p.stem}.csv"
        _tidy(dst, [(r["episode"], "reward", r["mean_reward"]) for r in rows])
        written.append(dst)
    return written
