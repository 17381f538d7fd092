"""Time the numba and numpy kernel backends side by side.

    python benchmarks/bench_kernels.py [--vehicles 400] [--repeat 200] [--sim-seconds 3600]

Reports per-call timings for the car-following step and the cell encoder on a
synthetic queue, then a full seeded simulation run per backend.  Results of
both backends are checked for agreement before any timing is printed.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from vcltsc.kernels import available_backends, get_backend
from vcltsc.network import DemandSpec, generate_demand, generate_trajectories, load_network
from vcltsc.partition import PartitionSpec, rounded_layout
from vcltsc.sim import FixedTimeController, SimParams, SimWorld, run_controller


def synthetic_queue(n_vehicles: int, n_lanes: int = 20, lane_len: float = 1500.0, seed: int = 0):
    rng = np.random.default_rng(seed)
    lane = np.sort(rng.integers(0, n_lanes, n_vehicles))
    pos = np.empty(n_vehicles)
    speed = rng.uniform(0, 20, n_vehicles)
    for ln in np.unique(lane):
        sel = np.flatnonzero(lane == ln)
        # leader first, spaced 7.5 m + jitter
        pos[sel] = lane_len - 1.0 - np.cumsum(7.5 + rng.uniform(0, 20, sel.size))
    pos = np.maximum(pos, 0.0)
    length = np.full(n_vehicles, 5.0)
    modes = rng.integers(0, 3, n_lanes).astype(np.int8)
    return lane, pos, speed, length, np.full(n_lanes, lane_len), modes


def best_of(fn, repeat):
    fn()  # warm-up (includes JIT compile for numba)
    best = np.inf
    for _ in range(5):
        t = time.perf_counter()
        for _ in range(repeat):
            fn()
        best = min(best, (time.perf_counter() - t) / repeat)
    return best


def bench_kernels(n_vehicles: int, repeat: int):
    lane, pos, speed, length, lane_len, modes = synthetic_queue(n_vehicles)
    bounds = rounded_layout(PartitionSpec(500.0, 7.0, 10)).boundaries()
    ctrl = lane < 12
    dist = lane_len[lane[ctrl]] - pos[ctrl]
    ref = None
    rows = []
    for name in available_backends():
        k = get_backend(name)

        def step():
            return k.follow_step(lane, pos, speed, length, lane_len, modes, 20.0, 2.0, 4.5, 2.5, 1.0, 1.0)

        def encode():
            return k.encode_cells(lane[ctrl], dist, speed[ctrl], length[ctrl], bounds, 12)

        out = step() + encode()
        if ref is None:
            ref = out
        else:
            for a, b in zip(ref, out):
                np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-9)
        rows.append((name, best_of(step, repeat), best_of(encode, repeat)))
    return rows


def bench_sim(sim_seconds: float, flow: float = 2000.0, seed: int = 0):
    net = load_network()
    rng = np.random.default_rng(seed)
    d = generate_demand(rng, DemandSpec.fixed_flow(flow, sim_seconds), net.sources)
    routes = generate_trajectories(rng, net, d.counts, sim_seconds)
    rows, logs = [], []
    for name in available_backends():
        k = get_backend(name)
        SimWorld(routes[:50], net, SimParams(check_every_step=False), kernels=k).run_until(60)  # JIT warm-up
        world = SimWorld(routes, net, SimParams(check_every_step=False), kernels=k)
        t = time.perf_counter()
        log = run_controller(world, FixedTimeController(), sim_seconds)
        rows.append((name, time.perf_counter() - t, world.exited))
        logs.append([(r.cur_waiting_s, r.queue_veh_s) for r in log])
    if len(logs) == 2:
        np.testing.assert_allclose(np.array(logs[0]), np.array(logs[1]), rtol=1e-9)
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--vehicles", type=int, default=400)
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--sim-seconds", type=float, default=3600.0)
    args = ap.parse_args(argv)

    print(f"backends: {', '.join(available_backends())}")
    print(f"\nkernels, {args.vehicles} vehicles (best of 5 x {args.repeat} calls)")
    print(f"{'backend':8} {'follow_step':>14} {'encode_cells':>14}")
    for name, t_step, t_enc in bench_kernels(args.vehicles, args.repeat):
        print(f"{name:8} {t_step * 1e6:11.1f} us {t_enc * 1e6:11.1f} us")

    print(f"\nfull simulation, {args.sim_seconds:g} s at 2000 veh/h")
    print(f"{'backend':8} {'wall':>9} {'exited':>7}")
    for name, wall, exited in bench_sim(args.sim_seconds):
        print(f"{name:8} {wall:8.2f}s {exited:7d}")


if __name__ == "__main__":
    main()
