"""Command line entry point: ``vcltsc <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, VcltscError

log = logging.getLogger("vcltsc")


def _add_flow(p, default_flow=1600.0):
    p.add_argument("--flow", type=float, default=default_flow, help="total veh/h over the four sources")
    p.add_argument("--flow-mult-min", type=int, default=None, help="stochastic flow: min multiple of 400 veh/h")
    p.add_argument("--flow-mult-max", type=int, default=None)


def _add_scenario(p, eval_s=5400.0):
    _add_flow(p)
    p.add_argument("--warmup", type=float, default=1800.0)
    p.add_argument("--eval-s", type=float, default=eval_s)
    p.add_argument("--replicates", type=int, default=10)
    p.add_argument("--window", type=float, default=60.0)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=Path, default=Path("."))
    common.add_argument("--config", type=Path, default=None, help="INI file; [command] sections supply defaults")

    ap = argparse.ArgumentParser(prog="vcltsc", description=__doc__.splitlines()[0], parents=[common])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("partition", parents=[common], help="print a cell layout")
    p.add_argument("--range", type=float, required=True)
    p.add_argument("--first-cell", type=float, default=7.0)
    p.add_argument("--cells", type=int, default=10)
    p.add_argument("--raw", action="store_true", help="unrounded lengths")
    p.add_argument("--fixed", action="store_true", help="uniform cells instead")

    p = sub.add_parser("gen-routes", parents=[common], help="write a seeded route file")
    _add_flow(p)
    p.add_argument("--horizon", type=float, default=3600.0)

    p = sub.add_parser("train", parents=[common], help="train a DQN or PPO agent")
    p.add_argument("--agent", choices=["ppo", "dqn"], default="ppo")
    p.add_argument("--state", choices=["vcl", "fcl", "agg"], default="vcl")
    p.add_argument("--range", type=float, default=500.0)
    p.add_argument("--first-cell", type=float, default=7.0)
    p.add_argument("--cells", type=int, default=None)
    p.add_argument("--episodes", type=int, default=500)
    p.add_argument("--horizon", type=float, default=3600.0, help="simulated seconds per episode")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--rollout-steps", type=int, default=None)
    _add_flow(p)

    p = sub.add_parser("eval", parents=[common], help="evaluate one method on one scenario")
    p.add_argument("--method", required=True, help="FixedTime, Actuated, Random, VclPpo, VclDqn, FclPpo, AggPpo")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--range", type=float, default=None)
    p.add_argument("--cells", type=int, default=None)
    _add_scenario(p)

    p = sub.add_parser("transfer", parents=[common], help="deploy a checkpoint at another detection range")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--native", default=None, help="checkpoint trained at the target range")
    p.add_argument("--range", type=float, required=True)
    p.add_argument("--cells", type=int, default=None)
    _add_scenario(p, eval_s=1800.0)

    p = sub.add_parser("compare", parents=[common], help="methods x flows matrix")
    p.add_argument("--flows", type=float, nargs="+", default=[500, 1000, 1500, 2000, 2500, 3000])
    p.add_argument("--method", action="append", required=True, metavar="NAME[=CKPT]")
    p.add_argument("--warmup", type=float, default=1800.0)
    p.add_argument("--eval-s", type=float, default=5400.0)
    p.add_argument("--replicates", type=int, default=10)

    p = sub.add_parser("plot-data", parents=[common], help="tidy CSVs for plotting")
    p.add_argument("--results", nargs="*", default=[])
    p.add_argument("--train-logs", nargs="*", default=[])
    return ap


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre_p = argparse.ArgumentParser(add_help=False)
    pre_p.add_argument("--config", type=Path)
    pre_p.add_argument("command", nargs="?")
    known, _ = pre_p.parse_known_args(argv)
    if known.config is None:
        return
    if not known.config.exists():
        raise ConfigError(f"config file {known.config} not found")
    cfg = configparser.ConfigParser()
    try:
        cfg.read(known.config, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{known.config}: {exc}") from exc
    subs = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for section in ("vcltsc", known.command):
        if section is None or not cfg.has_section(section):
            continue
        target = subs.choices.get(known.command) if section == known.command else None
        for p in filter(None, (parser, target)):
            actions = {a.dest: a for a in p._actions}
            values = {}
            for key, raw in cfg.items(section):
                dest = key.replace("-", "_")
                if dest not in actions:
                    if p is target or target is None:
                        raise ConfigError(f"{known.config}: unknown option {key!r} in [{section}]")
                    continue
                a = actions[dest]
                a.required = False
                if isinstance(a, argparse._StoreTrueAction):
                    values[dest] = cfg.getboolean(section, key)
                elif a.nargs in ("+", "*"):
                    values[dest] = [a.type(x) if a.type else x for x in raw.split()]
                else:
                    values[dest] = a.type(raw) if a.type else raw
            p.set_defaults(**values)


def _demand(args, horizon):
    from .network import DemandSpec
    if args.flow_mult_min is not None or args.flow_mult_max is not None:
        lo = args.flow_mult_min if args.flow_mult_min is not None else args.flow_mult_max
        hi = args.flow_mult_max if args.flow_mult_max is not None else lo
        spec = DemandSpec((lo, hi), horizon_s=horizon)
    else:
        spec = DemandSpec.fixed_flow(args.flow, horizon)
    try:
        spec.check()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return spec


def cmd_partition(args) -> None:
    from .partition import PartitionSpec, cell_lengths, fixed_layout, rounded_layout
    if args.fixed:
        lengths = fixed_layout(args.range, args.cells).lengths_m
    elif args.raw:
        lengths = cell_lengths(PartitionSpec(args.range, args.first_cell, args.cells))
    else:
        lengths = rounded_layout(PartitionSpec(args.range, args.first_cell, args.cells)).lengths_m
    print(",".join(f"{x:.6g}" if isinstance(x, float) else str(x) for x in lengths))


def cmd_gen_routes(args) -> None:
    from .network import generate_demand, generate_trajectories, load_network, write_routes
    net = load_network()
    rng = np.random.default_rng(args.seed)
    d = generate_demand(rng, _demand(args, args.horizon), net.sources)
    routes = generate_trajectories(rng, net, d.counts, args.horizon)
    args.out.mkdir(parents=True, exist_ok=True)
    write_routes(routes, args.out / "routes.csv")
    print(f"{len(routes)} routes -> {args.out / 'routes.csv'}")


def cmd_train(args) -> None:
    from .agents import DqnConfig, PpoConfig, SignalEnv, make_encoder, save_result, train_dqn, train_ppo
    cells = args.cells
    if args.state == "agg":
        if cells is not None:
            log.warning("--state agg has no cells; ignoring --cells %s", cells)
        cells = 10
    elif cells is None:
        cells = 10
    try:
        enc = make_encoder(args.state, args.range, args.first_cell, cells)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    env = SignalEnv(enc, demand=_demand(args, args.horizon), horizon_s=args.horizon, seed=args.seed)
    extra = {} if args.lr is None else {"lr": args.lr}

    def progress(row):
        log.info("episode %d reward %.4f", row["episode"], row["mean_reward"])

    if args.agent == "dqn":
        res = train_dqn(env, DqnConfig(episodes=args.episodes, **extra), seed=args.seed, progress=progress)
    else:
        if args.rollout_steps:
            extra["rollout_steps"] = args.rollout_steps
        res = train_ppo(env, PpoConfig(episodes=args.episodes, **extra), seed=args.seed, progress=progress)
    args.out.mkdir(parents=True, exist_ok=True)
    save_result(res, args.out / "model.ckpt", args.out / "train_log.csv", seed=args.seed, horizon_s=args.horizon)
    print(f"checkpoint -> {args.out / 'model.ckpt'}; curve -> {args.out / 'train_log.csv'}")


def _scenario(args, flow=None):
    from .harness import ScenarioSpec
    return ScenarioSpec(flow if flow is not None else args.flow, args.warmup, args.eval_s, args.replicates,
                        args.seed, getattr(args, "window", 60.0))


def _method(token: str, **kw):
    from .harness import Method, MethodSpec
    name, _, ckpt = token.partition("=")
    try:
        m = Method(name)
    except ValueError:
        raise ConfigError(f"unknown method {name!r}; choose from {[x.value for x in Method]}") from None
    return MethodSpec(m, ckpt or kw.pop("checkpoint", None), **kw)


def _print_rows(rows):
    from .harness import RESULT_COLUMNS
    print(",".join(RESULT_COLUMNS))
    for r in rows:
        print(",".join(str(getattr(r, c)) for c in RESULT_COLUMNS))


def cmd_eval(args) -> None:
    from .harness import run_experiment
    m = _method(args.method, checkpoint=args.checkpoint, detection_range_m=args.range, num_cells=args.cells)
    _print_rows(run_experiment(_scenario(args), m, args.out)[-1:])


def cmd_transfer(args) -> None:
    from .harness import transfer_eval
    res = transfer_eval(args.checkpoint, args.range, _scenario(args), args.native, args.cells, args.out)
    _print_rows([rows[-1] for rows in res.values()])


def cmd_compare(args) -> None:
    from .harness import ScenarioSpec, compare_methods
    scen = [ScenarioSpec(f, args.warmup, args.eval_s, args.replicates, args.seed) for f in args.flows]
    cmp = compare_methods(scen, [_method(t) for t in args.method], args.out)
    for s, order in cmp.rankings.items():
        print(f"{s} veh/h: {' < '.join(order)} (spread {cmp.spread[s]:.1f} s)")


def cmd_plot_data(args) -> None:
    from .harness import emit_plot_data
    for p in emit_plot_data(args.results, args.out, args.train_logs):
        print(p)


COMMANDS = {"partition": cmd_partition, "gen-routes": cmd_gen_routes, "train": cmd_train, "eval": cmd_eval,
            "transfer": cmd_transfer, "compare": cmd_compare, "plot-data": cmd_plot_data}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:   # argparse usage errors
        return int(exc.code or 0)
    except (VcltscError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
