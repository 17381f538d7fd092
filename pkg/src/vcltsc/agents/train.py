"""Training loops binding the learners to the simulator, plus policy deployment."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import TransferIncompatible
from ..nn import Checkpoint, build_actor_critic, build_dqn_net, build_mlp_actor_critic, build_mlp_dqn, load_checkpoint, \
    save_checkpoint
from ..partition import PartitionSpec, fixed_layout, rounded_layout
from ..state import NormState, StateEncoder
from .core import Transition, epsilon
from .dqn import DqnAgent, DqnConfig, dqn_train_step
from .env import SignalEnv
from .ppo import PpoAgent, PpoConfig, ppo_update

DQN_LOG_COLUMNS = ["episode", "steps", "mean_reward", "loss", "epsilon"]
PPO_LOG_COLUMNS = ["episode", "steps", "mean_reward", "actor_loss", "critic_loss", "clipfrac"]


def make_encoder(kind: str, detection_range_m: float, first_cell_m: float = 7.0, num_cells: int = 10,
                 norm: NormState | None = None) -> StateEncoder:
    if kind == "vcl":
        return StateEncoder("vcl", rounded_layout(PartitionSpec(detection_range_m, first_cell_m, num_cells)),
                            norm=norm)
    if kind == "fcl":
        return StateEncoder("fcl", fixed_layout(detection_range_m, num_cells), norm=norm)
    return StateEncoder("agg", detection_range_m=detection_range_m, norm=norm)


def encoder_partition(enc: StateEncoder) -> tuple[float, float, int]:
    """(d, first cell, n) recorded in checkpoints; the aggregate view counts as one cell."""
    if enc.kind == "agg":
        return (float(enc.detection_range_m), float(enc.detection_range_m), 1)
    lens = enc.layout.lengths_m
    return (float(enc.detection_range_m), float(lens[0]), len(lens))


def make_nets(agent: str, enc: StateEncoder, seed: int = 0):
    if agent == "dqn":
        if enc.kind == "agg":
            return (build_mlp_dqn(enc.shape[0], seed=seed),)
        return (build_dqn_net(enc.shape[1], seed=seed),)
    if agent == "ppo":
        if enc.kind == "agg":
            return build_mlp_actor_critic(enc.shape[0], seed=seed)
        return build_actor_critic(enc.shape[1], seed=seed)
    raise ValueError(f"unknown agent {agent!r}")


@dataclass
class TrainResult:
    agent: object
    encoder: StateEncoder
    log: list[dict] = field(default_factory=list)

    def checkpoint(self, **meta) -> Checkpoint:
        kind = "dqn" if isinstance(self.agent, DqnAgent) else "ppo"
        return Checkpoint(self.agent.nets(), encoder_partition(self.encoder), self.encoder.norm.max_hist.copy(),
                          {"agent": kind, "state": self.encoder.kind, **meta})


def write_train_log(rows: list[dict], path: str | Path) -> None:
    if not rows:
        raise ValueError("empty training log")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def _mean(xs):
    return float(np.mean(xs)) if xs else math.nan


def train_dqn(env: SignalEnv, config: DqnConfig = DqnConfig(), seed: int = 0, agent: DqnAgent | None = None,
              progress=None) -> TrainResult:
    enc = env.encoder
    agent = agent or DqnAgent(make_nets("dqn", enc, seed)[0], config, seed)
    result = TrainResult(agent, enc)
    E = config.episodes
    for e in range(E):
        eps = epsilon(e, E)
        s = env.reset()
        rewards, losses = [], []
        done = False
        while not done:
            a = agent.act(s, eps)
            s2, r, done = env.step(a)
            agent.buffer.add(Transition(s, a, r, s2, done))
            rewards.append(r)
            if len(agent.buffer) >= config.batch_size:
                losses.append(dqn_train_step(agent, agent.buffer.sample(config.batch_size, agent.rng)))
            s = s2
        row = {"episode": e + 1, "steps": len(rewards), "mean_reward": _mean(rewards), "loss": _mean(losses),
               "epsilon": eps}
        result.log.append(row)
        if progress:
            progress(row)
    return result


def train_ppo(env: SignalEnv, config: PpoConfig = PpoConfig(), seed: int = 0, agent: PpoAgent | None = None,
              progress=None) -> TrainResult:
    enc = env.encoder
    if agent is None:
        actor, critic = make_nets("ppo", enc, seed)
        agent = PpoAgent(actor, critic, config, seed)
    result = TrainResult(agent, enc)
    ro = agent.rollout
    last = (math.nan, math.nan, math.nan)   # carried into episodes without an update
    for e in range(config.episodes):
        s = env.reset()
        rewards, a_l, c_l, cf = [], [], [], []
        done = False
        while not done:
            a, logp, v = agent.act(s)
            s2, r, done = env.step(a)
            boot = agent.value(s2) if done and config.bootstrap_time_limit else 0.0
            ro.add(s, a, r, done, logp, v, boot)
            rewards.append(r)
            s = s2
            last_episode = e == config.episodes - 1
            if len(ro) >= config.rollout_steps or (done and last_episode):
                ro.last_value = 0.0 if done else agent.value(s)
                al, cl = ppo_update(agent)
                a_l.append(al)
                c_l.append(cl)
                cf.append(agent.last_clipfrac)
        if a_l:
            last = (_mean(a_l), _mean(c_l), _mean(cf))
        row = {"episode": e + 1, "steps": len(rewards), "mean_reward": _mean(rewards), "actor_loss": last[0],
               "critic_loss": last[1], "clipfrac": last[2]}
        result.log.append(row)
        if progress:
            progress(row)
    return result


# ---------------------------------------------------------------- deployment

class PolicyController:
    """Greedy phase choice from a trained agent, with frozen normalisation."""

    def __init__(self, agent, encoder: StateEncoder, green_s: float | None = None):
        self.agent = agent
        self.encoder = encoder
        self.encoder.update_norm = False
        self.green_s = green_s

    def decide(self, world):
        return self.agent.greedy(self.encoder(world)), self.green_s


def agent_from_checkpoint(ckpt: Checkpoint, seed: int = 0):
    if ckpt.meta.get("agent") == "dqn" or "q" in ckpt.nets:
        return DqnAgent(ckpt.nets["q"], DqnConfig(), seed)
    return PpoAgent(ckpt.nets["actor"], ckpt.nets["critic"], PpoConfig(), seed)


def load_policy(path: str | Path, detection_range_m: float | None = None, num_cells: int | None = None,
                first_cell_m: float | None = None) -> PolicyController:
    """Deploy a checkpoint, optionally at a different detection range.

    The cell count stays the one the nets were trained with; a runtime layout
    with another count is refused.
    """
    ckpt = load_checkpoint(path)
    d0, l1, n = ckpt.partition
    kind = ckpt.meta.get("state", "vcl")
    if num_cells is not None and kind != "agg":
        check_transfer(n, num_cells)
    d = float(detection_range_m) if detection_range_m is not None else d0
    if kind == "agg":
        enc = make_encoder("agg", d, norm=NormState(ckpt.norm_max))
    else:
        enc = make_encoder(kind, d, first_cell_m if first_cell_m is not None else l1, n, NormState(ckpt.norm_max))
    return PolicyController(agent_from_checkpoint(ckpt), enc)


def check_transfer(ckpt_cells: int, runtime_cells: int) -> None:
    if ckpt_cells != runtime_cells:
        raise TransferIncompatible(f"checkpoint has {ckpt_cells} cells per lane, runtime layout has {runtime_cells}")


def save_result(result: TrainResult, ckpt_path: str | Path, log_path: str | Path | None = None, **meta) -> None:
    save_checkpoint(result.checkpoint(**meta), ckpt_path)
    if log_path is not None:
        write_train_log(result.log, log_path)
