"""Deep Q-learning with an experience pool and a periodically synced target net."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import Optimizer, Sequential
from .core import ReplayBuffer, Transition, select_action_dqn


@dataclass(frozen=True)
class DqnConfig:
    lr: float = 0.002
    gamma: float = 0.99
    batch_size: int = 64
    target_sync_interval: int = 200
    episodes: int = 500
    buffer_capacity: int = 10000
    optimizer: str = "adam"
    max_grad_norm: float | None = 10.0

    def check(self) -> None:
        for name in ("lr", "gamma", "batch_size", "target_sync_interval", "episodes", "buffer_capacity"):
            if getattr(self, name) <= 0:
                raise ValueError(f"DqnConfig.{name} must be positive")
        if self.gamma > 1:
            raise ValueError("gamma must be <= 1")


class DqnAgent:
    def __init__(self, net: Sequential, config: DqnConfig = DqnConfig(), seed: int = 0):
        config.check()
        self.config = config
        self.online = net
        self.target = net.clone()
        self.opt = Optimizer(net, config.lr, config.optimizer, config.max_grad_norm)
        self.buffer = ReplayBuffer(config.buffer_capacity)
        self.rng = np.random.default_rng(seed)
        self.updates = 0

    def q_values(self, state) -> np.ndarray:
        return self.online(state)[0]

    def act(self, state, eps: float = 0.0) -> int:
        return select_action_dqn(self.q_values(state), eps, self.rng)

    def greedy(self, state) -> int:
        return int(np.argmax(self.q_values(state))) + 1

    def nets(self) -> dict[str, Sequential]:
        return {"q": self.online}


def dqn_train_step(agent: DqnAgent, batch: list[Transition]) -> float:
    """One gradient step on the mean squared TD error; returns the loss before the step."""
    cfg = agent.config
    s = np.stack([t.state for t in batch])
    s2 = np.stack([t.next_state for t in batch])
    a = np.array([t.action - 1 for t in batch])
    r = np.array([t.reward for t in batch], dtype=float)
    term = np.array([t.terminal for t in batch])
    q_next = agent.target(s2).astype(float).max(axis=1)
    y = r + np.where(term, 0.0, cfg.gamma * q_next)

    q = agent.online.forward(s, train=True)
    rows = np.arange(len(batch))
    err = q[rows, a].astype(float) - y
    loss = float(np.mean(err ** 2))
    dq = np.zeros_like(q)
    dq[rows, a] = 2.0 * err / len(batch)
    agent.online.zero_grad()
    agent.online.backward(dq)
    agent.opt.step()
    agent.updates += 1
    if agent.updates % cfg.target_sync_interval == 0:
        agent.target.copy_from(agent.online)
    return loss
