"""Clipped-surrogate policy optimisation with a separate value network."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import Optimizer, Sequential
from .core import RolloutBuffer, RunningMoments, clipped_objective, clipped_objective_grad, gae


@dataclass(frozen=True)
class PpoConfig:
    lr: float = 3e-4
    critic_lr: float | None = None   # defaults to lr
    gamma: float = 0.99
    clip: float = 0.2
    gae_lambda: float = 0.95
    batch_size: int = 64
    epochs_per_update: int = 4
    rollout_steps: int = 256
    episodes: int = 500
    normalize_advantages: bool = True
    value_norm: bool = True            # critic regresses standardised returns
    bootstrap_time_limit: bool = True  # the horizon cut is not a true terminal state
    optimizer: str = "adam"
    max_grad_norm: float | None = 0.5

    def check(self) -> None:
        if not 0 < self.clip < 1:
            raise ValueError("clip must lie in (0, 1)")
        if not 0 <= self.gae_lambda <= 1:
            raise ValueError("gae_lambda must lie in [0, 1]")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        for name in ("batch_size", "epochs_per_update", "rollout_steps", "episodes"):
            if getattr(self, name) <= 0:
                raise ValueError(f"PpoConfig.{name} must be positive")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")


class PpoAgent:
    def __init__(self, actor: Sequential, critic: Sequential, config: PpoConfig = PpoConfig(), seed: int = 0):
        config.check()
        self.config = config
        self.actor = actor
        self.critic = critic
        self.actor_opt = Optimizer(actor, config.lr, config.optimizer, config.max_grad_norm)
        self.critic_opt = Optimizer(critic, config.critic_lr if config.critic_lr is not None else config.lr,
                                    config.optimizer, config.max_grad_norm)
        self.rollout = RolloutBuffer()
        self.returns = RunningMoments()
        self.rng = np.random.default_rng(seed)
        self.last_clipfrac = 0.0

    def probs(self, state) -> np.ndarray:
        return self.actor(state)[0].astype(float)

    def value(self, state) -> float:
        v = float(self.critic(state)[0, 0])
        if self.config.value_norm:
            v = v * self.returns.std + self.returns.mean
        return v

    def act(self, state) -> tuple[int, float, float]:
        """Sample a phase; returns (phase id, log-prob, value estimate)."""
        p = self.probs(state)
        k = int(self.rng.choice(p.size, p=p / p.sum()))
        return k + 1, float(np.log(p[k])), self.value(state)

    def greedy(self, state) -> int:
        return int(np.argmax(self.probs(state))) + 1

    def nets(self) -> dict[str, Sequential]:
        return {"actor": self.actor, "critic": self.critic}


def advantages_and_returns(rollout: RolloutBuffer, gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    r = np.asarray(rollout.rewards)
    v = np.asarray(rollout.values)
    done = np.asarray(rollout.dones)
    v_next = np.append(v[1:], rollout.last_value)
    v_next = np.where(done, np.asarray(rollout.boot_values, dtype=float), v_next)
    deltas = r + gamma * v_next - v
    adv = gae(deltas, gamma, lam, done)
    return adv, adv + v


def ppo_update(agent: PpoAgent, rollout: RolloutBuffer | None = None) -> tuple[float, float]:
    """Several epochs of shuffled minibatch updates; returns mean (actor loss, critic loss)."""
    cfg = agent.config
    ro = rollout if rollout is not None else agent.rollout
    if len(ro) == 0:
        raise ValueError("empty rollout")
    adv, ret = advantages_and_returns(ro, cfg.gamma, cfg.gae_lambda)
    if cfg.normalize_advantages and adv.size > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    if cfg.value_norm:
        agent.returns.update(ret)
        ret = (ret - agent.returns.mean) / agent.returns.std
    states = np.stack(ro.states)
    actions = np.asarray(ro.actions) - 1
    logp_old = np.asarray(ro.logps)

    a_losses, c_losses, clipped = [], [], []
    n = len(ro)
    for _ in range(cfg.epochs_per_update):
        order = agent.rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            mb = order[lo:lo + cfg.batch_size]
            b = mb.size
            rows = np.arange(b)

            p = agent.actor.forward(states[mb], train=True)
            p_a = np.maximum(p[rows, actions[mb]].astype(float), 1e-12)
            rho = np.exp(np.log(p_a) - logp_old[mb])
            a_losses.append(-float(np.mean(clipped_objective(rho, adv[mb], cfg.clip))))
            clipped.append(float(np.mean(np.abs(rho - 1.0) > cfg.clip)))
            dp = np.zeros_like(p)
            # d(-mean obj)/dp_a = -g(rho) * rho / p_a / b
            dp[rows, actions[mb]] = -clipped_objective_grad(rho, adv[mb], cfg.clip) * rho / p_a / b
            agent.actor.zero_grad()
            agent.actor.backward(dp)
            agent.actor_opt.step()

            v = agent.critic.forward(states[mb], train=True)
            err = v[:, 0].astype(float) - ret[mb]
            c_losses.append(float(np.mean(err ** 2)))
            dv = np.zeros_like(v)
            dv[:, 0] = 2.0 * err / b
            agent.critic.zero_grad()
            agent.critic.backward(dv)
            agent.critic_opt.step()

    agent.last_clipfrac = float(np.mean(clipped))
    ro.clear()
    return float(np.mean(a_losses)), float(np.mean(c_losses))
