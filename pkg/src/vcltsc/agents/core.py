"""Building blocks shared by the value-based and policy-gradient learners."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

N_ACTIONS = 8


@dataclass
class Transition:
    state: np.ndarray
    action: int          # phase id, 1..8
    reward: float
    next_state: np.ndarray
    terminal: bool


def epsilon(episode: int, total: int) -> float:
    """Linearly decaying exploration rate, 1 at the first episode and 0 at ``total``."""
    if total <= 0 or not 0 <= episode <= total:
        raise ValueError(f"need 0 <= episode <= total and total > 0, got ({episode}, {total})")
    return 1.0 - episode / total


def select_action_dqn(q_values, eps: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy phase choice; greedy ties go to the lowest phase id."""
    q = np.asarray(q_values).reshape(-1)
    if rng.random() < eps:
        return int(rng.integers(len(q))) + 1
    return int(np.argmax(q)) + 1   # argmax already returns the first maximum


def bellman_target(r: float, gamma: float, q_next, terminal: bool) -> float:
    if terminal:
        return float(r)
    return float(r + gamma * np.max(q_next))


def q_learning_update(q_table: np.ndarray, s: int, a: int, r: float, s_next: int, alpha: float, gamma: float,
                      terminal: bool) -> float:
    """Tabular soft update ``Q(s,a) += alpha * (target - Q(s,a))``; returns the new entry."""
    target = bellman_target(r, gamma, q_table[s_next], terminal)
    q_table[s, a] += alpha * (target - q_table[s, a])
    return float(q_table[s, a])


def ratio(logp_new, logp_old):
    return np.exp(np.asarray(logp_new, dtype=float) - np.asarray(logp_old, dtype=float))


def clipped_objective(r, advantage, clip: float):
    r = np.asarray(r, dtype=float)
    a = np.asarray(advantage, dtype=float)
    return np.minimum(r * a, np.clip(r, 1.0 - clip, 1.0 + clip) * a)


def clipped_objective_grad(r, advantage, clip: float):
    """Derivative of ``clipped_objective`` with respect to the ratio.

    Zero wherever the clamped branch is the strict minimum, ``A`` otherwise.
    """
    r = np.asarray(r, dtype=float)
    a = np.asarray(advantage, dtype=float)
    clipped_wins = np.clip(r, 1.0 - clip, 1.0 + clip) * a < r * a
    return np.where(clipped_wins, 0.0, a)


def gae(deltas, gamma: float, lam: float, dones=None) -> np.ndarray:
    """Backward recursion ``A_t = d_t + gamma*lam*A_{t+1}``, reset after terminal steps."""
    d = np.asarray(deltas, dtype=float)
    done = np.zeros(d.shape, dtype=bool) if dones is None else np.asarray(dones, dtype=bool)
    out = np.empty_like(d)
    acc = 0.0
    for t in range(d.size - 1, -1, -1):
        acc = d[t] + gamma * lam * (0.0 if done[t] else acc)
        out[t] = acc
    return out


class ReplayBuffer:
    """FIFO experience pool with uniform batch sampling (no repeats within a batch)."""

    def __init__(self, capacity: int = 10000):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._data: deque[Transition] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._data)

    def add(self, t: Transition) -> None:
        self._data.append(t)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        if batch_size > len(self._data):
            raise ValueError(f"cannot draw {batch_size} from {len(self._data)} transitions")
        idx = rng.choice(len(self._data), size=batch_size, replace=False)
        return [self._data[i] for i in idx]

    def __getitem__(self, i) -> Transition:
        return self._data[i]


@dataclass
class RolloutBuffer:
    """On-policy transitions plus the log-probs and values recorded while acting."""

    def __post_init__(self):
        self.clear()

    def clear(self) -> None:
        self.states: list[np.ndarray] = []
        self.actions: list[int] = []
        self.rewards: list[float] = []
        self.dones: list[bool] = []
        self.logps: list[float] = []
        self.values: list[float] = []
        self.boot_values: list[float] = []   # value after a done step: 0 if terminal, V(s') if time-limited
        self.last_value = 0.0   # V(s_T) for bootstrapping a cut-off rollout

    def __len__(self) -> int:
        return len(self.actions)

    def add(self, state, action: int, reward: float, done: bool, logp: float, value: float,
            boot_value: float = 0.0) -> None:
        self.states.append(np.asarray(state))
        self.actions.append(int(action))
        self.rewards.append(float(reward))
        self.dones.append(bool(done))
        self.logps.append(float(logp))
        self.values.append(float(value))
        self.boot_values.append(float(boot_value))


class RunningMoments:
    """Streaming mean and variance (parallel Welford merge)."""

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    @property
    def std(self) -> float:
        return float(np.sqrt(self.m2 / self.count)) if self.count > 1 else 1.0

    def update(self, x) -> None:
        x = np.asarray(x, dtype=float).reshape(-1)
        if not x.size:
            return
        n, mu, m2 = x.size, float(x.mean()), float(((x - x.mean()) ** 2).sum())
        tot = self.count + n
        delta = mu - self.mean
        self.mean += delta * n / tot
        self.m2 += m2 + delta ** 2 * self.count * n / tot
        self.count = tot
