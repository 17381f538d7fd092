"""Parameter updates: plain gradient descent and Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteGradient


def _check_finite(grads):
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("gradient contains NaN or inf")


def clip_by_global_norm(grads, max_norm):
    total = float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads)))
    if max_norm and total > max_norm:
        s = max_norm / (total + 1e-12)
        for g in grads:
            g *= s
    return total


@dataclass
class OptimizerState:
    lr: float
    mode: str = "adam"              # "adam" | "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_grad_norm: float | None = None
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def optimize_step(params: list[np.ndarray], grads: list[np.ndarray], state: OptimizerState) -> list[np.ndarray]:
    """In-place descent step on ``params`` (minimises the loss whose gradient is ``grads``)."""
    _check_finite(grads)
    if state.max_grad_norm:
        clip_by_global_norm(grads, state.max_grad_norm)
    state.step_count += 1
    if state.mode == "sgd":
        for p, g in zip(params, grads):
            p -= (state.lr * g).astype(p.dtype, copy=False)
        return params
    if state.mode != "adam":
        raise ValueError(f"unknown optimizer mode {state.mode!r}")
    if not state.m:
        state.m = [np.zeros(p.shape, dtype=np.float64) for p in params]
        state.v = [np.zeros(p.shape, dtype=np.float64) for p in params]
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g, dtype=np.float64)
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
    return params


class Optimizer:
    """Binds an OptimizerState to one network's parameters."""

    def __init__(self, net, lr: float, mode: str = "adam", max_grad_norm: float | None = None):
        self.net = net
        self.state = OptimizerState(lr=lr, mode=mode, max_grad_norm=max_grad_norm)

    def step(self):
        optimize_step(self.net.param_arrays(), self.net.grad_arrays(), self.state)
        self.net.zero_grad()
