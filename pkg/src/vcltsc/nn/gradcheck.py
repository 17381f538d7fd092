"""Central finite-difference check of analytic gradients."""

from __future__ import annotations

import numpy as np


def relative_error(a, b, floor: float = 1e-8):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def grad_check(net, x, epsilon: float = 1e-4, n_params: int = 200, seed: int = 0) -> float:
    """Max relative error between backprop and central differences.

    Runs on a float64 copy of ``net``; the scalar objective is a fixed random
    projection of the output.  Checks ``n_params`` randomly chosen parameter
    entries (or all of them if the net is smaller).
    """
    if not 0 < epsilon <= 1e-2:
        raise ValueError("epsilon must be in (0, 1e-2]")
    rng = np.random.default_rng(seed)
    net64 = net.clone(np.float64)
    x = np.asarray(x, dtype=np.float64)
    out = net64.forward(x)
    proj = rng.standard_normal(out.shape)

    def loss():
        return float(np.sum(net64.forward(x) * proj))

    net64.zero_grad()
    net64.forward(x)
    net64.backward(proj)
    params = net64.param_arrays()
    grads = net64.grad_arrays()
    sizes = np.array([p.size for p in params])
    total = int(sizes.sum())
    picks = np.arange(total) if total <= n_params else rng.choice(total, n_params, replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for flat in picks:
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        j = flat - offsets[k]
        p = params[k].reshape(-1)
        orig = p[j]
        p[j] = orig + epsilon
        up = loss()
        p[j] = orig - epsilon
        down = loss()
        p[j] = orig
        num = (up - down) / (2 * epsilon)
        worst = max(worst, float(relative_error(grads[k].reshape(-1)[j], num)))
    return worst
