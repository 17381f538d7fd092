"""Sequential networks and the two fixed agent architectures."""

from __future__ import annotations

import copy
import hashlib
import json

import numpy as np

from ..errors import ShapeMismatch
from .layers import Conv2D, Dense, Dropout, Flatten, Layer, Linear, MaxPool2D, ReLU, Softmax, layer_from_spec


class Sequential:
    def __init__(self, layers: list[Layer], input_shape: tuple[int, ...], seed: int = 0,
                 dtype=np.float32, name: str = "net"):
        self.layers = list(layers)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.dtype = np.dtype(dtype)
        self.name = name
        rng = np.random.default_rng(seed)
        shape = self.input_shape
        self.shapes = [shape]
        for layer in self.layers:
            layer.init(shape, rng, self.dtype)
            shape = layer.out_shape(shape)
            self.shapes.append(shape)

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.shapes[-1]

    def architecture(self) -> dict:
        return {"input_shape": list(self.input_shape), "layers": [l.spec() for l in self.layers]}

    def arch_hash(self) -> str:
        blob = json.dumps(self.architecture(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_architecture(cls, arch: dict, **kw) -> "Sequential":
        return cls([layer_from_spec(s) for s in arch["layers"]], tuple(arch["input_shape"]), **kw)

    # -------------------------------------------------------------- params

    def parameters(self):
        """(layer index, name, array) for every parameter, in a fixed order."""
        return [(i, k, l.params[k]) for i, l in enumerate(self.layers) for k in sorted(l.params)]

    def param_arrays(self) -> list[np.ndarray]:
        return [p for _, _, p in self.parameters()]

    def grad_arrays(self) -> list[np.ndarray]:
        return [self.layers[i].grads[k] for i, k, _ in self.parameters()]

    def num_params(self) -> int:
        return int(sum(p.size for p in self.param_arrays()))

    def zero_grad(self) -> None:
        for l in self.layers:
            l.zero_grad()

    def copy_from(self, other: "Sequential") -> None:
        for (_, _, dst), src in zip(self.parameters(), other.param_arrays()):
            dst[...] = src

    def clone(self, dtype=None) -> "Sequential":
        twin = copy.deepcopy(self)
        if dtype is not None:
            twin.dtype = np.dtype(dtype)
            for l in twin.layers:
                for k in l.params:
                    l.params[k] = l.params[k].astype(dtype)
                l.zero_grad()
        return twin

    # -------------------------------------------------------------- passes

    def forward(self, x, train: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != self.input_shape:
            if x.shape == self.input_shape:
                x = x[None]
            else:
                raise ShapeMismatch(f"{self.name}: expected (batch,)+{self.input_shape}, got {x.shape}")
        for l in self.layers:
            x = l.forward(x, train)
        return x

    __call__ = forward

    def backward(self, dout) -> np.ndarray:
        """Backpropagate ``dL/doutput``; parameter gradients accumulate in ``grads``."""
        g = np.asarray(dout, dtype=self.dtype)
        for l in reversed(self.layers):
            g = l.backward(g)
        return g


def _conv_block(filters, kernel):
    return [Conv2D(filters, kernel), ReLU(), MaxPool2D()]


def build_dqn_net(n_cells: int = 10, n_lanes: int = 12, n_actions: int = 8, seed: int = 0,
                  dropout: float = 0.0, dtype=np.float32) -> Sequential:
    """Three 3x3 conv/pool stages, Dense128, linear Q-value head."""
    layers = _conv_block(32, 3) + _conv_block(64, 3) + _conv_block(128, 3) + [Flatten(), Dense(128), ReLU()]
    if dropout:
        layers.append(Dropout(dropout, seed))
    layers += [Dense(n_actions), Linear()]
    return Sequential(layers, (n_lanes, n_cells, 3), seed, dtype, "dqn")


def _ac_trunk(dropout, seed):
    layers = [Flatten(), Dense(128), ReLU()]
    if dropout:
        layers.append(Dropout(dropout, seed))
    layers += [Dense(256), ReLU()]
    if dropout:
        layers.append(Dropout(dropout, seed + 1))
    return layers


def build_actor_critic(n_cells: int = 10, n_lanes: int = 12, n_actions: int = 8, seed: int = 0,
                       dropout: float = 0.0, dtype=np.float32) -> tuple[Sequential, Sequential]:
    """Two 2x2 conv/pool stages, Dense128, Dense256, then softmax (actor) or scalar (critic)."""
    def body():
        return _conv_block(32, 2) + _conv_block(64, 2) + _ac_trunk(dropout, seed)
    shape = (n_lanes, n_cells, 3)
    actor = Sequential(body() + [Dense(n_actions, gain=0.01), Softmax()], shape, seed, dtype, "actor")
    critic = Sequential(body() + [Dense(1), Linear()], shape, seed + 1, dtype, "critic")
    return actor, critic


def build_mlp_actor_critic(in_dim: int = 36, n_actions: int = 8, seed: int = 0,
                           dtype=np.float32) -> tuple[Sequential, Sequential]:
    """Dense-only actor/critic for the flat aggregate state (no spatial axes to convolve)."""
    actor = Sequential(_ac_trunk(0.0, seed)[1:] + [Dense(n_actions, gain=0.01), Softmax()], (in_dim,), seed,
                       dtype, "actor")
    critic = Sequential(_ac_trunk(0.0, seed)[1:] + [Dense(1), Linear()], (in_dim,), seed + 1, dtype, "critic")
    return actor, critic


def build_mlp_dqn(in_dim: int = 36, n_actions: int = 8, seed: int = 0, dtype=np.float32) -> Sequential:
    return Sequential([Dense(128), ReLU(), Dense(n_actions), Linear()], (in_dim,), seed, dtype, "dqn")
