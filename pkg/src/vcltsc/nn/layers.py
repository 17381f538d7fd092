"""Layers for small sequential nets.  Activations are NHWC with batch first.

Every layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into ``grads`` on ``backward``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import NoForwardCache, ShapeMismatch


class Layer:
    kind = "Layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def spec(self) -> dict:
        return {"kind": self.kind}

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        return in_shape

    def init(self, in_shape, rng, dtype):
        pass

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def _need_cache(self):
        if self._cache is None:
            raise NoForwardCache(f"{self.kind}.backward called before forward")
        return self._cache

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)


def _uniform(rng, shape, fan_in, gain, dtype):
    lim = gain * np.sqrt(6.0 / fan_in)
    return rng.uniform(-lim, lim, size=shape).astype(dtype)


class Conv2D(Layer):
    """Stride-1 'same' convolution; even kernels pad one extra row/col at the end."""

    kind = "Conv2D"

    def __init__(self, filters: int, kernel: int):
        super().__init__()
        self.filters, self.kernel = filters, kernel

    def spec(self):
        return {"kind": self.kind, "filters": self.filters, "kernel": self.kernel}

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeMismatch(f"Conv2D expects (H, W, C), got {in_shape}")
        return (in_shape[0], in_shape[1], self.filters)

    def init(self, in_shape, rng, dtype):
        k, c = self.kernel, in_shape[2]
        self.params["W"] = _uniform(rng, (k, k, c, self.filters), k * k * c, 1.0, dtype)
        self.params["b"] = np.zeros(self.filters, dtype=dtype)
        self.zero_grad()

    def _pad(self):
        lo = (self.kernel - 1) // 2
        return lo, self.kernel - 1 - lo

    def forward(self, x, train=False):
        B, H, W, C = x.shape
        k = self.kernel
        lo, hi = self._pad()
        xp = np.pad(x, ((0, 0), (lo, hi), (lo, hi), (0, 0)))
        cols = sliding_window_view(xp, (k, k), axis=(1, 2))          # B,H,W,C,k,k
        cols = cols.transpose(0, 1, 2, 4, 5, 3).reshape(B * H * W, k * k * C)
        Wm = self.params["W"].reshape(k * k * C, self.filters)
        self._cache = (cols, x.shape)
        return (cols @ Wm + self.params["b"]).reshape(B, H, W, self.filters)

    def backward(self, dout):
        cols, (B, H, W, C) = self._need_cache()
        k = self.kernel
        d2 = dout.reshape(-1, self.filters)
        Wm = self.params["W"].reshape(k * k * C, self.filters)
        self.grads["W"] += (cols.T @ d2).reshape(self.params["W"].shape)
        self.grads["b"] += d2.sum(axis=0)
        dcols = (d2 @ Wm.T).reshape(B, H, W, k, k, C)
        lo, hi = self._pad()
        dxp = np.zeros((B, H + k - 1, W + k - 1, C), dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + H, j:j + W, :] += dcols[:, :, :, i, j, :]
        return dxp[:, lo:lo + H, lo:lo + W, :]


class MaxPool2D(Layer):
    """2x2 window, stride 2, floor mode (a trailing odd row/column is dropped)."""

    kind = "MaxPool2D"

    def out_shape(self, in_shape):
        h, w, c = in_shape
        if h < 2 or w < 2:
            raise ShapeMismatch(f"cannot pool {in_shape} with a 2x2 window")
        return (h // 2, w // 2, c)

    def forward(self, x, train=False):
        B, H, W, C = x.shape
        Ho, Wo = H // 2, W // 2
        win = x[:, :2 * Ho, :2 * Wo, :].reshape(B, Ho, 2, Wo, 2, C).transpose(0, 1, 3, 5, 2, 4).reshape(B, Ho, Wo, C, 4)
        arg = win.argmax(axis=-1)
        self._cache = (arg, x.shape)
        return np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def backward(self, dout):
        arg, (B, H, W, C) = self._need_cache()
        Ho, Wo = H // 2, W // 2
        g = np.zeros((B, Ho, Wo, C, 4), dtype=dout.dtype)
        np.put_along_axis(g, arg[..., None], dout[..., None], axis=-1)
        dx = np.zeros((B, H, W, C), dtype=dout.dtype)
        dx[:, :2 * Ho, :2 * Wo, :] = g.reshape(B, Ho, Wo, C, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(B, 2 * Ho, 2 * Wo, C)
        return dx


class Flatten(Layer):
    kind = "Flatten"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, train=False):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._need_cache())


class Dense(Layer):
    kind = "Dense"

    def __init__(self, units: int, gain: float = 1.0):
        super().__init__()
        self.units, self.gain = units, gain

    def spec(self):
        return {"kind": self.kind, "units": self.units}

    def out_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ShapeMismatch(f"Dense expects a flat input, got {in_shape}")
        return (self.units,)

    def init(self, in_shape, rng, dtype):
        self.params["W"] = _uniform(rng, (in_shape[0], self.units), in_shape[0], self.gain, dtype)
        self.params["b"] = np.zeros(self.units, dtype=dtype)
        self.zero_grad()

    def forward(self, x, train=False):
        self._cache = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        x = self._need_cache()
        self.grads["W"] += x.T @ dout
        self.grads["b"] += dout.sum(axis=0)
        return dout @ self.params["W"].T


class ReLU(Layer):
    kind = "ReLU"

    def forward(self, x, train=False):
        self._cache = x > 0
        return np.where(self._cache, x, 0).astype(x.dtype, copy=False)

    def backward(self, dout):
        return np.where(self._need_cache(), dout, 0).astype(dout.dtype, copy=False)


class Softmax(Layer):
    kind = "Softmax"

    def forward(self, x, train=False):
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=-1, keepdims=True)
        self._cache = p
        return p

    def backward(self, dout):
        p = self._need_cache()
        return p * (dout - (dout * p).sum(axis=-1, keepdims=True))


class Linear(Layer):
    """Identity activation (kept as a layer so specs read like the tables)."""

    kind = "Linear"

    def forward(self, x, train=False):
        self._cache = True
        return x

    def backward(self, dout):
        self._need_cache()
        return dout


class Dropout(Layer):
    kind = "Dropout"

    def __init__(self, rate: float, seed: int = 0):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate
        self.rng = np.random.default_rng(seed)

    def spec(self):
        return {"kind": self.kind, "rate": self.rate}

    def forward(self, x, train=False):
        if not train or self.rate == 0.0:
            self._cache = np.ones_like(x)
            return x
        mask = (self.rng.random(x.shape) >= self.rate).astype(x.dtype) / (1.0 - self.rate)
        self._cache = mask
        return x * mask

    def backward(self, dout):
        return dout * self._need_cache()


LAYER_TYPES = {cls.kind: cls for cls in (Conv2D, MaxPool2D, Flatten, Dense, ReLU, Softmax, Linear, Dropout)}


def layer_from_spec(spec: dict) -> Layer:
    spec = dict(spec)
    cls = LAYER_TYPES[spec.pop("kind")]
    return cls(**spec)
