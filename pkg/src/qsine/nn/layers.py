"""Layers for the small numpy network engine.

Every layer follows the same contract: ``forward(x, train)`` caches what the
backward pass needs, ``backward(dy)`` returns the gradient w.r.t. the input
and fills ``self.grads`` (same keys as ``self.params``). Parameters live in
``self.params``, non-trained buffers (BatchNorm running stats) in
``self.state``. ``config()`` + ``from_config()`` round-trip a layer through
the checkpoint format.
"""
from __future__ import annotations

import numpy as np

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772

_REGISTRY: dict[str, type] = {}


def register(cls):
    _REGISTRY[cls.kind] = cls
    return cls


def layer_from_config(kind: str, cfg: dict):
    if kind not in _REGISTRY:
        raise ValueError(f"unknown layer kind {kind!r}")
    return _REGISTRY[kind].from_config(cfg)


def _fan_in_uniform(rng: np.random.Generator, shape, fan_in: int, dtype):
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.state: dict[str, np.ndarray] = {}
        self.dtype = np.float32

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_grads(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def config(self) -> dict:
        return {}

    @classmethod
    def from_config(cls, cfg: dict):
        return cls(**cfg)

    def astype(self, dtype):
        self.dtype = dtype
        self.params = {k: v.astype(dtype) for k, v in self.params.items()}
        self.state = {k: v.astype(dtype) for k, v in self.state.items()}
        self.grads = {}
        return self


@register
class Conv1D(Layer):
    """Stride-1 cross-correlation with TensorFlow-style 'same' zero padding.

    Input (B, L, Cin) -> output (B, L, Cout). Weight shape (k, Cin, Cout);
    pad split: left = (k-1)//2, right = k-1-left.
    """

    kind = "conv1d"

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.dtype = dtype
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = kernel * in_channels
        self.params = {
            "w": _fan_in_uniform(rng, (kernel, in_channels, out_channels), fan_in, dtype),
            "b": np.zeros(out_channels, dtype=dtype),
        }
        self.zero_grads()

    def forward(self, x, train=False):
        k = self.kernel
        pl = (k - 1) // 2
        pr = k - 1 - pl
        xp = np.pad(x, ((0, 0), (pl, pr), (0, 0)))
        self._xp = xp
        L = x.shape[1]
        w = self.params["w"]
        out = np.tile(self.params["b"], (x.shape[0], L, 1)).astype(x.dtype)
        for t in range(k):
            out += xp[:, t : t + L, :] @ w[t]
        return out

    def backward(self, dy):
        k = self.kernel
        xp = self._xp
        L = dy.shape[1]
        w = self.params["w"]
        self.grads["b"] += dy.sum(axis=(0, 1))
        dxp = np.zeros_like(xp)
        for t in range(k):
            self.grads["w"][t] += np.tensordot(xp[:, t : t + L, :], dy, axes=([0, 1], [0, 1]))
            dxp[:, t : t + L, :] += dy @ w[t].T
        pl = (k - 1) // 2
        return dxp[:, pl : pl + L, :]

    def config(self):
        return {"in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel": self.kernel}


@register
class MaxPool1D(Layer):
    """Non-overlapping max pooling along the length axis (pads -inf if needed)."""

    kind = "maxpool1d"

    def __init__(self, size: int):
        super().__init__()
        self.size = size

    def forward(self, x, train=False):
        B, L, C = x.shape
        s = self.size
        Lp = -(-L // s) * s
        if Lp != L:
            pad = np.full((B, Lp - L, C), -np.inf, dtype=x.dtype)
            x = np.concatenate([x, pad], axis=1)
        win = x.reshape(B, Lp // s, s, C)
        self._idx = win.argmax(axis=2)
        self._in_len = L
        self._padded_shape = x.shape
        return np.take_along_axis(win, self._idx[:, :, None, :], axis=2)[:, :, 0, :]

    def backward(self, dy):
        B, Lp, C = self._padded_shape
        s = self.size
        dxp = np.zeros(self._padded_shape, dtype=dy.dtype).reshape(B, Lp // s, s, C)
        np.put_along_axis(dxp, self._idx[:, :, None, :], dy[:, :, None, :], axis=2)
        return dxp.reshape(B, Lp, C)[:, : self._in_len, :]

    def config(self):
        return {"size": self.size}


@register
class BatchNorm1D(Layer):
    """Per-channel batch normalization over all leading axes.

    Training uses biased batch statistics and updates running stats as
    running = momentum * running + (1 - momentum) * batch; inference
    normalizes with the running stats.
    """

    kind = "batchnorm1d"

    def __init__(self, channels: int, momentum: float = 0.99, eps: float = 1e-5,
                 dtype=np.float32):
        super().__init__()
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.dtype = dtype
        self.params = {
            "gamma": np.ones(channels, dtype=dtype),
            "beta": np.zeros(channels, dtype=dtype),
        }
        self.state = {
            "running_mean": np.zeros(channels, dtype=dtype),
            "running_var": np.ones(channels, dtype=dtype),
        }
        self.zero_grads()

    def forward(self, x, train=False):
        axes = tuple(range(x.ndim - 1))
        if train:
            if x.shape[0] < 2:
                raise ValueError("BatchNorm1D needs batch size >= 2 in training mode")
            mu = x.mean(axis=axes)
            var = x.var(axis=axes)
            mom = self.momentum
            self.state["running_mean"] = (
                mom * self.state["running_mean"] + (1 - mom) * mu
            ).astype(self.state["running_mean"].dtype)
            self.state["running_var"] = (
                mom * self.state["running_var"] + (1 - mom) * var
            ).astype(self.state["running_var"].dtype)
        else:
            mu = self.state["running_mean"]
            var = self.state["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv_std
        self._cache = (xhat, inv_std, axes, train)
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, dy):
        xhat, inv_std, axes, train = self._cache
        gamma = self.params["gamma"]
        dbeta = dy.sum(axis=axes)
        dgamma = (dy * xhat).sum(axis=axes)
        self.grads["gamma"] += dgamma
        self.grads["beta"] += dbeta
        if not train:
            return dy * gamma * inv_std
        n = dy.size // dy.shape[-1]
        return gamma * inv_std * (dy - dbeta / n - xhat * dgamma / n)

    def config(self):
        return {"channels": self.channels, "momentum": self.momentum, "eps": self.eps}


@register
class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features: int, out_features: int,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.dtype = dtype
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = {
            "w": _fan_in_uniform(rng, (in_features, out_features), in_features, dtype),
            "b": np.zeros(out_features, dtype=dtype),
        }
        self.zero_grads()

    def forward(self, x, train=False):
        self._x = x
        return x @ self.params["w"] + self.params["b"]

    def backward(self, dy):
        self.grads["w"] += self._x.T @ dy
        self.grads["b"] += dy.sum(axis=0)
        return dy @ self.params["w"].T

    def config(self):
        return {"in_features": self.in_features, "out_features": self.out_features}


@register
class Activation(Layer):
    """Elementwise nonlinearity: relu, selu, softmax (last axis) or linear."""

    kind = "activation"

    def __init__(self, fn: str = "relu"):
        super().__init__()
        if fn not in ("relu", "selu", "softmax", "linear"):
            raise ValueError(f"unknown activation {fn!r}")
        self.fn = fn

    def forward(self, x, train=False):
        if self.fn == "relu":
            self._mask = x > 0
            return np.maximum(x, 0)
        if self.fn == "selu":
            self._x = x
            return SELU_LAMBDA * np.where(x > 0, x, SELU_ALPHA * np.expm1(x))
        if self.fn == "softmax":
            z = x - x.max(axis=-1, keepdims=True)
            e = np.exp(z)
            self._p = e / e.sum(axis=-1, keepdims=True)
            return self._p
        return x

    def backward(self, dy):
        if self.fn == "relu":
            return dy * self._mask
        if self.fn == "selu":
            x = self._x
            return dy * SELU_LAMBDA * np.where(x > 0, 1.0, SELU_ALPHA * np.exp(x)).astype(dy.dtype)
        if self.fn == "softmax":
            p = self._p
            return p * (dy - (dy * p).sum(axis=-1, keepdims=True))
        return dy

    def config(self):
        return {"fn": self.fn}


@register
class Dropout(Layer):
    """Inverted dropout; identity at inference. Mask drawn from its own rng.

    ``cache_mask`` freezes the last drawn mask so finite-difference loss
    probes see a deterministic function.
    """

    kind = "dropout"

    def __init__(self, rate: float, seed: int = 0):
        super().__init__()
        if not 0 <= rate < 1:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.cache_mask = False
        self._mask = None

    def forward(self, x, train=False):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if not (self.cache_mask and self._mask is not None and self._mask.shape == x.shape):
            self._mask = (self.rng.random(x.shape) >= self.rate).astype(x.dtype)
        return x * self._mask / (1.0 - self.rate)

    def backward(self, dy):
        if self._mask is None:
            return dy
        return dy * self._mask / (1.0 - self.rate)

    def config(self):
        return {"rate": self.rate, "seed": self.seed}


@register
class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)
