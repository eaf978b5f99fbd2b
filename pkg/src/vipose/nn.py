"""Dense-network building blocks with explicit reverse-mode gradients.

Activations are float64 arrays of shape (batch, features), row-major.
Layers cache what they need during a train-mode forward pass; backward
consumes the cache and accumulates parameter gradients, so repeated
backward calls sum. The stack is a fixed feedforward topology; no
general autodiff graph is needed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

TRAIN = "train"
EVAL = "eval"


class Layer:
    """Base layer: stateless unless it has parameters or running statistics."""

    def forward(self, x: np.ndarray, mode: str = EVAL,
                rng: np.random.Generator | None = None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> list[tuple[str, np.ndarray]]:
        return []

    def grads(self) -> list[tuple[str, np.ndarray]]:
        return []

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        return []

    def zero_grads(self) -> None:
        for _, g in self.grads():
            g[...] = 0.0

    def _need_cache(self, name: str):
        cache = getattr(self, name, None)
        if cache is None:
            raise RuntimeError("backward called without a preceding train-mode forward")
        return cache


class Dense(Layer):
    """Affine map y = x W^T + b with Kaiming-scaled normal init."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 zero_init: bool = False):
        if zero_init:
            self.weight = np.zeros((out_dim, in_dim))
        else:
            self.weight = rng.normal(0.0, np.sqrt(2.0 / in_dim), size=(out_dim, in_dim))
        self.bias = np.zeros(out_dim)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self._x: np.ndarray | None = None

    def forward(self, x, mode=EVAL, rng=None):
        if x.shape[1] != self.weight.shape[1]:
            raise ValueError(f"input width {x.shape[1]} != {self.weight.shape[1]}")
        if mode == TRAIN:
            self._x = x
        return x @ self.weight.T + self.bias

    def backward(self, grad_out):
        x = self._need_cache("_x")
        self.grad_weight += grad_out.T @ x
        self.grad_bias += grad_out.sum(axis=0)
        return grad_out @ self.weight

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def grads(self):
        return [("weight", self.grad_weight), ("bias", self.grad_bias)]


class BatchNorm(Layer):
    """Per-feature batch normalization with running statistics.

    Train mode normalizes by batch mean and population variance and
    updates the running statistics (momentum 0.1); eval mode uses the
    running statistics only.
    """

    def __init__(self, dim: int, eps: float = 1e-5, momentum: float = 0.1):
        self.gamma = np.ones(dim)
        self.beta = np.zeros(dim)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self.eps = eps
        self.momentum = momentum
        self.grad_gamma = np.zeros_like(self.gamma)
        self.grad_beta = np.zeros_like(self.beta)
        self._cache: tuple | None = None

    def forward(self, x, mode=EVAL, rng=None):
        if mode == TRAIN:
            if x.shape[0] < 2:
                raise ValueError("batch normalization needs batch size >= 2 in train mode")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean) * inv_std
            self.running_mean += self.momentum * (mean - self.running_mean)
            self.running_var += self.momentum * (var - self.running_var)
            self._cache = (xhat, inv_std)
        else:
            inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
            xhat = (x - self.running_mean) * inv_std
        return self.gamma * xhat + self.beta

    def backward(self, grad_out):
        xhat, inv_std = self._need_cache("_cache")
        n = grad_out.shape[0]
        self.grad_gamma += (grad_out * xhat).sum(axis=0)
        self.grad_beta += grad_out.sum(axis=0)
        gxhat = grad_out * self.gamma
        return (inv_std / n) * (
            n * gxhat - gxhat.sum(axis=0) - xhat * (gxhat * xhat).sum(axis=0))

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def grads(self):
        return [("gamma", self.grad_gamma), ("beta", self.grad_beta)]

    def buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]


class ReLU(Layer):
    def __init__(self):
        self._mask: np.ndarray | None = None

    def forward(self, x, mode=EVAL, rng=None):
        if mode == TRAIN:
            self._mask = x > 0
        return np.maximum(x, 0.0)

    def backward(self, grad_out):
        return grad_out * self._need_cache("_mask")


class Dropout(Layer):
    """Inverted dropout: train-mode output has the same expectation as input."""

    def __init__(self, rate: float = 0.5):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate
        self._mask: np.ndarray | None = None

    def forward(self, x, mode=EVAL, rng=None):
        if mode != TRAIN or self.rate == 0.0:
            return x
        if rng is None:
            raise ValueError("train-mode dropout needs the run's generator")
        keep = 1.0 - self.rate
        self._mask = (rng.random(x.shape) < keep) / keep
        return x * self._mask

    def backward(self, grad_out):
        if self.rate == 0.0:
            return grad_out
        return grad_out * self._need_cache("_mask")


class Sigmoid(Layer):
    def __init__(self):
        self._y: np.ndarray | None = None

    def forward(self, x, mode=EVAL, rng=None):
        y = 1.0 / (1.0 + np.exp(-x))
        if mode == TRAIN:
            self._y = y
        return y

    def backward(self, grad_out):
        y = self._need_cache("_y")
        return grad_out * y * (1.0 - y)


class Sequential(Layer):
    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def forward(self, x, mode=EVAL, rng=None):
        for layer in self.layers:
            x = layer.forward(x, mode, rng)
        return x

    def backward(self, grad_out):
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out

    def _collect(self, kind: str) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, layer in enumerate(self.layers):
            for name, arr in getattr(layer, kind)():
                out.append((f"{i}.{name}", arr))
        return out

    def params(self):
        return self._collect("params")

    def grads(self):
        return self._collect("grads")

    def buffers(self):
        return self._collect("buffers")


class ResidualBlock(Layer):
    """Two (dense, batchnorm, relu, dropout) stages plus an identity skip."""

    def __init__(self, width: int, rng: np.random.Generator, dropout: float = 0.5):
        self.body = Sequential([
            Dense(width, width, rng), BatchNorm(width), ReLU(), Dropout(dropout),
            Dense(width, width, rng), BatchNorm(width), ReLU(), Dropout(dropout),
        ])

    def forward(self, x, mode=EVAL, rng=None):
        return x + self.body.forward(x, mode, rng)

    def backward(self, grad_out):
        return grad_out + self.body.backward(grad_out)

    def params(self):
        return [(f"body.{n}", a) for n, a in self.body.params()]

    def grads(self):
        return [(f"body.{n}", a) for n, a in self.body.grads()]

    def buffers(self):
        return [(f"body.{n}", a) for n, a in self.body.buffers()]


@dataclass
class AdamState:
    """First/second moment accumulators for one parameter list."""

    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    t: int = 0
    skipped: int = 0

    def ensure(self, params: list[np.ndarray]) -> None:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> bool:
    """One adaptive-moment update with bias correction, in place.

    Returns False (and bumps ``state.skipped``) without touching the
    parameters when any gradient entry is non-finite.
    """
    state.ensure(params)
    for g in grads:
        if not np.isfinite(g).all():
            state.skipped += 1
            return False
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m += (1.0 - beta1) * (g - m)
        v += (1.0 - beta2) * (g * g - v)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return True


# Checkpoints: magic, version, JSON header (array names/shapes and the
# topology hash), then the arrays as little-endian float64 in order.
_MAGIC = b"VIPZ"
_VERSION = 1


def save_checkpoint(path, arrays: list[tuple[str, np.ndarray]], topology_hash: str) -> None:
    header = {
        "topology_hash": topology_hash,
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], str]:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        arrays = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(count * 8), dtype="<f8").astype(np.float64)
            arrays[spec["name"]] = data.reshape(shape)
    return arrays, header["topology_hash"]


def network_state(net: Layer) -> list[tuple[str, np.ndarray]]:
    """Parameters plus running statistics, in declared layer order."""
    return list(net.params()) + [(f"buffer:{n}", a) for n, a in net.buffers()]


def load_network_state(net: Layer, arrays: dict[str, np.ndarray]) -> None:
    for name, target in network_state(net):
        if name not in arrays:
            raise ValueError(f"checkpoint missing array {name!r}")
        src = arrays[name]
        if src.shape != target.shape:
            raise ValueError(f"array {name!r} shape {src.shape} != {target.shape}")
        target[...] = src
