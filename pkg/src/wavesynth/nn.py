"""Dense feed-forward networks with analytic backprop and Adam.

Everything runs in float64. Inputs may be a single vector ``(in,)`` or a
batch ``(batch, in)``; outputs follow the same rank.
"""

from __future__ import annotations

import enum
import hashlib
import itertools
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ContractError(RuntimeError):
    """An operation was invoked out of its allowed protocol."""


class Activation(enum.Enum):
    RELU = "relu"
    TANH = "tanh"
    SOFTMAX = "softmax"
    LINEAR = "linear"

    @property
    def tag(self) -> int:
        return _TAGS[self]

    @classmethod
    def from_tag(cls, tag: int) -> "Activation":
        for act, t in _TAGS.items():
            if t == tag:
                return act
        raise ValueError(f"unknown activation tag {tag}")


_TAGS = {Activation.RELU: 0, Activation.TANH: 1, Activation.SOFTMAX: 2, Activation.LINEAR: 3}


def _activate(z: np.ndarray, act: Activation) -> np.ndarray:
    if act is Activation.RELU:
        return np.maximum(z, 0.0)
    if act is Activation.TANH:
        return np.tanh(z)
    if act is Activation.SOFTMAX:
        e = np.exp(z - z.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)
    return z


def _activation_backward(z, a, grad, act: Activation) -> np.ndarray:
    if act is Activation.RELU:
        return grad * (z > 0)
    if act is Activation.TANH:
        return grad * (1.0 - a * a)
    if act is Activation.SOFTMAX:
        return a * (grad - np.sum(grad * a, axis=-1, keepdims=True))
    return grad


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: Activation

    @property
    def shape(self) -> tuple[int, int]:
        return self.weight.shape


@dataclass
class ForwardCache:
    net_id: int
    version: int
    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    post: list[np.ndarray]
    squeeze: bool


_net_ids = itertools.count()


class Mlp:
    """Stack of affine layers, each followed by an activation."""

    def __init__(self, layers: list[Layer]):
        if not layers:
            raise ValueError("an Mlp needs at least one layer")
        for i, layer in enumerate(layers):
            layer.weight = np.asarray(layer.weight, dtype=np.float64)
            layer.bias = np.asarray(layer.bias, dtype=np.float64)
            layer.activation = Activation(layer.activation)
            if layer.weight.ndim != 2 or layer.bias.shape != (layer.weight.shape[0],):
                raise ValueError(f"layer {i}: bias shape {layer.bias.shape} does not match weight {layer.weight.shape}")
            if i and layers[i - 1].weight.shape[0] != layer.weight.shape[1]:
                raise ValueError(f"layer {i}: input dim {layer.weight.shape[1]} != previous output dim")
            if layer.activation is Activation.SOFTMAX and i != len(layers) - 1:
                raise ValueError("softmax is only allowed on the output layer")
        self.layers = layers
        self._id = next(_net_ids)
        self._version = 0

    @classmethod
    def build(
        cls,
        sizes: list[int],
        hidden: Activation | str = Activation.RELU,
        output: Activation | str = Activation.LINEAR,
        rng: np.random.Generator | int | None = 0,
    ) -> "Mlp":
        """Random init: He-uniform before ReLU, Xavier-uniform otherwise; zero biases."""
        rng = np.random.default_rng(rng)
        hidden, output = Activation(hidden), Activation(output)
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            act = output if i == len(sizes) - 2 else hidden
            if act is Activation.RELU:
                limit = np.sqrt(6.0 / fan_in)
            else:
                limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
            layers.append(Layer(w, np.zeros(fan_out), act))
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def mark_updated(self) -> None:
        self._version += 1

    def forward(self, x) -> tuple[np.ndarray, ForwardCache]:
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        h = np.atleast_2d(x)
        if h.ndim != 2 or h.shape[1] != self.input_dim:
            raise ValueError(f"expected input dim {self.input_dim}, got shape {x.shape}")
        inputs, pre, post = [], [], []
        for layer in self.layers:
            inputs.append(h)
            z = h @ layer.weight.T + layer.bias
            h = _activate(z, layer.activation)
            pre.append(z)
            post.append(h)
        cache = ForwardCache(self._id, self._version, inputs, pre, post, squeeze)
        return (h[0] if squeeze else h), cache

    def predict(self, x) -> np.ndarray:
        return self.forward(x)[0]

    __call__ = predict

    def backward(self, cache: ForwardCache, grad_output) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradients of ``sum(grad_output * output)`` w.r.t. parameters and input.

        Parameter gradients are summed over the batch and returned in
        :meth:`parameters` order.
        """
        if cache.net_id != self._id or cache.version != self._version:
            raise ContractError("forward cache is stale or belongs to another network")
        g = np.atleast_2d(np.asarray(grad_output, dtype=np.float64))
        if g.shape != cache.post[-1].shape:
            raise ValueError(f"output gradient shape {g.shape} != output shape {cache.post[-1].shape}")
        grads: list[np.ndarray] = [None] * (2 * len(self.layers))  # type: ignore[list-item]
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            gz = _activation_backward(cache.pre[i], cache.post[i], g, layer.activation)
            grads[2 * i] = gz.T @ cache.inputs[i]
            grads[2 * i + 1] = gz.sum(axis=0)
            g = gz @ layer.weight
        return grads, (g[0] if cache.squeeze else g)

    def copy(self) -> "Mlp":
        return Mlp([Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers])

    def same_shape(self, other: "Mlp") -> bool:
        return [(l.shape, l.activation) for l in self.layers] == [
            (l.shape, l.activation) for l in other.layers
        ]

    def load_from(self, other: "Mlp") -> None:
        if not self.same_shape(other):
            raise ValueError("network shapes differ")
        for dst, src in zip(self.parameters(), other.parameters()):
            dst[...] = src
        self.mark_updated()

    def soft_update(self, source: "Mlp", omega: float) -> None:
        """``self = omega * source + (1 - omega) * self`` parameter-wise."""
        if not self.same_shape(source):
            raise ValueError("network shapes differ")
        for dst, src in zip(self.parameters(), source.parameters()):
            dst *= 1.0 - omega
            dst += omega * src
        self.mark_updated()

    def checksum(self) -> str:
        return hashlib.sha256(to_bytes(self)).hexdigest()

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_net(cls, net: Mlp, lr: float = 1e-3, **kw) -> "AdamState":
        params = net.parameters()
        return cls(lr=lr, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **kw)


def adam_step(net: Mlp, grads: list[np.ndarray], state: AdamState) -> tuple[Mlp, AdamState]:
    """One bias-corrected Adam update, applied in place."""
    params = net.parameters()
    if len(grads) != len(params) or len(state.m) != len(params):
        raise ContractError("gradient / optimizer state does not match the network")
    for p, g, m in zip(params, grads, state.m):
        if g.shape != p.shape or m.shape != p.shape:
            raise ContractError(f"shape mismatch: param {p.shape}, grad {g.shape}, moment {m.shape}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    net.mark_updated()
    if not net.all_finite():
        raise FloatingPointError("non-finite parameter after Adam step")
    return net, state


# ---------------------------------------------------------------------------
# CHNN checkpoints
# ---------------------------------------------------------------------------

_NN_MAGIC = b"CHNN"
_NN_VERSION = 1


def to_bytes(net: Mlp) -> bytes:
    """``CHNN`` v1: magic, u32 version, u32 layers, per layer u32 in/out/tag, f64 params (LE)."""
    head = [_NN_MAGIC, struct.pack("<II", _NN_VERSION, len(net.layers))]
    for layer in net.layers:
        out_dim, in_dim = layer.shape
        head.append(struct.pack("<III", in_dim, out_dim, layer.activation.tag))
    body = [np.ascontiguousarray(p, dtype="<f8").tobytes() for p in net.parameters()]
    return b"".join(head + body)


def from_bytes(data: bytes) -> Mlp:
    if data[:4] != _NN_MAGIC:
        raise ValueError("not a CHNN blob")
    version, count = struct.unpack_from("<II", data, 4)
    if version != _NN_VERSION:
        raise ValueError(f"unsupported CHNN version {version}")
    offset = 12
    dims = []
    for _ in range(count):
        dims.append(struct.unpack_from("<III", data, offset))
        offset += 12
    layers = []
    for in_dim, out_dim, tag in dims:
        w = np.frombuffer(data, dtype="<f8", count=in_dim * out_dim, offset=offset).reshape(out_dim, in_dim)
        offset += 8 * in_dim * out_dim
        b = np.frombuffer(data, dtype="<f8", count=out_dim, offset=offset)
        offset += 8 * out_dim
        layers.append(Layer(w.astype(np.float64), b.astype(np.float64), Activation.from_tag(tag)))
    if offset != len(data):
        raise ValueError("trailing bytes in CHNN blob")
    return Mlp(layers)


def save(net: Mlp, path) -> None:
    Path(path).write_bytes(to_bytes(net))


def load(path) -> Mlp:
    return from_bytes(Path(path).read_bytes())
