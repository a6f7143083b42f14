"""Minimal dense-network engine in numpy: forward, exact reverse-mode
backward, Adam, soft target updates, and a flat-binary checkpoint format.

Hidden layers use tanh. The output layer is linear with declared "heads"
applied on segments of the final pre-activation: identity, sigmoid, or
softmax-over-segment. Everything is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = "sagin-sched-net-v1"


@dataclass
class DenseNet:
    layer_shapes: list[tuple[int, int]]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    heads: list[tuple[str, int]]  # ("identity"|"sigmoid"|"softmax", size) segments

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def get_flat(self) -> np.ndarray:
        """Parameters as one flat vector: weights layer-major, then biases."""
        parts = [w.ravel() for w in self.weights] + [b.ravel() for b in self.biases]
        return np.concatenate(parts)

    def set_flat(self, flat: np.ndarray) -> None:
        if flat.size != self.n_params:
            raise ValueError("parameter vector length mismatch")
        off = 0
        for w in self.weights:
            w[...] = flat[off:off + w.size].reshape(w.shape)
            off += w.size
        for b in self.biases:
            b[...] = flat[off:off + b.size]
            off += b.size

    def copy(self) -> "DenseNet":
        return DenseNet(list(self.layer_shapes),
                        [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases],
                        list(self.heads))


def make_net(layer_sizes: list[int], heads: list[tuple[str, int]],
             rng: np.random.Generator) -> DenseNet:
    """Build a net with uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] init."""
    out_dim = layer_sizes[-1]
    if sum(size for _, size in heads) != out_dim:
        raise ValueError("head sizes must sum to the output dimension")
    shapes = list(zip(layer_sizes[:-1], layer_sizes[1:]))
    weights, biases = [], []
    for fan_in, fan_out in shapes:
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return DenseNet(shapes, weights, biases, list(heads))


def _apply_heads(z: np.ndarray, heads: list[tuple[str, int]]) -> np.ndarray:
    out = np.empty_like(z)
    off = 0
    for kind, size in heads:
        seg = z[..., off:off + size]
        if kind == "identity":
            out[..., off:off + size] = seg
        elif kind == "sigmoid":
            out[..., off:off + size] = 1.0 / (1.0 + np.exp(-seg))
        elif kind == "softmax":
            shifted = seg - seg.max(axis=-1, keepdims=True)
            e = np.exp(shifted)
            out[..., off:off + size] = e / e.sum(axis=-1, keepdims=True)
        else:
            raise ValueError(f"unknown head kind {kind!r}")
        off += size
    return out


def apply_heads(z: np.ndarray, heads: list[tuple[str, int]]) -> np.ndarray:
    """Public head transform (used when exploration noise perturbs z)."""
    return _apply_heads(z, heads)


@dataclass
class ForwardCache:
    x: np.ndarray                 # input, (batch, in)
    activations: list[np.ndarray]  # post-tanh per hidden layer
    z_out: np.ndarray             # pre-head output
    y: np.ndarray                 # post-head output
    single: bool                  # input was 1-D


def forward(net: DenseNet, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Affine + tanh per hidden layer, declared heads on the output."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != net.layer_shapes[0][0]:
        raise ValueError(f"input dim {x.shape[1]} != {net.layer_shapes[0][0]}")
    a = x
    activations = []
    n_layers = len(net.weights)
    for l in range(n_layers - 1):
        a = np.tanh(a @ net.weights[l] + net.biases[l])
        activations.append(a)
    z_out = a @ net.weights[-1] + net.biases[-1]
    y = _apply_heads(z_out, net.heads)
    cache = ForwardCache(x, activations, z_out, y, single)
    return (y[0] if single else y), cache


def _head_backward(dy: np.ndarray, cache: ForwardCache,
                   heads: list[tuple[str, int]]) -> np.ndarray:
    dz = np.empty_like(dy)
    off = 0
    for kind, size in heads:
        g = dy[..., off:off + size]
        y = cache.y[..., off:off + size]
        if kind == "identity":
            dz[..., off:off + size] = g
        elif kind == "sigmoid":
            dz[..., off:off + size] = g * y * (1.0 - y)
        elif kind == "softmax":
            dot = (g * y).sum(axis=-1, keepdims=True)
            dz[..., off:off + size] = y * (g - dot)
        off += size
    return dz


def backward(net: DenseNet, cache: ForwardCache, output_gradient: np.ndarray
             ) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradients of sum(output * output_gradient) w.r.t. parameters
    (flat, same layout as get_flat) and the input."""
    dy = np.asarray(output_gradient, dtype=np.float64)
    if cache.single and dy.ndim == 1:
        dy = dy[None, :]
    if dy.shape != cache.y.shape:
        raise ValueError("output_gradient shape mismatch with cached forward")
    dz = _head_backward(dy, cache, net.heads)

    n_layers = len(net.weights)
    grads_w = [None] * n_layers
    grads_b = [None] * n_layers
    delta = dz
    for l in range(n_layers - 1, -1, -1):
        a_prev = cache.activations[l - 1] if l > 0 else cache.x
        grads_w[l] = a_prev.T @ delta
        grads_b[l] = delta.sum(axis=0)
        delta = delta @ net.weights[l].T
        if l > 0:
            delta = delta * (1.0 - cache.activations[l - 1] ** 2)
    dx = delta
    flat = np.concatenate([g.ravel() for g in grads_w]
                          + [g.ravel() for g in grads_b])
    return flat, (dx[0] if cache.single else dx)


@dataclass
class AdamState:
    learning_rate: float
    n_params: int
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: np.ndarray = field(default=None)
    second_moment: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.first_moment is None:
            self.first_moment = np.zeros(self.n_params)
        if self.second_moment is None:
            self.second_moment = np.zeros(self.n_params)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray
              ) -> np.ndarray:
    """One Adam update (descent direction); returns the new parameters.

    Mutates the optimizer state in place; raises on non-finite gradients
    without touching parameters or moments.
    """
    if params.shape != grads.shape:
        raise ValueError("params/grads shape mismatch")
    if not np.all(np.isfinite(grads)):
        raise FloatingPointError("non-finite gradient")
    state.step_count += 1
    m, v = state.first_moment, state.second_moment
    m[...] = state.beta1 * m + (1 - state.beta1) * grads
    v[...] = state.beta2 * v + (1 - state.beta2) * grads ** 2
    m_hat = m / (1 - state.beta1 ** state.step_count)
    v_hat = v / (1 - state.beta2 ** state.step_count)
    return params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)


def soft_update(target: DenseNet, source: DenseNet, tau: float) -> None:
    """target <- tau * source + (1 - tau) * target, elementwise, in place."""
    if target.layer_shapes != source.layer_shapes:
        raise ValueError("shape mismatch between target and source")
    for tw, sw in zip(target.weights, source.weights):
        tw[...] = tau * sw + (1.0 - tau) * tw
    for tb, sb in zip(target.biases, source.biases):
        tb[...] = tau * sb + (1.0 - tau) * tb


# ---------------------------------------------------------------------------
# checkpoints: flat little-endian float64 binary + text descriptor sidecar

def save_checkpoint(net: DenseNet, path: str | Path) -> None:
    path = Path(path)
    flat = net.get_flat().astype("<f8")
    path.write_bytes(flat.tobytes())
    shapes = ";".join(f"{i}x{o}" for i, o in net.layer_shapes)
    heads = ";".join(f"{k}:{s}" for k, s in net.heads)
    desc = (f"version {CHECKPOINT_VERSION}\n"
            f"shapes {shapes}\n"
            f"heads {heads}\n"
            f"params {flat.size}\n")
    path.with_suffix(path.suffix + ".desc").write_text(desc)


def load_checkpoint(path: str | Path) -> DenseNet:
    path = Path(path)
    desc = {}
    for line in path.with_suffix(path.suffix + ".desc").read_text().splitlines():
        key, _, value = line.partition(" ")
        desc[key] = value
    if desc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {desc.get('version')!r}")
    shapes = [tuple(int(d) for d in s.split("x")) for s in desc["shapes"].split(";")]
    heads = [(k, int(s)) for k, s in
             (h.split(":") for h in desc["heads"].split(";"))]
    weights = [np.zeros(s) for s in shapes]
    biases = [np.zeros(s[1]) for s in shapes]
    net = DenseNet(shapes, weights, biases, heads)
    flat = np.frombuffer(path.read_bytes(), dtype="<f8").astype(np.float64)
    net.set_flat(flat)
    return net
