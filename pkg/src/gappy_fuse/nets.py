"""A small double-precision MLP with hand-written backprop and Adam."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ACTIVATIONS = ("tanh", "softplus")


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "softplus":
        return np.logaddexp(0.0, z)
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    # derivative expressed through the pre-activation z and activation a
    if name == "tanh":
        return 1.0 - a * a
    if name == "softplus":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class Mlp:
    """Fully connected net; hidden layers use ``activation``, output is linear.

    ``weights[l]`` has shape ``(out, in)`` so a layer computes ``x @ W.T + b``.
    """

    sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"

    @property
    def n_in(self) -> int:
        return self.sizes[0]

    @property
    def n_out(self) -> int:
        return self.sizes[-1]

    def params(self) -> list[np.ndarray]:
        """Parameters in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def set_params(self, params: Sequence[np.ndarray]) -> None:
        self.weights = [np.asarray(p, dtype=float) for p in params[0::2]]
        self.biases = [np.asarray(p, dtype=float) for p in params[1::2]]

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> "Mlp":
        return Mlp(
            tuple(self.sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)


def init_mlp(layer_sizes: Sequence[int], seed: int | np.random.Generator = 0, activation: str = "tanh") -> Mlp:
    """Weights ~ N(0, 1/fan_in), biases zero."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2:
        raise ValueError(f"need at least input and output sizes, got {sizes}")
    if any(s < 1 for s in sizes):
        raise ValueError(f"layer sizes must be positive, got {sizes}")
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in))
        biases.append(np.zeros(fan_out))
    return Mlp(sizes, weights, biases, activation)


def _check_width(net: Mlp, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != net.n_in:
        raise ValueError(f"batch shape {x.shape} incompatible with input size {net.n_in}")
    return x


def forward(net: Mlp, batch: np.ndarray, keep: bool = False):
    """Evaluate the net row-wise.

    With ``keep=True`` also return the per-layer activations needed by
    :func:`backward`.
    """
    a = _check_width(net, batch)
    cache = [(None, a)]
    n_layers = len(net.weights)
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        a = _act(net.activation, z) if l < n_layers - 1 else z
        if keep:
            cache.append((z, a))
    if keep:
        return a, cache
    return a


def backward(net: Mlp, batch, upstream: np.ndarray, cache=None):
    """Reverse-mode gradients of ``sum(upstream * forward(net, batch))``.

    Returns ``(param_grads, input_grad)`` where ``param_grads`` follows the
    order of :meth:`Mlp.params`.  Pass the ``cache`` from ``forward(...,
    keep=True)`` to avoid recomputing the forward pass.
    """
    if cache is None:
        _, cache = forward(net, batch, keep=True)
    upstream = np.asarray(upstream, dtype=float)
    n_rows = cache[0][1].shape[0]
    if upstream.shape != (n_rows, net.n_out):
        raise ValueError(f"upstream shape {upstream.shape} != {(n_rows, net.n_out)}")
    n_layers = len(net.weights)
    grads: list[np.ndarray] = [None] * (2 * n_layers)  # type: ignore[list-item]
    delta = upstream
    for l in range(n_layers - 1, -1, -1):
        a_prev = cache[l][1]
        grads[2 * l] = delta.T @ a_prev
        grads[2 * l + 1] = delta.sum(axis=0)
        delta = delta @ net.weights[l]
        if l > 0:
            z, a = cache[l]
            delta = delta * _act_grad(net.activation, z, a)
    return grads, delta


# --------------------------------------------------------------------------
# optimizer


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
    def for_params(cls, params: Sequence[np.ndarray], **hyper) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **hyper,
        )


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState, lr: float | None = None):
    """One bias-corrected Adam update; returns ``(new_params, state)``.

    ``state`` is updated in place and also returned.
    """
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} parameter arrays but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    lr = state.lr if lr is None else lr
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    out = []
    for idx, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or state.m[idx].shape != p.shape:
            raise ValueError(f"shape mismatch at parameter {idx}: {p.shape} vs {g.shape}")
        state.m[idx] = b1 * state.m[idx] + (1 - b1) * g
        state.v[idx] = b2 * state.v[idx] + (1 - b2) * g * g
        m_hat = state.m[idx] / c1
        v_hat = state.v[idx] / c2
        out.append(p - lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return out, state


# --------------------------------------------------------------------------
# checkpoint layout


def mlp_to_dict(net: Mlp) -> dict:
    return {
        "sizes": list(net.sizes),
        "activation": net.activation,
        "params": [p.ravel().tolist() for p in net.params()],
    }


def mlp_from_dict(doc: dict) -> Mlp:
    sizes = tuple(int(s) for s in doc["sizes"])
    flat = doc["params"]
    if len(flat) != 2 * (len(sizes) - 1):
        raise ValueError(f"checkpoint has {len(flat)} parameter arrays for sizes {sizes}")
    weights, biases = [], []
    for l, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        weights.append(np.array(flat[2 * l], dtype=float).reshape(fan_out, fan_in))
        biases.append(np.array(flat[2 * l + 1], dtype=float).reshape(fan_out))
    return Mlp(sizes, weights, biases, doc.get("activation", "tanh"))
