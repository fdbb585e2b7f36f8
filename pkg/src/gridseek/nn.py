"""Small fully-connected networks with hand-written forward/backward passes.

Everything is float64 numpy.  Activations are smooth so that gradients can be
validated against central finite differences.  Networks are plain value
objects; training mutates parameters in place through ``adam_step``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = "gridseek-mlp-v1"


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _silu(x):
    return x * _sigmoid(x)


def _silu_grad(x):
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


_ACTIVATIONS = {
    "silu": (_silu, _silu_grad),
    "tanh": (np.tanh, lambda x: 1.0 - np.tanh(x) ** 2),
    "linear": (lambda x: x, lambda x: np.ones_like(x)),
}


@dataclass
class Network:
    layer_dims: list[int]
    activations: list[str]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


def init_network(layer_dims, activations=None,
                 rng: np.random.Generator | None = None) -> Network:
    """Fan-in-scaled uniform init; hidden layers silu, output linear."""
    if rng is None:
        rng = np.random.default_rng(0)
    layer_dims = list(layer_dims)
    if len(layer_dims) < 2:
        raise ValueError("need at least input and output dims")
    n_layers = len(layer_dims) - 1
    if activations is None:
        activations = ["silu"] * (n_layers - 1) + ["linear"]
    activations = list(activations)
    if len(activations) != n_layers:
        raise ValueError("one activation per layer required")
    for a in activations:
        if a not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {a!r}")
    weights, biases = [], []
    for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = np.sqrt(3.0 / d_in)
        weights.append(rng.uniform(-bound, bound, size=(d_in, d_out)))
        biases.append(np.zeros(d_out))
    return Network(layer_dims, activations, weights, biases)


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    """Evaluate the network; accepts a single vector or a (batch, dim) array."""
    out, _ = forward_cached(net, x)
    return out


def forward_cached(net: Network, x: np.ndarray):
    """Forward pass keeping pre-activations and layer inputs for backward."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != net.in_dim:
        raise ValueError(f"input dim {h.shape[1]} != expected {net.in_dim}")
    inputs, preacts = [], []
    for w, b, act in zip(net.weights, net.biases, net.activations):
        inputs.append(h)
        z = h @ w + b
        preacts.append(z)
        h = _ACTIVATIONS[act][0](z)
    out = h[0] if single else h
    return out, (inputs, preacts, single)


def backward(net: Network, cache, grad_out: np.ndarray):
    """Reverse-mode pass.

    ``grad_out`` is dLoss/dOutput with the same shape as the forward output.
    Returns (param_grads, grad_input); param_grads interleaves weight and bias
    gradients in layer order and sums over the batch.
    """
    inputs, preacts, single = cache
    g = np.asarray(grad_out, dtype=np.float64)
    if single:
        g = g[None, :]
    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.biases)
    for i in range(len(net.weights) - 1, -1, -1):
        g = g * _ACTIVATIONS[net.activations[i]][1](preacts[i])
        grads_w[i] = inputs[i].T @ g
        grads_b[i] = g.sum(axis=0)
        g = g @ net.weights[i].T
    grad_input = g[0] if single else g
    params = []
    for gw, gb in zip(grads_w, grads_b):
        params.append(gw)
        params.append(gb)
    return params, grad_input


def param_gradients(net: Network, x: np.ndarray,
                    loss_grad_at_output: np.ndarray) -> list[np.ndarray]:
    """Exact gradients of a scalar loss w.r.t. all parameters, given the loss
    gradient at the network output."""
    _, cache = forward_cached(net, x)
    grads, _ = backward(net, cache, loss_grad_at_output)
    return grads


def input_gradients(net: Network, x: np.ndarray) -> np.ndarray:
    """Gradient of the scalar output w.r.t. the input vector (batched: one
    gradient row per input row)."""
    if net.out_dim != 1:
        raise ValueError("input_gradients requires a scalar-output network")
    out, cache = forward_cached(net, x)
    _, grad_in = backward(net, cache, np.ones_like(out))
    return grad_in


@dataclass
class AdamState:
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def init_adam(net: Network, lr: float = 1e-3) -> AdamState:
    params = net.parameters()
    return AdamState(lr=lr,
                     m=[np.zeros_like(p) for p in params],
                     v=[np.zeros_like(p) for p in params])


def adam_step(net: Network, state: AdamState,
              grads: list[np.ndarray]) -> tuple[Network, AdamState]:
    """Standard bias-corrected adaptive-moment update, in place."""
    params = net.parameters()
    if len(grads) != len(params):
        raise ValueError("gradient list must match parameter list")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / correction1) / (np.sqrt(v / correction2)
                                             + state.eps)
    return net, state


def save_network(net: Network, path) -> None:
    """Text header (dims, activations, version) then flat little-endian
    float64 parameter arrays in layer order; round-trips bit-exactly."""
    header = json.dumps({
        "format": FORMAT_VERSION,
        "layer_dims": net.layer_dims,
        "activations": net.activations,
    })
    with open(path, "wb") as f:
        f.write(header.encode("utf-8") + b"\n")
        for p in net.parameters():
            f.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_network(path) -> Network:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        if header.get("format") != FORMAT_VERSION:
            raise ValueError("not a gridseek network file")
        dims = header["layer_dims"]
        net = Network(dims, header["activations"], [], [])
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            w = np.frombuffer(f.read(8 * d_in * d_out), dtype="<f8")
            net.weights.append(w.reshape(d_in, d_out).copy())
            b = np.frombuffer(f.read(8 * d_out), dtype="<f8")
            net.biases.append(b.copy())
        if f.read(1):
            raise ValueError("trailing bytes in network file")
    return net
