"""Dense feed-forward generator with hand-written reverse-mode products.

Parameters live in one flat float64 vector. Layer by layer, it holds the
weight matrix W (shape out x in, row-major) followed by the bias (out,).
The forward map of a layer is ``h -> act(W h + b)``; the last layer is
always affine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

ACTIVATIONS = ("identity", "relu", "tanh")


class GeneratorError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GeneratorNetwork:
    layer_dims: tuple
    activations: tuple
    params: np.ndarray
    _slices: list = field(init=False, repr=False)

    def __post_init__(self):
        dims = self.layer_dims
        if len(dims) < 2 or any(int(d) < 1 for d in dims):
            raise GeneratorError(f"invalid layer dims {dims}")
        if len(self.activations) != len(dims) - 2:
            raise GeneratorError(
                f"{len(dims) - 2} hidden layers need as many activations, got {len(self.activations)}"
            )
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise GeneratorError(f"unknown activation {a!r}; choose from {ACTIVATIONS}")
        if self.params.shape != (param_count(dims),):
            raise GeneratorError(f"expected {param_count(dims)} parameters, got {self.params.shape}")
        slices = []
        off = 0
        for n_in, n_out in zip(dims[:-1], dims[1:]):
            w = slice(off, off + n_in * n_out)
            off += n_in * n_out
            b = slice(off, off + n_out)
            off += n_out
            slices.append((w, b, n_in, n_out))
        object.__setattr__(self, "_slices", slices)

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_params(self) -> int:
        return self.params.shape[0]

    def weight(self, layer: int) -> np.ndarray:
        w, _, n_in, n_out = self._slices[layer]
        return self.params[w].reshape(n_out, n_in)

    def bias(self, layer: int) -> np.ndarray:
        return self.params[self._slices[layer][1]]

    def with_params(self, params: np.ndarray, copy: bool = True) -> "GeneratorNetwork":
        return make_network(self.layer_dims, self.activations, params, copy=copy)

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return forward(self, z)[0]


def param_count(layer_dims: Sequence[int]) -> int:
    return sum(a * b + b for a, b in zip(layer_dims[:-1], layer_dims[1:]))


def make_network(layer_dims, activations, params, copy: bool = True) -> GeneratorNetwork:
    p = np.array(params, dtype=np.float64, copy=copy).reshape(-1)
    p.setflags(write=False)
    return GeneratorNetwork(tuple(int(d) for d in layer_dims), tuple(activations), p)


def mlp_new(layer_dims: Sequence[int], activations: Sequence[str], seed: int = 0) -> GeneratorNetwork:
    """Glorot-uniform weights, zero biases, deterministic in ``seed``."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise GeneratorError(f"invalid layer dims {layer_dims}")
    rng = np.random.default_rng(seed)
    chunks = []
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        a = np.sqrt(6.0 / (n_in + n_out))
        chunks.append(rng.uniform(-a, a, size=n_in * n_out))
        chunks.append(np.zeros(n_out))
    return make_network(dims, activations, np.concatenate(chunks))


@dataclass
class Tape:
    """Per-layer inputs and pre-activations retained by :func:`forward`."""

    inputs: list
    preacts: list
    single: bool


def _act(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "tanh":
        return np.tanh(x)
    return x


def _act_grad(name: str, pre: np.ndarray) -> Optional[np.ndarray]:
    if name == "relu":
        # subgradient 0 at the kink
        return (pre > 0).astype(np.float64)
    if name == "tanh":
        t = np.tanh(pre)
        return 1.0 - t * t
    return None


def _as_batch(net: GeneratorNetwork, z) -> tuple[np.ndarray, bool]:
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim <= 1
    Z = z.reshape(1, -1) if single else z
    if Z.shape[1] != net.in_dim:
        raise GeneratorError(f"input has dimension {Z.shape[1]}, network expects {net.in_dim}")
    return Z, single


def forward(net: GeneratorNetwork, z) -> tuple[np.ndarray, Tape]:
    """Evaluate the network on one point (k,) or a batch (n, k)."""
    h, single = _as_batch(net, z)
    inputs, preacts = [], []
    n_layers = len(net.layer_dims) - 1
    for layer in range(n_layers):
        inputs.append(h)
        pre = h @ net.weight(layer).T + net.bias(layer)
        preacts.append(pre)
        h = _act(net.activations[layer], pre) if layer < n_layers - 1 else pre
    out = h[0] if single else h
    return out, Tape(inputs, preacts, single)


def backward(net: GeneratorNetwork, tape: Tape, g) -> tuple[np.ndarray, np.ndarray]:
    """Reverse pass for output cotangents ``g``.

    Returns ``(theta_grad, input_grads)``: the parameter cotangent summed over
    the batch, and one input cotangent per row.
    """
    G = np.asarray(g, dtype=np.float64)
    G = G.reshape(1, -1) if G.ndim <= 1 else G
    if G.shape != tape.preacts[-1].shape:
        raise GeneratorError(f"cotangent shape {G.shape} does not match output {tape.preacts[-1].shape}")
    grad = np.empty(net.n_params)
    n_layers = len(net.layer_dims) - 1
    delta = G
    for layer in range(n_layers - 1, -1, -1):
        if layer < n_layers - 1:
            d = _act_grad(net.activations[layer], tape.preacts[layer])
            if d is not None:
                delta = delta * d
        w_sl, b_sl, _, _ = net._slices[layer]
        grad[w_sl] = (delta.T @ tape.inputs[layer]).reshape(-1)
        grad[b_sl] = delta.sum(axis=0)
        delta = delta @ net.weight(layer)
    return grad, delta


def vjp_params(net: GeneratorNetwork, z, g, tape: Optional[Tape] = None) -> np.ndarray:
    """g^T d T_theta(z) / d theta. For a batch, the sum over rows."""
    if tape is None:
        _, tape = forward(net, z)
    return backward(net, tape, g)[0]


def vjp_input(net: GeneratorNetwork, z, g, tape: Optional[Tape] = None) -> np.ndarray:
    """g^T d T_theta(z) / d z, per row for a batch."""
    if tape is None:
        _, tape = forward(net, z)
    gz = backward(net, tape, g)[1]
    return gz[0] if tape.single else gz
