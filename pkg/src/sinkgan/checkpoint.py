"""Binary ``SGAN1`` checkpoints: generator block, particle block, optional optimizer state.

Layout (all integers little-endian uint32 unless noted, floats little-endian float64):

    b"SGAN1"
    k, d, L                      L = number of hidden layers
    layer dims (L + 2 values)
    activation tags (L bytes)    0 identity, 1 relu, 2 tanh
    params
    m, k, delta, particles (m*k)
    optional trailer: b"STATE", iteration, schedule_pos, adam_t, rejected,
        unconverged (uint64 each), epsilon, first moments, second moments
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .generator import ACTIVATIONS, GeneratorNetwork, make_network, param_count
from .latent import ParticleLatent, make_latent

MAGIC = b"SGAN1"
STATE_MAGIC = b"STATE"
_F8 = np.dtype("<f8")


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class OptimizerState:
    iteration: int
    schedule_pos: int
    adam_t: int
    rejected: int
    unconverged: int
    epsilon: float
    moments: tuple


def encode(net: GeneratorNetwork, lat: ParticleLatent, opt: Optional[OptimizerState] = None) -> bytes:
    if net.in_dim != lat.k:
        raise CheckpointError(f"generator input dimension {net.in_dim} differs from latent dimension {lat.k}")
    dims = net.layer_dims
    n_hidden = len(dims) - 2
    parts = [
        MAGIC,
        struct.pack("<3I", dims[0], dims[-1], n_hidden),
        struct.pack(f"<{len(dims)}I", *dims),
        bytes(ACTIVATIONS.index(a) for a in net.activations),
        np.ascontiguousarray(net.params, dtype=_F8).tobytes(),
        struct.pack("<2Id", lat.m, lat.k, lat.delta),
        np.ascontiguousarray(lat.particles, dtype=_F8).tobytes(),
    ]
    if opt is not None:
        parts.append(STATE_MAGIC)
        parts.append(struct.pack("<5Qd", opt.iteration, opt.schedule_pos, opt.adam_t, opt.rejected,
                                 opt.unconverged, opt.epsilon))
        for buf in opt.moments:
            if buf.shape != net.params.shape:
                raise CheckpointError("moment buffers must match the parameter vector")
            parts.append(np.ascontiguousarray(buf, dtype=_F8).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint while reading {what}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def floats(self, n: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(8 * n, what), dtype=_F8).astype(np.float64)


def decode(data: bytes) -> tuple[GeneratorNetwork, ParticleLatent, Optional[OptimizerState]]:
    r = _Reader(data)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointError("not an SGAN1 checkpoint")
    k, d, n_hidden = r.unpack("<3I", "header")
    dims = r.unpack(f"<{n_hidden + 2}I", "layer dims")
    if dims[0] != k or dims[-1] != d:
        raise CheckpointError("header dimensions disagree with layer dims")
    tags = r.take(n_hidden, "activation tags")
    if any(t >= len(ACTIVATIONS) for t in tags):
        raise CheckpointError("unknown activation tag")
    acts = tuple(ACTIVATIONS[t] for t in tags)
    params = r.floats(param_count(dims), "params")
    net = make_network(dims, acts, params, copy=False)
    m, lk, delta = r.unpack("<2Id", "particle header")
    if lk != k:
        raise CheckpointError(f"particle dimension {lk} differs from generator input {k}")
    lat = make_latent(r.floats(m * lk, "particles").reshape(m, lk), delta)
    opt = None
    if r.pos < len(data):
        rest = data[r.pos:r.pos + len(STATE_MAGIC)]
        if not STATE_MAGIC.startswith(rest):
            raise CheckpointError("unexpected trailing bytes")
        r.take(len(STATE_MAGIC), "state marker")
        it, pos, t, rej, unc, eps = r.unpack("<5Qd", "optimizer state")
        moments = (r.floats(net.n_params, "moments"), r.floats(net.n_params, "moments"))
        opt = OptimizerState(it, pos, t, rej, unc, eps, moments)
        if r.pos != len(data):
            raise CheckpointError("unexpected trailing bytes")
    return net, lat, opt


def save(path, net: GeneratorNetwork, lat: ParticleLatent, opt: Optional[OptimizerState] = None) -> None:
    Path(path).write_bytes(encode(net, lat, opt))


def load(path) -> tuple[GeneratorNetwork, ParticleLatent, Optional[OptimizerState]]:
    return decode(Path(path).read_bytes())


def save_state(path, state) -> None:
    """Checkpoint a training state, including what is needed to resume it."""
    opt = OptimizerState(state.iteration, state.schedule_pos, state.adam_t, state.rejected, state.unconverged,
                         float(state.epsilon), state.moments)
    save(path, state.net, state.latent, opt)


def load_state(path):
    """Inverse of :func:`save_state`. Checkpoints without a trailer resume with fresh moments."""
    from .training import TrainState

    net, lat, opt = load(path)
    if opt is None:
        return TrainState(net, lat, (np.zeros(net.n_params), np.zeros(net.n_params)))
    return TrainState(net, lat, opt.moments, adam_t=opt.adam_t, iteration=opt.iteration,
                      schedule_pos=opt.schedule_pos, epsilon=opt.epsilon, rejected=opt.rejected,
                      unconverged=opt.unconverged)
