"""Learnable latent law: m particles smoothed by an isotropic Gaussian."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .generator import GeneratorNetwork, forward
from .measure import DiscreteMeasure, make_measure


class LatentError(ValueError):
    pass


class NonFiniteGradient(FloatingPointError):
    """A flow step was refused because its gradient contained inf or nan."""


@dataclass(frozen=True, eq=False)
class ParticleLatent:
    particles: np.ndarray  # (m, k)
    delta: float

    def __post_init__(self):
        p = self.particles
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise LatentError("particles must be an (m, k) array with m, k >= 1")
        if not self.delta >= 0:
            raise LatentError("delta must be nonnegative")
        if not np.all(np.isfinite(p)):
            raise LatentError("particles must be finite")

    @property
    def m(self) -> int:
        return self.particles.shape[0]

    @property
    def k(self) -> int:
        return self.particles.shape[1]

    def as_measure(self) -> DiscreteMeasure:
        """The discrete part (1/m) sum_i delta_{z_i}."""
        return make_measure(self.particles)


def make_latent(particles, delta: float) -> ParticleLatent:
    p = np.array(particles, dtype=np.float64)
    if p.ndim == 1:
        p = p.reshape(-1, 1)
    p.setflags(write=False)
    return ParticleLatent(p, float(delta))


def init_latent(m: int, k: int, delta: float, seed: int, init_scale: float = 1.0, center=0.0) -> ParticleLatent:
    """m i.i.d. draws from N(center, init_scale^2 I_k)."""
    rng = np.random.default_rng(seed)
    return make_latent(center + init_scale * rng.standard_normal((m, k)), delta)


@dataclass(frozen=True, eq=False)
class LatentBatch:
    indices: np.ndarray  # (l,), zero-based
    perturbations: np.ndarray  # (l, k)
    points: np.ndarray  # (l, k) = particles[indices] + perturbations

    def __len__(self) -> int:
        return self.indices.shape[0]


def sample_batch(lat: ParticleLatent, size: int, seed) -> LatentBatch:
    """Uniform particle indices plus N(0, delta^2 I) offsets.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if size < 1:
        raise LatentError("batch size must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    idx = rng.integers(0, lat.m, size=size)
    if lat.delta > 0:
        w = lat.delta * rng.standard_normal((size, lat.k))
    else:
        w = np.zeros((size, lat.k))
    return LatentBatch(idx, w, lat.particles[idx] + w)


def accumulate(lat: ParticleLatent, batch: LatentBatch, per_point: np.ndarray) -> np.ndarray:
    """Sum per-batch-point vectors onto the particles they were drawn from."""
    out = np.zeros_like(lat.particles)
    np.add.at(out, batch.indices, per_point)
    return out


def apply_flow_updates(lat: ParticleLatent, grads: np.ndarray, step: float) -> ParticleLatent:
    """z_i <- z_i - step * grad_i. Rows with zero gradient are left bitwise intact."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != lat.particles.shape:
        raise LatentError(f"gradient shape {grads.shape} does not match particles {lat.particles.shape}")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteGradient("non-finite particle gradient; step refused")
    if step == 0:
        return lat
    new = lat.particles.copy()
    touched = np.any(grads != 0, axis=1)
    new[touched] -= step * grads[touched]
    return make_latent(new, lat.delta)


def sample_model(net: GeneratorNetwork, lat: ParticleLatent, n: int, seed) -> DiscreteMeasure:
    """n i.i.d. draws T(z_i + w), uniform weights."""
    if net.in_dim != lat.k:
        raise LatentError(f"generator expects dimension {net.in_dim}, latent has {lat.k}")
    batch = sample_batch(lat, n, seed)
    return make_measure(forward(net, batch.points)[0])
