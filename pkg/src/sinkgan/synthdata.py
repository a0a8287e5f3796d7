"""Target distributions for the experiments and closed-form pushforward maps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .measure import DiscreteMeasure, Sampler

SPIRAL_MEANS = (0.1, 0.7, 0.9)
SPIRAL_VAR = 0.1
SWISSROLL_MEANS = ((0.4, 0.4), (0.2, 0.8), (0.8, 0.5))
SWISSROLL_VAR = 0.15


def spiral_map(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    return np.column_stack([x * np.sin(2 * np.pi * x), x * np.cos(2 * np.pi * x)])


def swissroll_map(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64).reshape(-1, 2)
    x, y = z[:, 0], z[:, 1]
    return np.column_stack([x * np.cos(2 * np.pi * x), y, x * np.sin(2 * np.pi * x)])


def helix_map(t: np.ndarray, turns: float = 2.0) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    a = 2 * np.pi * turns * t
    return np.column_stack([np.cos(a), np.sin(a), t])


def spiral_latent(n: int, rng: np.random.Generator, means=SPIRAL_MEANS, var=SPIRAL_VAR, return_labels=False):
    comp = rng.integers(0, len(means), size=n)
    x = np.asarray(means)[comp] + math.sqrt(var) * rng.standard_normal(n)
    return (x, comp) if return_labels else x


def swissroll_latent(n: int, rng: np.random.Generator, means=SWISSROLL_MEANS, var=SWISSROLL_VAR) -> np.ndarray:
    """Gaussian mixture restricted to the unit square, by rejection."""
    means = np.asarray(means, dtype=np.float64)
    out = np.empty((0, 2))
    while out.shape[0] < n:
        need = n - out.shape[0]
        batch = 2 * need + 16
        comp = rng.integers(0, len(means), size=batch)
        z = means[comp] + math.sqrt(var) * rng.standard_normal((batch, 2))
        keep = np.all((z >= 0.0) & (z <= 1.0), axis=1)
        out = np.vstack([out, z[keep][:need]])
    return out


def mixture4_draw(n: int, rng: np.random.Generator, scale: float = 1.0, std: float = 0.2, return_labels=False):
    means = scale * np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])
    comp = rng.integers(0, 4, size=n)
    x = means[comp] + std * rng.standard_normal((n, 2))
    return (x, comp) if return_labels else x


@dataclass(frozen=True)
class ExperimentSpec:
    """A named target law plus sample sizes and optional additive Gaussian noise."""

    name: str
    n_train: int = 1000
    n_test: int = 1000
    seed: int = 0
    noise: float = 0.0
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise KeyError(f"unknown experiment {self.name!r}; valid: {', '.join(sorted(EXPERIMENTS))}")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("sample sizes must be >= 1")
        if self.noise < 0:
            raise ValueError("noise must be nonnegative")

    @property
    def dim(self) -> int:
        return self.sampler().dim

    def sampler(self) -> Sampler:
        base = EXPERIMENTS[self.name](**self.constants)
        if self.noise == 0:
            return base
        return convolve(base, self.noise)

    def with_noise(self, noise: float) -> "ExperimentSpec":
        return replace(self, noise=float(noise))

    def train_sample(self) -> DiscreteMeasure:
        return self.sampler()(self.n_train, self.seed)

    def test_sample(self, seed_offset: int = 1_000_003) -> DiscreteMeasure:
        # disjoint from the training stream
        return self.sampler()(self.n_test, self.seed + seed_offset)


def convolve(base: Sampler, std: float) -> Sampler:
    """Sampler for base * N(0, std^2 I)."""

    def draw(n, rng):
        x = base.draw(n, rng)
        return x + std * rng.standard_normal(x.shape)

    return Sampler(draw, base.dim, f"{base.name}+N(0,{std:g}^2)")


def spiral_sampler(means=SPIRAL_MEANS, var=SPIRAL_VAR) -> Sampler:
    return Sampler(lambda n, rng: spiral_map(spiral_latent(n, rng, means, var)), 2, "spiral")


def swissroll_sampler(means=SWISSROLL_MEANS, var=SWISSROLL_VAR) -> Sampler:
    return Sampler(lambda n, rng: swissroll_map(swissroll_latent(n, rng, means, var)), 3, "swissroll")


def helix_sampler(turns: float = 2.0) -> Sampler:
    return Sampler(lambda n, rng: helix_map(rng.uniform(0.0, 1.0, n), turns), 3, "helix")


def mixture4_sampler(scale: float = 1.0, std: float = 0.2) -> Sampler:
    return Sampler(lambda n, rng: mixture4_draw(n, rng, scale, std), 2, "mixture4")


def mixture3_1d_sampler(means=SPIRAL_MEANS, var: float = 0.05) -> Sampler:
    return Sampler(lambda n, rng: spiral_latent(n, rng, means, var).reshape(-1, 1), 1, "mixture3-1d")


EXPERIMENTS: dict[str, Callable[..., Sampler]] = {
    "spiral": spiral_sampler,
    "swissroll": swissroll_sampler,
    "helix": helix_sampler,
    "mixture4": mixture4_sampler,
    "mixture3-1d": mixture3_1d_sampler,
}


# --- closed-form pushforwards ------------------------------------------------

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)


def _erfinv_newton(x: float) -> float:
    if x == 0.0:
        return 0.0
    # Winitzki's closed form as the starting point
    a = 0.147
    ln = math.log1p(-x * x)
    t = 2.0 / (math.pi * a) + 0.5 * ln
    y = math.copysign(math.sqrt(math.sqrt(t * t - ln / a) - t), x)
    for _ in range(100):
        r = math.erf(y) - x
        if abs(r) <= 1e-15:
            break
        y -= r / (_TWO_OVER_SQRT_PI * math.exp(-y * y))
    return y


def erf_inv_pushforward(x, c: float = 1.0):
    """sqrt(2) * erfinv(c x); with c = 1 it sends Uniform(-1, 1) to N(0, 1)."""
    arr = np.asarray(x, dtype=np.float64)
    cx = c * arr
    if np.any(np.abs(cx) >= 1.0):
        raise ValueError("erf_inv_pushforward needs |c x| < 1")
    out = math.sqrt(2.0) * np.vectorize(_erfinv_newton, otypes=[np.float64])(cx)
    return float(out) if arr.ndim == 0 else out


def _spd_sqrt(S: np.ndarray, inverse: bool = False) -> np.ndarray:
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    if S.shape[0] != S.shape[1] or not np.allclose(S, S.T, atol=1e-12 * max(1.0, np.abs(S).max())):
        raise ValueError("covariance must be a symmetric square matrix")
    lam, Q = np.linalg.eigh(S)
    if lam.min() <= 0:
        raise ValueError("covariance must be positive definite")
    lam = np.maximum(lam, 1e-12)
    p = -0.5 if inverse else 0.5
    return (Q * lam**p) @ Q.T


def gaussian_transport_map(m_mu, cov_mu, m_rho, cov_rho) -> tuple[np.ndarray, np.ndarray]:
    """Affine (A, b) with x -> A x + b sending N(m_mu, cov_mu) onto N(m_rho, cov_rho)."""
    m_mu = np.atleast_1d(np.asarray(m_mu, dtype=np.float64))
    m_rho = np.atleast_1d(np.asarray(m_rho, dtype=np.float64))
    s_half = _spd_sqrt(cov_mu)
    s_ihalf = _spd_sqrt(cov_mu, inverse=True)
    _spd_sqrt(cov_rho)  # validates
    mid = s_half @ np.atleast_2d(cov_rho) @ s_half
    A = s_ihalf @ _spd_sqrt(0.5 * (mid + mid.T)) @ s_ihalf
    return A, m_rho - A @ m_mu


def affine_density(x, A, b, f: Callable[[np.ndarray], float]) -> float:
    """Density at x of the image of density f under z -> A z + b."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    det = np.linalg.det(A)
    if abs(det) < 1e-300 or np.linalg.cond(A) > 1e14:
        raise ValueError("A must be invertible")
    z = np.linalg.solve(A, x - b)
    return float(f(z) / abs(det))
