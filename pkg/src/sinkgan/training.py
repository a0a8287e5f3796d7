"""Joint training of the generator and the particle latent (Algorithm 1)."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np
from numba import njit

from .generator import GeneratorNetwork, backward, forward, mlp_new
from .latent import LatentBatch, ParticleLatent, accumulate, apply_flow_updates, init_latent, sample_batch
from .measure import DiscreteMeasure, make_measure
from .sinkhorn import (
    SinkhornPotentials,
    autocorrelation_potential,
    extend_potential,
    grad_extended_potential,
    ot_eps,
    sinkhorn_knopp,
)

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("iter", "epsilon", "sinkhorn_estimate", "grad_norm_theta", "grad_norm_particles", "wall_ms")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 100
    n_particles: int = 1000
    latent_dim: int = 1
    out_dim: int = 2
    hidden: tuple = (256, 1024, 256, 256)
    activations: tuple = ("relu", "relu", "tanh", "identity")
    eps0: float = 0.005
    eps_floor: float = 0.005
    eps_decay: float = 1.0
    eps_period: int = 50
    lr_theta: float = 1e-4
    lr_particles: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    max_iters: int = 5000
    sinkhorn_tol: float = 1e-3
    sinkhorn_max_iter: int = 500
    seed: int = 0
    target_batch: Optional[int] = None  # None: same as batch_size; 0: whole training set
    schedule: str = "simultaneous"
    gen_iters: int = 50
    latent_iters: int = 20
    delta: float = 0.05
    init_scale: float = 1.0
    init_center: float = 0.0
    fixed_latent: bool = False
    biased_gradient: bool = False
    cost_scale: float = 1.0

    def __post_init__(self):
        if self.batch_size < 1 or self.n_particles < 1 or self.latent_dim < 1 or self.out_dim < 1:
            raise ValueError("sizes must be >= 1")
        if not (self.eps0 > 0 and self.eps_floor > 0 and self.eps_floor <= self.eps0):
            raise ValueError("need 0 < eps_floor <= eps0")
        if not 0 < self.eps_decay <= 1:
            raise ValueError("eps_decay must lie in (0, 1]")
        if self.eps_period < 1:
            raise ValueError("eps_period must be >= 1")
        if self.lr_theta < 0 or self.lr_particles < 0:
            raise ValueError("step sizes must be nonnegative")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.schedule not in ("simultaneous", "block"):
            raise ValueError(f"schedule must be 'simultaneous' or 'block', got {self.schedule!r}")
        if len(self.activations) != len(self.hidden):
            raise ValueError("one activation per hidden layer")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")

    @property
    def layer_dims(self) -> tuple:
        return (self.latent_dim, *self.hidden, self.out_dim)

    @property
    def particle_step(self) -> float:
        return 0.0 if self.fixed_latent else self.lr_particles

    def replace(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


@dataclass
class TrainState:
    net: GeneratorNetwork
    latent: ParticleLatent
    moments: tuple  # (first, second) Adam buffers, each shaped like params
    adam_t: int = 0
    iteration: int = 0
    schedule_pos: int = 0
    epsilon: float = 0.0
    metrics: list = field(default_factory=list)
    rejected: int = 0
    unconverged: int = 0
    warm: dict = field(default_factory=dict, repr=False)

    def copy(self) -> "TrainState":
        return replace(self, moments=tuple(m.copy() for m in self.moments), metrics=list(self.metrics),
                       warm=dict(self.warm))


@dataclass(frozen=True)
class FittedModel:
    net: GeneratorNetwork
    latent: ParticleLatent
    metrics: list
    state: Optional[TrainState] = None


def init_state(config: TrainConfig) -> TrainState:
    net = mlp_new(config.layer_dims, config.activations, seed=config.seed)
    lat = init_latent(config.n_particles, config.latent_dim, config.delta, seed=config.seed + 1,
                      init_scale=config.init_scale, center=config.init_center)
    zeros = (np.zeros(net.n_params), np.zeros(net.n_params))
    return TrainState(net, lat, zeros, epsilon=epsilon_schedule(0, config))


def epsilon_schedule(it: int, config: TrainConfig) -> float:
    """eps0 * decay^floor(it / period), never below the floor."""
    if it < 0:
        raise ValueError("iteration must be >= 0")
    eps = config.eps0 * config.eps_decay ** (it // config.eps_period)
    return max(eps, config.eps_floor)


@njit(cache=True, fastmath=True)
def _adam_kernel(p, g, m, v, lr, beta1, beta2, eps, c1, c2, p_out, m_out, v_out):
    for i in range(p.shape[0]):
        mi = beta1 * m[i] + (1.0 - beta1) * g[i]
        vi = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        m_out[i] = mi
        v_out[i] = vi
        p_out[i] = p[i] - lr * (mi / c1) / (np.sqrt(vi / c2) + eps)


def adam_update(params, grad, moments, lr: float, it: int, beta1: float = 0.9, beta2: float = 0.999,
                eps: float = 1e-8):
    """One bias-corrected Adam step; ``it`` counts from 1. Inputs are not modified."""
    m, v = moments
    p = np.ascontiguousarray(params, dtype=np.float64)
    out = np.empty_like(p), np.empty_like(p), np.empty_like(p)
    _adam_kernel(p, np.ascontiguousarray(grad, dtype=np.float64), m, v, float(lr), beta1, beta2, eps,
                 1.0 - beta1**it, 1.0 - beta2**it, *out)
    return out[0], (out[1], out[2])


# --- gradients ---------------------------------------------------------------

@dataclass
class StepSolution:
    x: np.ndarray
    cotangents: np.ndarray  # d S / d x_j, already carrying the 1/l weights
    cross: SinkhornPotentials
    auto: Optional[SinkhornPotentials]


def _warm_u(prev: Optional[SinkhornPotentials], x: np.ndarray) -> Optional[np.ndarray]:
    if prev is None or prev.mu.dim != x.shape[1]:
        return None
    u0 = extend_potential(prev, x, "first")
    return u0 if np.all(np.isfinite(u0)) else None


def solve_cotangents(x: np.ndarray, rho: DiscreteMeasure, eps: float, tol: float, max_iter: int,
                     biased: bool = False, warm: Optional[dict] = None, cost_scale: float = 1.0) -> StepSolution:
    """Potentials for OT(mu, rho) and OT(mu, mu) with mu uniform on ``x``.

    The cotangent for point j is (grad u(x_j) - grad a(x_j)) / l: the cross
    potential gradient minus the autocorrelation one. The self term enters
    the divergence with weight -1/2 and its gradient carries a factor 2.
    """
    warm = {} if warm is None else warm
    mu = make_measure(x)
    u0 = _warm_u(warm.get("cross"), x)
    cross = sinkhorn_knopp(mu, rho, eps, tol, max_iter, init=None if u0 is None else (u0, None),
                           cost_scale=cost_scale)
    g = grad_extended_potential(cross, x, "first")
    auto = None
    if not biased:
        a0 = _warm_u(warm.get("auto"), x)
        auto = autocorrelation_potential(mu, eps, tol, max_iter, init=a0, cost_scale=cost_scale)
        g = g - grad_extended_potential(auto, x, "first")
    return StepSolution(x, g / x.shape[0], cross, auto)


def objective(net: GeneratorNetwork, latent_points: np.ndarray, rho: DiscreteMeasure, eps: float,
              tol: float = 1e-12, max_iter: int = 100_000, cost_scale: float = 1.0) -> float:
    """S_eps(T_theta # (uniform on latent_points), rho), solved from scratch."""
    from .sinkhorn import sinkhorn_divergence

    mu = make_measure(forward(net, latent_points)[0])
    return sinkhorn_divergence(mu, rho, eps, tol, max_iter, cost_scale=cost_scale, clamp=False)


def objective_gradient_theta(net: GeneratorNetwork, rho_batch: DiscreteMeasure, batch: LatentBatch, eps: float,
                             tol: float = 1e-9, max_iter: int = 10_000, biased: bool = False) -> np.ndarray:
    """(1/l) sum_j g_j^T dT/dtheta (z_j) with the debiased cotangents g_j."""
    x, tape = forward(net, batch.points)
    sol = solve_cotangents(x, rho_batch, eps, tol, max_iter, biased)
    return backward(net, tape, sol.cotangents)[0]


def objective_gradient_particles(net: GeneratorNetwork, latent: ParticleLatent, rho_batch: DiscreteMeasure,
                                 batch: LatentBatch, eps: float, tol: float = 1e-9, max_iter: int = 10_000,
                                 biased: bool = False) -> np.ndarray:
    """Per-particle sum of (1/l) g_j^T dT/dz (z_{i_j} + w_j) over the batch."""
    x, tape = forward(net, batch.points)
    sol = solve_cotangents(x, rho_batch, eps, tol, max_iter, biased)
    return accumulate(latent, batch, backward(net, tape, sol.cotangents)[1])


# --- loop --------------------------------------------------------------------

def _phase(state: TrainState, config: TrainConfig) -> tuple[bool, bool]:
    """Which blocks move this iteration: (generator, particles)."""
    if config.schedule == "simultaneous":
        return True, True
    cycle = config.gen_iters + config.latent_iters
    return (state.iteration % cycle) < config.gen_iters, (state.iteration % cycle) >= config.gen_iters


def _target_batch(rho_n: DiscreteMeasure, config: TrainConfig, rng: np.random.Generator) -> DiscreteMeasure:
    size = config.batch_size if config.target_batch is None else config.target_batch
    if size == 0 or size >= rho_n.size:
        return rho_n
    idx = rng.choice(rho_n.size, size=size, replace=False)
    return make_measure(rho_n.points[idx])


def train_step(state: TrainState, rho_n: DiscreteMeasure, config: TrainConfig, inplace: bool = False) -> TrainState:
    """One iteration of Algorithm 1.

    Returns a new state and leaves ``state`` alone unless ``inplace`` is set,
    in which case the optimizer buffers are updated in place.
    """
    t0 = time.perf_counter()
    st = state if inplace else state.copy()
    eps = epsilon_schedule(st.schedule_pos, config)
    rng = np.random.default_rng([config.seed, st.iteration])
    batch = sample_batch(st.latent, config.batch_size, rng)
    rho_b = _target_batch(rho_n, config, rng)

    x, tape = forward(st.net, batch.points)
    sol = solve_cotangents(x, rho_b, eps, config.sinkhorn_tol, config.sinkhorn_max_iter,
                           config.biased_gradient, st.warm, config.cost_scale)
    a0 = st.warm.get("rho_auto") if rho_b is rho_n else None
    if a0 is not None and a0.epsilon != eps:
        a0 = None
    rho_auto = autocorrelation_potential(rho_b, eps, config.sinkhorn_tol, config.sinkhorn_max_iter,
                                         init=None if a0 is None else a0.u, cost_scale=config.cost_scale)
    auto_val = ot_eps(sol.auto) if sol.auto is not None else ot_eps(
        autocorrelation_potential(sol.cross.mu, eps, config.sinkhorn_tol, config.sinkhorn_max_iter,
                                  cost_scale=config.cost_scale))
    estimate = ot_eps(sol.cross) - 0.5 * auto_val - 0.5 * ot_eps(rho_auto)
    st.unconverged += sum(not p.converged for p in (sol.cross, sol.auto, rho_auto) if p is not None)

    g_theta, g_input = backward(st.net, tape, sol.cotangents)
    g_particles = accumulate(st.latent, batch, g_input)
    move_gen, move_lat = _phase(st, config)

    finite = np.isfinite(estimate) and np.all(np.isfinite(g_theta)) and np.all(np.isfinite(g_particles))
    if finite:
        st.warm = {"cross": sol.cross, "auto": sol.auto, "rho_auto": rho_auto if rho_b is rho_n else None}
        if move_gen and config.lr_theta > 0:
            if config.optimizer == "adam":
                st.adam_t += 1
                m, v = st.moments
                params = np.empty_like(st.net.params)
                _adam_kernel(st.net.params, g_theta, m, v, config.lr_theta, config.beta1, config.beta2,
                             config.adam_eps, 1.0 - config.beta1**st.adam_t, 1.0 - config.beta2**st.adam_t,
                             params, m, v)
            else:
                params = st.net.params - config.lr_theta * g_theta
            st.net = st.net.with_params(params, copy=False)
        if move_lat and config.particle_step > 0:
            # Algorithm 1 sums potential gradients over a particle's draws without the 1/l weight
            st.latent = apply_flow_updates(st.latent, config.batch_size * g_particles, config.particle_step)
    else:
        st.rejected += 1
        log.warning("iteration %d rejected: non-finite objective or gradient", st.iteration)

    st.epsilon = eps
    st.metrics.append({
        "iter": st.iteration,
        "epsilon": eps,
        "sinkhorn_estimate": float(estimate),
        "grad_norm_theta": float(np.linalg.norm(g_theta)),
        "grad_norm_particles": float(np.linalg.norm(g_particles)),
        "wall_ms": (time.perf_counter() - t0) * 1e3,
    })
    st.iteration += 1
    if move_gen:
        st.schedule_pos += 1
    return st


def fit(rho_n: DiscreteMeasure, config: TrainConfig, state: Optional[TrainState] = None,
        callback=None) -> FittedModel:
    """Run ``config.max_iters`` iterations, starting fresh or from ``state``."""
    if rho_n.dim != config.out_dim:
        raise ValueError(f"target has dimension {rho_n.dim}, generator outputs {config.out_dim}")
    st = init_state(config) if state is None else state.copy()
    if st.net.layer_dims != config.layer_dims:
        raise ValueError(f"state network {st.net.layer_dims} does not match config {config.layer_dims}")
    for _ in range(config.max_iters):
        st = train_step(st, rho_n, config, inplace=True)
        if callback is not None:
            callback(st)
    if st.unconverged:
        log.info("%d Sinkhorn solves stopped at max_iter", st.unconverged)
    return FittedModel(st.net, st.latent, st.metrics, st)


def config_fields() -> list[str]:
    return [f.name for f in fields(TrainConfig)]


def write_metrics_csv(metrics: list, path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(METRIC_COLUMNS) + "\n")
        for row in metrics:
            fh.write(",".join(str(row["iter"]) if c == "iter" else repr(float(row[c])) for c in METRIC_COLUMNS) + "\n")


def read_metrics_csv(path) -> list:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != METRIC_COLUMNS:
            raise ValueError(f"{path}: unexpected metrics header {header}")
        rows = []
        for lineno, line in enumerate(fh, 2):
            parts = line.strip().split(",")
            if len(parts) != len(METRIC_COLUMNS):
                raise ValueError(f"{path}:{lineno}: expected {len(METRIC_COLUMNS)} fields")
            rows.append({c: (int(v) if c == "iter" else float(v)) for c, v in zip(METRIC_COLUMNS, parts)})
    return rows
