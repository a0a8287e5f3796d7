"""Entropic optimal transport between discrete measures.

All iterations run in the log domain. Costs are ``cost_scale * |x - y|^2``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Literal, Optional

import numba
import numpy as np

from .measure import DiscreteMeasure

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 10_000

Side = Literal["first", "second"]


class SinkhornWarning(RuntimeWarning):
    """Emitted when a solve stops at max_iter without reaching its tolerance."""


@dataclass(frozen=True, eq=False)
class SinkhornPotentials:
    u: np.ndarray
    v: np.ndarray
    epsilon: float
    mu: DiscreteMeasure
    nu: DiscreteMeasure
    converged: bool
    iterations: int
    marginal_violation: float
    tol: float
    cost_scale: float = 1.0


@dataclass(frozen=True, eq=False)
class TransportPlan:
    matrix: np.ndarray

    def row_sums(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    def col_sums(self) -> np.ndarray:
        return self.matrix.sum(axis=0)


def cost_matrix(x: np.ndarray, y: np.ndarray, cost_scale: float = 1.0) -> np.ndarray:
    # explicit differences: the |x|^2 - 2xy + |y|^2 expansion loses digits at small eps
    diff = x[:, None, :] - y[None, :, :]
    return cost_scale * np.einsum("ijk,ijk->ij", diff, diff)


_BLOCK = 1 << 16  # entries per row block; keeps the work buffer cache-resident
_DENSE_LIMIT = 4_000_000  # above this many entries, costs are rebuilt per block
# exp() takes a slow path once its result underflows; terms this small cannot
# move a row sum that already contains exp(0) = 1
_EXP_FLOOR = -700.0
# cold solves whose cost range exceeds this multiple of eps are warmed up by halving eps
_SCALING_RATIO = 50.0
_STAGE_TOL = 1e-2


@numba.njit(cache=True, fastmath=True)
def _block_logits(X, Yt, g, scale, start, out):
    # out[r, j] = g[j] - scale * |X[start + r] - Y[j]|^2, Y given transposed
    rows, m = out.shape
    for r in range(rows):
        row = out[r]
        row[:] = 0.0
        for k in range(X.shape[1]):
            xk = X[start + r, k]
            yk = Yt[k]
            for j in range(m):
                t = xk - yk[j]
                row[j] += t * t
        for j in range(m):
            row[j] = g[j] - scale * row[j]


@numba.njit(cache=True, fastmath=True)
def _shift_rows(out, zmax, floor):
    rows, m = out.shape
    for r in range(rows):
        zr = zmax[r]
        row = out[r]
        for j in range(m):
            row[j] = max(row[j] - zr, floor)


class _ScaledCost:
    """-C/eps between two point sets, dense when small and blockwise otherwise."""

    def __init__(self, X: np.ndarray, Y: np.ndarray, eps: float, cost_scale: float = 1.0):
        self.X, self.Y = np.ascontiguousarray(X), np.ascontiguousarray(Y)
        self.eps = eps
        self.cost_scale = cost_scale
        n, m = X.shape[0], Y.shape[0]
        self.rows = max(1, min(n, _BLOCK // m))
        self.dense = None
        self.Yt = None
        if n * m <= _DENSE_LIMIT:
            self.dense = -cost_matrix(X, Y, cost_scale) / eps
        else:
            self.Yt = np.ascontiguousarray(self.Y.T)

    def transpose(self) -> "_ScaledCost":
        if self.dense is None:
            return _ScaledCost(self.Y, self.X, self.eps, self.cost_scale)
        t = _ScaledCost.__new__(_ScaledCost)
        t.X, t.Y, t.eps, t.cost_scale, t.Yt = self.Y, self.X, self.eps, self.cost_scale, None
        n, m = self.Y.shape[0], self.X.shape[0]
        t.rows = max(1, min(n, _BLOCK // m))
        t.dense = np.ascontiguousarray(self.dense.T)
        return t

    def softmin(self, log_w: np.ndarray, f: np.ndarray) -> np.ndarray:
        """-eps log sum_j w_j exp((f_j - c(x_i, y_j))/eps) for every row i."""
        n = self.X.shape[0]
        g = log_w + f / self.eps
        if self.dense is not None and self.rows >= n:
            z = self.dense + g
            zmax = z.max(axis=1)
            z -= zmax[:, None]
            np.maximum(z, _EXP_FLOOR, out=z)
            np.exp(z, out=z)
            return -self.eps * (zmax + np.log(z.sum(axis=1)))
        out = np.empty(n)
        buf = np.empty((self.rows, self.Y.shape[0]))
        for s in range(0, n, self.rows):
            e = min(s + self.rows, n)
            b = buf[: e - s]
            if self.dense is not None:
                np.add(self.dense[s:e], g, out=b)
                zmax = b.max(axis=1)
                np.subtract(b, zmax[:, None], out=b)
                np.maximum(b, _EXP_FLOOR, out=b)
            else:
                _block_logits(self.X, self.Yt, g, self.cost_scale / self.eps, s, b)
                zmax = b.max(axis=1)
                _shift_rows(b, zmax, _EXP_FLOOR)
            np.exp(b, out=b)
            out[s:e] = -self.eps * (zmax + np.log(b.sum(axis=1)))
        return out


def softmin(X: np.ndarray, Y: np.ndarray, log_w: np.ndarray, f: np.ndarray, eps: float,
            cost_scale: float = 1.0) -> np.ndarray:
    """Soft minimum over the rows of Y: -eps log sum_j w_j exp((f_j - c(x_i, y_j))/eps)."""
    return _ScaledCost(X, Y, eps, cost_scale).softmin(log_w, f)


def _log(w: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(w)


def _row_violation(a: np.ndarray, u: np.ndarray, u_next: np.ndarray, eps: float) -> float:
    # row sums of the plan built from (u, v) equal a * exp((u - u_next)/eps)
    r = np.minimum((u - u_next) / eps, 700.0)
    return float(np.sum(a * np.abs(np.expm1(r))))


def _check(mu: DiscreteMeasure, nu: DiscreteMeasure, eps: float, tol: float) -> None:
    if not eps > 0:
        raise ValueError("epsilon must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if mu.dim != nu.dim:
        raise ValueError(f"dimension mismatch: {mu.dim} vs {nu.dim}")


def _alternate(K: _ScaledCost, Kt: _ScaledCost, a, b, log_a, log_b, u, eps, tol, max_iter):
    """Plain alternating updates from ``u``. Returns (u, v, iterations, row error)."""
    v = Kt.softmin(log_a, u)
    it = 0
    err = np.inf
    while it < max_iter:
        it += 1
        u_next = K.softmin(log_b, v)
        err = _row_violation(a, u, u_next, eps)
        if err <= tol:
            break
        u = u_next
        v = Kt.softmin(log_a, u)
    if it == 0:
        err = _row_violation(a, u, K.softmin(log_b, v), eps)
    return u, v, it, err


def _cost_bound(x: np.ndarray, y: np.ndarray, cost_scale: float) -> float:
    """Upper bound on the cost over all pairs, from the joint bounding box."""
    both = np.vstack([x.min(axis=0), x.max(axis=0), y.min(axis=0), y.max(axis=0)])
    return cost_scale * float(np.sum((both.max(axis=0) - both.min(axis=0)) ** 2))


def sinkhorn_knopp(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    eps: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    init: Optional[tuple[np.ndarray, np.ndarray]] = None,
    cost_scale: float = 1.0,
    eps_scaling: Optional[bool] = None,
) -> SinkhornPotentials:
    """Alternating softmin updates until the L1 marginal violation is <= tol.

    ``init`` is an optional ``(u, v)`` warm start. Running out of iterations
    is not an error: the result comes back with ``converged=False``.

    Cold starts with a cost range far above ``eps`` first solve a sequence of
    problems with eps halved from the cost range down, each warm-starting
    the next (``eps_scaling=None`` picks this automatically). The stages
    share the ``max_iter`` budget. The fixed point is the same either way.
    """
    _check(mu, nu, eps, tol)
    a, b = mu.weights, nu.weights
    log_a, log_b = _log(a), _log(b)

    u = np.zeros(mu.size) if init is None else np.array(init[0], dtype=np.float64)
    if eps_scaling is None:
        eps_scaling = init is None and _cost_bound(mu.points, nu.points, cost_scale) > _SCALING_RATIO * eps
    used = 0
    if eps_scaling:
        stage = _cost_bound(mu.points, nu.points, cost_scale) / 2
        while stage > eps and used < max_iter:
            K = _ScaledCost(mu.points, nu.points, stage, cost_scale)
            u, _, it, _ = _alternate(K, K.transpose(), a, b, log_a, log_b, u, stage, max(tol, _STAGE_TOL),
                                     max_iter - used)
            used += it
            stage /= 2

    K = _ScaledCost(mu.points, nu.points, eps, cost_scale)
    Kt = K.transpose()
    u, v, it, err = _alternate(K, Kt, a, b, log_a, log_b, u, eps, tol, max_iter - used)
    it += used
    converged = err <= tol

    col_err = _row_violation(b, v, Kt.softmin(log_a, u), eps)
    violation = max(err, col_err)
    if not np.all(np.isfinite(u)) or not np.all(np.isfinite(v)):
        converged = False
    # equalise the two expectations; the pair is only defined up to (u + r, v - r)
    r = 0.5 * (a @ u - b @ v)
    return SinkhornPotentials(u - r, v + r, float(eps), mu, nu, converged, it, violation, tol, cost_scale)


def autocorrelation_potential(
    mu: DiscreteMeasure,
    eps: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    init: Optional[np.ndarray] = None,
    cost_scale: float = 1.0,
) -> SinkhornPotentials:
    """Symmetric potential of the self-transport problem OT_eps(mu, mu).

    Uses the averaged update ``u <- (u + softmin(u)) / 2``, which converges
    where the plain symmetric iteration oscillates.
    """
    _check(mu, mu, eps, tol)
    a = mu.weights
    log_a = _log(a)
    K = _ScaledCost(mu.points, mu.points, eps, cost_scale)
    u = np.zeros(mu.size) if init is None else np.array(init, dtype=np.float64)

    converged = False
    it = 0
    err = np.inf
    while it < max_iter:
        it += 1
        u_next = K.softmin(log_a, u)
        err = _row_violation(a, u, u_next, eps)
        if err <= tol:
            converged = True
            break
        u = 0.5 * (u + u_next)
    if not np.all(np.isfinite(u)):
        converged = False
    u.setflags(write=False)
    return SinkhornPotentials(u, u, float(eps), mu, mu, converged, it, err, tol, cost_scale)


def ot_eps(pot: SinkhornPotentials) -> float:
    """Entropic OT value sum_i a_i u_i + sum_j b_j v_j.

    At the fixed point the plan's total mass is one, and this dual value
    coincides with the primal <C, P> + eps * KL(P | a x b).
    """
    return float(pot.mu.weights @ pot.u + pot.nu.weights @ pot.v)


def ot_value(mu: DiscreteMeasure, nu: DiscreteMeasure, eps: float, tol: float = DEFAULT_TOL,
             max_iter: int = DEFAULT_MAX_ITER, cost_scale: float = 1.0) -> float:
    return ot_eps(sinkhorn_knopp(mu, nu, eps, tol, max_iter, cost_scale=cost_scale))


def primal_objective(plan: np.ndarray, mu: DiscreteMeasure, nu: DiscreteMeasure, eps: float,
                     cost_scale: float = 1.0) -> float:
    """<C, P> + eps * KL(P | a x b) for an arbitrary nonnegative plan."""
    C = cost_matrix(mu.points, nu.points, cost_scale)
    ref = np.outer(mu.weights, nu.weights)
    mask = plan > 0
    kl = np.sum(plan[mask] * np.log(plan[mask] / ref[mask])) - plan.sum() + ref.sum()
    return float(np.sum(C * plan) + eps * kl)


def sinkhorn_divergence(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    eps: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    cost_scale: float = 1.0,
    clamp: bool = True,
) -> float:
    """Debiased divergence OT(mu, nu) - OT(mu, mu)/2 - OT(nu, nu)/2.

    Negative values within 10 * tol of zero are rounding and are clamped.
    Unconverged solves raise a :class:`SinkhornWarning`.
    """
    cross = sinkhorn_knopp(mu, nu, eps, tol, max_iter, cost_scale=cost_scale)
    auto_mu = autocorrelation_potential(mu, eps, tol, max_iter, cost_scale=cost_scale)
    auto_nu = autocorrelation_potential(nu, eps, tol, max_iter, cost_scale=cost_scale)
    _warn_unconverged(cross, auto_mu, auto_nu)
    value = ot_eps(cross) - 0.5 * ot_eps(auto_mu) - 0.5 * ot_eps(auto_nu)
    if clamp and -10 * tol <= value < 0:
        value = 0.0
    return value


def _warn_unconverged(*pots: SinkhornPotentials) -> None:
    for p in pots:
        if not p.converged:
            warnings.warn(
                f"Sinkhorn stopped after {p.iterations} iterations with marginal violation "
                f"{p.marginal_violation:.3g} > tol {p.tol:.3g} (eps={p.epsilon:g})",
                SinkhornWarning,
                stacklevel=3,
            )


def plan_from_potentials(pot: SinkhornPotentials) -> TransportPlan:
    C = cost_matrix(pot.mu.points, pot.nu.points, pot.cost_scale)
    logp = (pot.u[:, None] + pot.v[None, :] - C) / pot.epsilon
    P = np.outer(pot.mu.weights, pot.nu.weights) * np.exp(logp)
    return TransportPlan(P)


def _other_side(pot: SinkhornPotentials, side: Side):
    if side == "first":
        return pot.nu, pot.v
    if side == "second":
        return pot.mu, pot.u
    raise ValueError(f"side must be 'first' or 'second', got {side!r}")


def _extension_logits(pot: SinkhornPotentials, x: np.ndarray, side: Side):
    support, f = _other_side(pot, side)
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x.reshape(1, -1) if single else x
    if X.shape[1] != support.dim:
        raise ValueError(f"dimension mismatch: point has {X.shape[1]}, support has {support.dim}")
    C = cost_matrix(X, support.points, pot.cost_scale)
    z = _log(support.weights)[None, :] + (f[None, :] - C) / pot.epsilon
    return X, z, support, single


def extend_potential(pot: SinkhornPotentials, x, side: Side = "first"):
    """Evaluate a potential off its support through the log-sum-exp formula.

    ``side="first"`` extends u (integrating against the second measure),
    ``side="second"`` extends v. Accepts one point or an (n, d) array.
    """
    _, z, _, single = _extension_logits(pot, x, side)
    zmax = z.max(axis=1)
    val = -pot.epsilon * (zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1)))
    return float(val[0]) if single else val


def softmin_weights(pot: SinkhornPotentials, x, side: Side = "first") -> np.ndarray:
    _, z, _, single = _extension_logits(pot, x, side)
    z = z - z.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    return p[0] if single else p


def grad_extended_potential(pot: SinkhornPotentials, x, side: Side = "first") -> np.ndarray:
    """Spatial gradient of the extended potential: sum_j p_j(x) * 2 (x - y_j)."""
    X, z, support, single = _extension_logits(pot, x, side)
    z = z - z.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    g = 2.0 * pot.cost_scale * (X - p @ support.points)
    return g[0] if single else g
