"""Reference computations that share no code with the package under test."""

from __future__ import annotations

import math

import mpmath
import numpy as np


def sq_cost(x, y):
    x = np.atleast_2d(np.asarray(x, float))
    y = np.atleast_2d(np.asarray(y, float))
    return np.array([[float(np.sum((xi - yj) ** 2)) for yj in y] for xi in x])


def primal_value(P, C, a, b, eps):
    """<C, P> + eps * KL(P | a b^T), with 0 log 0 = 0."""
    ab = np.outer(a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl = np.where(P > 0, P * np.log(P / ab), 0.0).sum() - P.sum() + ab.sum()
    return float((C * P).sum() + eps * kl)


def golden_section(f, lo, hi, tol=1e-13, max_iter=500):
    g = (math.sqrt(5) - 1) / 2
    c, d = hi - g * (hi - lo), lo + g * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if hi - lo < tol:
            break
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - g * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + g * (hi - lo)
            fd = f(d)
    t = 0.5 * (lo + hi)
    return t, f(t)


def two_point_oracle(eps):
    """OT_eps between uniform{0,1} and itself over plans [[t, 1/2-t], [1/2-t, t]]."""
    C = np.array([[0.0, 1.0], [1.0, 0.0]])
    a = np.array([0.5, 0.5])

    def f(t):
        return primal_value(np.array([[t, 0.5 - t], [0.5 - t, t]]), C, a, a, eps)

    return golden_section(f, 1e-15, 0.5 - 1e-15)


def _null_basis(n, m):
    """Basis of matrices with zero row and column sums."""
    basis = []
    for i in range(n - 1):
        for j in range(m - 1):
            E = np.zeros((n, m))
            E[i, j] = E[-1, -1] = 1.0
            E[i, -1] = E[-1, j] = -1.0
            basis.append(E)
    return basis


def primal_oracle(C, a, b, eps, iters=500, dps=None):
    """Minimize the entropic primal over the transport polytope.

    The polytope is parameterized as a b^T + sum_k theta_k E_k, and the
    strictly convex objective is minimized by damped Newton steps that keep
    every entry positive, until the Newton decrement vanishes. The optimal
    plan can have entries near exp(-(max C - min C) / eps), which double
    precision cannot carry through the affine parameterization, so the
    iteration runs with enough digits to resolve them.
    """
    n, m = len(a), len(b)
    if dps is None:
        spread = float(np.max(C) - np.min(C)) / eps
        dps = 40 + int(math.ceil(2 * spread / math.log(10)))
    with mpmath.workdps(dps):
        eps_ = mpmath.mpf(float(eps))
        Cm = [[mpmath.mpf(float(C[i][j])) for j in range(m)] for i in range(n)]
        P0 = [[mpmath.mpf(float(a[i])) * mpmath.mpf(float(b[j])) for j in range(m)] for i in range(n)]
        E = _null_basis(n, m)
        theta = [mpmath.mpf(0)] * len(E)

        def plan(th):
            return [[P0[i][j] + sum(t * int(e[i, j]) for t, e in zip(th, E)) for j in range(m)] for i in range(n)]

        def grad(P):
            G = [[Cm[i][j] + eps_ * mpmath.log(P[i][j] / P0[i][j]) for j in range(m)] for i in range(n)]
            return mpmath.matrix([sum(G[i][j] * int(e[i, j]) for i in range(n) for j in range(m)) for e in E])

        def positive(P):
            return all(P[i][j] > 0 for i in range(n) for j in range(m))

        def value(P):
            return sum(Cm[i][j] * P[i][j] + eps_ * P[i][j] * mpmath.log(P[i][j] / P0[i][j])
                       for i in range(n) for j in range(m))

        tiny = mpmath.mpf(10) ** (-dps + 10)
        for _ in range(iters if E else 0):
            P = plan(theta)
            g = grad(P)
            H = mpmath.matrix(len(E), len(E))
            for k, ek in enumerate(E):
                for l, el in enumerate(E):
                    H[k, l] = sum(eps_ / P[i][j] * int(ek[i, j]) * int(el[i, j]) for i in range(n) for j in range(m))
            step = mpmath.lu_solve(H, g)
            decrement = sum(gk * sk for gk, sk in zip(g, step))
            if decrement < tiny:
                break
            f0, t = value(P), mpmath.mpf(1)
            for _ in range(400):
                cand = [th - t * st for th, st in zip(theta, step)]
                Pc = plan(cand)
                if positive(Pc) and value(Pc) <= f0 - t * decrement / 4:
                    break
                t /= 2
            else:
                break
            theta = cand
        P = plan(theta)
        kl = sum(P[i][j] * mpmath.log(P[i][j] / P0[i][j]) for i in range(n) for j in range(m))
        val = sum(Cm[i][j] * P[i][j] for i in range(n) for j in range(m)) + eps_ * kl
        return np.array([[float(P[i][j]) for j in range(m)] for i in range(n)]), float(val)


def finite_difference(f, x, h):
    """Central differences of a scalar function of a flat array."""
    x = np.array(x, dtype=float)
    out = np.empty_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        out.flat[i] = (f(xp) - f(xm)) / (2 * h)
    return out


def rel_err(a, b):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))
