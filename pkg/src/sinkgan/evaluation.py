"""Held-out generalization gaps, sample-complexity sweeps and noise sweeps."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .latent import sample_model
from .measure import DiscreteMeasure, Sampler
from .sinkhorn import sinkhorn_divergence
from .synthdata import ExperimentSpec

# offsets that keep evaluation streams away from the training stream
GEN_SEED_OFFSET = 7_919
TEST_SEED_OFFSET = 1_000_003


@dataclass(frozen=True)
class RateSweepResult:
    ns: np.ndarray
    mean_dev: np.ndarray
    std_dev: np.ndarray
    trials: int
    slope: float
    intercept: float

    def rows(self):
        return list(zip(self.ns.tolist(), self.mean_dev.tolist(), self.std_dev.tolist()))


def generalization_gap(model, test_sampler: Sampler, n_test: int, n_gen: int, eps: float, seed: int,
                       tol: float = 1e-3, max_iter: int = 5000) -> float:
    """S_eps between n_gen model draws and n_test fresh target draws.

    ``model`` is anything with ``net`` and ``latent`` attributes. The model is
    only read.
    """
    gen, test = gap_samples(model, test_sampler, n_test, n_gen, seed)
    return sinkhorn_divergence(gen, test, eps, tol, max_iter)


def gap_samples(model, test_sampler: Optional[Sampler], n_test: int, n_gen: int,
                seed: int) -> tuple[DiscreteMeasure, Optional[DiscreteMeasure]]:
    """The two samples compared by :func:`generalization_gap`."""
    gen = sample_model(model.net, model.latent, n_gen, seed + GEN_SEED_OFFSET)
    test = None if test_sampler is None else test_sampler(n_test, seed + TEST_SEED_OFFSET)
    return gen, test


def sampling_floor(sampler: Sampler, n: int, eps: float, seed: int, tol: float = 1e-3,
                   max_iter: int = 5000) -> float:
    """S_eps between two independent n-samples of the same law."""
    a = sampler(n, seed + GEN_SEED_OFFSET)
    b = sampler(n, seed + TEST_SEED_OFFSET)
    return sinkhorn_divergence(a, b, eps, tol, max_iter)


def loglog_fit(ns, means) -> tuple[float, float]:
    """Least-squares slope and intercept of log(mean) against log(n)."""
    slope, intercept = np.polyfit(np.log(np.asarray(ns, dtype=float)), np.log(np.asarray(means, dtype=float)), 1)
    return float(slope), float(intercept)


def rate_sweep(mu_fixed: DiscreteMeasure, target_sampler: Sampler, ns: Sequence[int], trials: int, eps: float,
               seed: int, tol: float = 1e-9, max_iter: int = 10_000, ref_factor: int = 10) -> RateSweepResult:
    """Mean |S(mu, rho_n) - S(mu, rho_ref)| over trials, for each n.

    rho_ref is a sample ``ref_factor`` times the largest n. Trial t draws with
    seed (seed + t, n), so results do not depend on the order of evaluation.
    """
    ns = [int(n) for n in ns]
    if len(ns) < 2:
        raise ValueError("rate_sweep needs at least two sample sizes")
    if any(b <= a for a, b in zip(ns, ns[1:])) or ns[0] < 1:
        raise ValueError("sample sizes must be positive and strictly increasing")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    ref = target_sampler(ref_factor * ns[-1], [seed, 0])
    s_ref = sinkhorn_divergence(mu_fixed, ref, eps, tol, max_iter)
    means, stds = [], []
    for n in ns:
        devs = [abs(sinkhorn_divergence(mu_fixed, target_sampler(n, [seed + t, n]), eps, tol, max_iter) - s_ref)
                for t in range(trials)]
        means.append(np.mean(devs))
        stds.append(np.std(devs, ddof=1) if trials > 1 else 0.0)
    means = np.array(means)
    slope, intercept = loglog_fit(ns, means) if np.all(means > 0) else (float("nan"), float("nan"))
    return RateSweepResult(np.array(ns), means, np.array(stds), trials, slope, intercept)


def write_sweep_csv(result: RateSweepResult, path) -> None:
    lines = ["n,mean_dev,std_dev,trials"]
    lines += [f"{n},{m!r},{s!r},{result.trials}" for n, m, s in result.rows()]
    lines.append(f"slope={result.slope!r},intercept={result.intercept!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_sweep_csv(path) -> RateSweepResult:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or lines[0] != "n,mean_dev,std_dev,trials" or not lines[-1].startswith("slope="):
        raise ValueError(f"{path}: not a sweep CSV")
    rows = [ln.split(",") for ln in lines[1:-1]]
    foot = dict(kv.split("=", 1) for kv in lines[-1].split(","))
    return RateSweepResult(np.array([int(r[0]) for r in rows]), np.array([float(r[1]) for r in rows]),
                           np.array([float(r[2]) for r in rows]), int(rows[0][3]) if rows else 0,
                           float(foot["slope"]), float(foot["intercept"]))


def perturbation_sweep(base: ExperimentSpec, deltas: Sequence[float], config=None, model=None,
                       eps: Optional[float] = None, n_gen: Optional[int] = None, tol: float = 1e-3,
                       max_iter: int = 5000) -> list[tuple[float, float]]:
    """Gap against the target convolved with N(0, delta^2 I), for each delta.

    With ``model`` given, that one model is evaluated against every noisy
    target. Otherwise a model is trained per delta with ``config`` (a
    TrainConfig) on the noisy training sample.
    """
    deltas = [float(d) for d in deltas]
    if any(d < 0 for d in deltas) or any(b < a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be nonnegative and increasing")
    if model is None and config is None:
        raise ValueError("need a model or a training config")
    if eps is None:
        if config is None:
            raise ValueError("eps is required when no config is given")
        eps = config.eps_floor
    n_gen = base.n_test if n_gen is None else n_gen
    out = []
    for d in deltas:
        spec = base.with_noise(d)
        m = model
        if m is None:
            from .training import fit

            m = fit(spec.train_sample(), config)
        out.append((d, generalization_gap(m, spec.sampler(), spec.n_test, n_gen, eps, spec.seed, tol, max_iter)))
    return out


def write_delta_csv(rows, path) -> None:
    Path(path).write_text("delta,gap\n" + "".join(f"{d!r},{g!r}\n" for d, g in rows))


def linear_vs_constant(deltas, gaps) -> dict:
    """Residual sums of squares of constant and linear least-squares fits."""
    x = np.asarray(deltas, dtype=float)
    y = np.asarray(gaps, dtype=float)
    rss_const = float(np.sum((y - y.mean()) ** 2))
    slope, intercept = np.polyfit(x, y, 1)
    rss_lin = float(np.sum((y - (slope * x + intercept)) ** 2))
    return {"slope": float(slope), "intercept": float(intercept), "rss_constant": rss_const, "rss_linear": rss_lin}


def count_inversions(values) -> int:
    """Number of adjacent decreases."""
    v = np.asarray(values, dtype=float)
    return int(np.sum(np.diff(v) < 0))
