"""Figures written next to the CSV outputs. Uses matplotlib's non-interactive backend."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# stable SVG ids and no timestamps, so identical inputs give identical files
matplotlib.rcParams["svg.hashsalt"] = "sinkgan"
_METADATA = {"svg": {"Date": None}, "png": {}, "pdf": {"CreationDate": None}}

_ISO = np.array([
    [np.sqrt(3) / 2, -np.sqrt(3) / 2, 0.0],
    [-0.5, -0.5, 1.0],
])


class PlotError(ValueError):
    pass


def isometric(points: np.ndarray) -> np.ndarray:
    """Fixed isometric projection of 3-D points to the page plane."""
    return np.asarray(points, dtype=np.float64) @ _ISO.T


def to_plane(points: np.ndarray) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64)
    if p.ndim != 2:
        raise PlotError("expected an (n, d) array")
    d = p.shape[1]
    if d == 1:
        return np.column_stack([p[:, 0], np.zeros(len(p))])
    if d == 2:
        return p
    if d == 3:
        return isometric(p)
    raise PlotError(f"cannot plot {d}-dimensional points (at most 3)")


def _save(fig, path) -> None:
    path = Path(path)
    fmt = path.suffix.lstrip(".").lower() or "svg"
    fig.savefig(path, format=fmt, metadata=_METADATA.get(fmt))
    plt.close(fig)


def scatter(clouds: Sequence[np.ndarray], labels: Sequence[str], path, title: str = "") -> None:
    """Overlay of up to a few point clouds, each drawn with its own marker colour."""
    flat = [to_plane(c) for c in clouds]
    fig, ax = plt.subplots(figsize=(5, 5))
    for pts, lab, marker in zip(flat, labels, ("o", "x", "+", "s")):
        ax.scatter(pts[:, 0], pts[:, 1], s=6, marker=marker, label=lab, alpha=0.7, linewidths=0.6)
    ax.set_aspect("equal", adjustable="datalim")
    if len(flat) > 1:
        ax.legend(loc="best")
    if title:
        ax.set_title(title)
    _save(fig, path)


def training_curve(metrics: Sequence[dict], path) -> None:
    it = np.array([m["iter"] for m in metrics])
    s = np.array([m["sinkhorn_estimate"] for m in metrics])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(it, s, lw=0.5, alpha=0.4, label="batch estimate")
    if len(s) >= 20:
        w = max(len(s) // 50, 5)
        ax.plot(it[w - 1:], np.convolve(s, np.ones(w) / w, mode="valid"), lw=1.5, label=f"mean over {w}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("S_eps estimate")
    ax.legend(loc="best")
    _save(fig, path)


def rate_plot(ns, means, stds, slope: float, intercept: float, path) -> None:
    ns = np.asarray(ns, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.errorbar(ns, means, yerr=stds, fmt="o", capsize=3, label="mean deviation")
    if np.isfinite(slope):
        ax.plot(ns, np.exp(intercept) * ns**slope, label=f"fit, slope {slope:.3f}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("|S(mu, rho_n) - S(mu, rho_ref)|")
    ax.legend(loc="best")
    _save(fig, path)


def delta_plot(rows, path) -> None:
    d = np.array([r[0] for r in rows])
    g = np.array([r[1] for r in rows])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(d, g, "o-")
    ax.set_xlabel("noise std delta")
    ax.set_ylabel("gap")
    _save(fig, path)
