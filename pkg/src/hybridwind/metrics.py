"""Point and distributional agreement between modeled and observed power."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import rel_entr

from .errors import ConfigError, ContractError, SizeError, UndefinedMetricError

DEFAULT_BINS = 30


def rmse(pred: Sequence[float], obs: Sequence[float]) -> float:
    pred = np.asarray(pred, dtype=float)
    obs = np.asarray(obs, dtype=float)
    if pred.shape != obs.shape:
        raise ContractError(f"length mismatch: {pred.shape} vs {obs.shape}")
    if pred.size == 0:
        raise SizeError("rmse of empty series")
    return float(np.sqrt(np.mean((pred - obs) ** 2)))


def cross_correlation(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation coefficient."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ContractError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise SizeError("cross correlation needs at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    denom = np.sqrt(np.sum(dx * dx) * np.sum(dy * dy))
    if denom == 0:
        raise UndefinedMetricError("cross correlation undefined for a constant series")
    return float(np.clip(np.sum(dx * dy) / denom, -1.0, 1.0))


@dataclass(frozen=True)
class JointDensity:
    """Normalized 2-D histogram over (wind speed, power)."""

    v_edges: np.ndarray
    p_edges: np.ndarray
    mass: np.ndarray

    @classmethod
    def estimate(cls, v: np.ndarray, p: np.ndarray, v_edges: np.ndarray, p_edges: np.ndarray) -> "JointDensity":
        v = np.asarray(v, dtype=float)
        p = np.asarray(p, dtype=float)
        if v.shape != p.shape or v.size == 0:
            raise SizeError("joint density needs equal-length, nonempty v and p")
        # clip so points on the outer edges are counted
        v = np.clip(v, v_edges[0], v_edges[-1])
        p = np.clip(p, p_edges[0], p_edges[-1])
        counts, _, _ = np.histogram2d(v, p, bins=[v_edges, p_edges])
        return cls(v_edges, p_edges, counts / counts.sum())


def shared_edges(
    hist: tuple[np.ndarray, np.ndarray],
    pred: tuple[np.ndarray, np.ndarray],
    bins: int | tuple[int, int] = DEFAULT_BINS,
) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width edges spanning the union range of both datasets."""
    nv, npow = (bins, bins) if np.isscalar(bins) else bins
    if nv <= 1 or npow <= 1:
        raise ConfigError("power-curve similarity needs more than one bin per axis")
    edges = []
    for axis, n in ((0, nv), (1, npow)):
        both = np.concatenate([np.asarray(hist[axis], float), np.asarray(pred[axis], float)])
        lo, hi = float(both.min()), float(both.max())
        if hi <= lo:
            hi = lo + 1.0
        edges.append(np.linspace(lo, hi, n + 1))
    return edges[0], edges[1]


def jensen_shannon(p: np.ndarray, q: np.ndarray) -> float:
    """Base-2 Jensen-Shannon divergence of two mass vectors, in [0, 1]."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    m = 0.5 * (p + q)
    js = 0.5 * (rel_entr(p, m).sum() + rel_entr(q, m).sum()) / np.log(2.0)
    return float(np.clip(js, 0.0, 1.0))


def power_curve_similarity(
    hist: tuple[Sequence[float], Sequence[float]],
    pred: tuple[Sequence[float], Sequence[float]],
    bins: int | tuple[int, int] | tuple[np.ndarray, np.ndarray] = DEFAULT_BINS,
) -> float:
    """1 - JSD between the (v, p) histograms of two datasets.

    Parameters
    ----------
    hist, pred : (v, p) pairs of arrays
        Wind speed and (capacity-factor) power samples.
    bins : int, (int, int) or (v_edges, p_edges)
        Bin counts for equal-width bins over the union range, or explicit
        shared edges.
    """
    if isinstance(bins, tuple) and len(bins) == 2 and np.ndim(bins[0]) == 1:
        v_edges, p_edges = (np.asarray(b, dtype=float) for b in bins)
        if v_edges.size <= 2 or p_edges.size <= 2:
            raise ConfigError("power-curve similarity needs more than one bin per axis")
    else:
        v_edges, p_edges = shared_edges(hist, pred, bins)
    f_hist = JointDensity.estimate(hist[0], hist[1], v_edges, p_edges)
    f_pred = JointDensity.estimate(pred[0], pred[1], v_edges, p_edges)
    return 1.0 - jensen_shannon(f_hist.mass, f_pred.mass)
