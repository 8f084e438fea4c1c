"""Kernel independence score between a candidate source and residuals.

Biased V-statistic (n-1)^{-2} tr(K H L H) with RBF kernels and the median
pairwise distance as bandwidth. Large inputs are reduced to a seeded
subsample before the Gram matrices are formed, which keeps the score both
affordable and deterministic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import pdist

from .exceptions import ConfigurationError, DegenerateInputWarning

__all__ = ["HsicConfig", "HsicEstimate", "hsic_biased", "hsic_profile",
           "median_bandwidth"]


@dataclass(frozen=True)
class HsicConfig:
    """Bandwidth and subsampling policy for the independence score.

    ``bandwidth`` None selects the median heuristic per argument; a float
    fixes both kernels (mainly for tests). ``subsample`` caps the number of
    rows entering the Gram matrices (None disables).
    """

    bandwidth: float | None = None
    subsample: int | None = 500
    seed: int = 0

    def __post_init__(self):
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ConfigurationError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.subsample is not None and self.subsample < 10:
            raise ConfigurationError(f"subsample must be >= 10, got {self.subsample}")


class HsicEstimate(NamedTuple):
    value: float
    degenerate: bool


def median_bandwidth(points: np.ndarray, rng=0) -> float:
    """Median pairwise Euclidean distance, on at most 1000 seeded-subsampled points.

    Falls back to 1.0 (with a warning) when all points coincide.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    if n > 1000:
        idx = np.sort(np.random.default_rng(rng).choice(n, size=1000, replace=False))
        pts = pts[idx]
    if pts.shape[0] < 2:
        warnings.warn("fewer than two points; bandwidth 1.0", DegenerateInputWarning,
                      stacklevel=2)
        return 1.0
    med = float(np.median(pdist(pts)))
    if med == 0.0:
        warnings.warn("all points identical; bandwidth 1.0", DegenerateInputWarning,
                      stacklevel=2)
        return 1.0
    return med


def _subsampled(u: np.ndarray, v: np.ndarray, cfg: HsicConfig):
    n = u.shape[0]
    if cfg.subsample is not None and n > cfg.subsample:
        idx = np.sort(
            np.random.default_rng(cfg.seed).choice(n, size=cfg.subsample, replace=False)
        )
        return u[idx], v[idx]
    return u, v


def _centered_gram_scalar(x: np.ndarray, sigma: float) -> np.ndarray:
    D2 = (x[:, None] - x[None, :]) ** 2
    K = np.exp(-D2 / (2.0 * sigma**2))
    return _double_center(K)


def _double_center(K: np.ndarray) -> np.ndarray:
    row = K.mean(axis=1, keepdims=True)
    col = K.mean(axis=0, keepdims=True)
    return K - row - col + K.mean()


def hsic_biased(u: np.ndarray, v: np.ndarray, cfg: HsicConfig | None = None) -> HsicEstimate:
    """Independence score between the scalar sample ``u`` and ``v`` (scalar or rows).

    Returns a nonnegative value (tiny negative rounding is clamped to zero).
    Zero-variance input yields ``HsicEstimate(0.0, degenerate=True)``; at
    least 4 samples are required.
    """
    cfg = cfg or HsicConfig()
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if u.shape[0] != v.shape[0]:
        raise ValueError(f"sample mismatch: {u.shape[0]} vs {v.shape[0]}")
    if u.shape[0] < 4:
        raise ValueError(f"need at least 4 samples, got {u.shape[0]}")
    if v.shape[1] == 1:
        values, flags = hsic_profile(u, v, cfg)
        return HsicEstimate(float(values[0]), bool(flags[0]))
    us, vs = _subsampled(u, v, cfg)
    if np.ptp(us) == 0.0 or not np.any(np.ptp(vs, axis=0)):
        return HsicEstimate(0.0, True)
    m = us.shape[0]
    sigma_u = cfg.bandwidth or median_bandwidth(us, cfg.seed)
    sigma_v = cfg.bandwidth or median_bandwidth(vs, cfg.seed)
    Kc = _centered_gram_scalar(us, sigma_u)
    D2 = ((vs[:, None, :] - vs[None, :, :]) ** 2).sum(axis=-1)
    L = np.exp(-D2 / (2.0 * sigma_v**2))
    value = float((Kc * L).sum()) / (m - 1) ** 2
    return HsicEstimate(max(value, 0.0), False)


def hsic_profile(
    u: np.ndarray, V: np.ndarray, cfg: HsicConfig | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Score ``u`` against every column of ``V``, sharing the centered u-Gram.

    Column j of the output equals ``hsic_biased(u, V[:, j], cfg)`` exactly;
    this is the form the ordering loop uses (one candidate source versus all
    residual coordinates).
    """
    cfg = cfg or HsicConfig()
    u = np.asarray(u, dtype=float).ravel()
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if u.shape[0] != V.shape[0]:
        raise ValueError(f"sample mismatch: {u.shape[0]} vs {V.shape[0]}")
    if u.shape[0] < 4:
        raise ValueError(f"need at least 4 samples, got {u.shape[0]}")
    us, Vs = _subsampled(u, V, cfg)
    m, q = Vs.shape
    values = np.zeros(q)
    degenerate = np.zeros(q, dtype=bool)
    if np.ptp(us) == 0.0:
        return values, np.ones(q, dtype=bool)
    sigma_u = cfg.bandwidth or median_bandwidth(us, cfg.seed)
    Kc = _centered_gram_scalar(us, sigma_u)
    denom = (m - 1) ** 2
    for j in range(q):
        col = Vs[:, j]
        if np.ptp(col) == 0.0:
            degenerate[j] = True
            continue
        sigma_v = cfg.bandwidth or median_bandwidth(col, cfg.seed)
        D2 = (col[:, None] - col[None, :]) ** 2
        L = np.exp(-D2 / (2.0 * sigma_v**2))
        values[j] = max(float((Kc * L).sum()) / denom, 0.0)
    return values, degenerate
