"""Symmetric fixed-point ICA producing candidate unmixing directions.

Whitens the input to the requested number of components, runs the parallel
FastICA iteration with a contrast nonlinearity, and maps the unmixing rows
back to unit-norm direction vectors on the original coordinates. Several
seeded restarts are scored by a negentropy proxy and the best one is kept;
failure to converge is reported through a flag, never an exception.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError
from .numerics import RankTolerance, fix_sign, whiten

__all__ = ["IcaConfig", "IcaCandidates", "fast_ica"]

# E log cosh(Z) for standard normal Z (Gaussian baseline of the proxy).
_LOGCOSH_GAUSS = 0.374567207491438
# E Z^4 / 4 for standard normal Z.
_QUARTIC_GAUSS = 0.75


@dataclass(frozen=True)
class IcaConfig:
    nonlinearity: str = "logcosh"
    max_iter: int = 300
    conv_tol: float = 1e-7
    restarts: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.nonlinearity not in ("logcosh", "cube"):
            raise ConfigurationError(
                f"nonlinearity must be 'logcosh' or 'cube', got {self.nonlinearity!r}"
            )
        if self.restarts < 1:
            raise ConfigurationError(f"restarts must be >= 1, got {self.restarts}")
        if self.max_iter < 1:
            raise ConfigurationError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.conv_tol <= 0:
            raise ConfigurationError(f"conv_tol must be positive, got {self.conv_tol}")


@dataclass
class IcaCandidates:
    """Unit-norm unmixing directions for one environment.

    ``gains[i] * alphas[i] @ (x - mean)`` has unit sample variance; the rows
    are the candidate directions the ordering stage scores.
    """

    alphas: np.ndarray          # (r, p), unit rows, leading entry positive
    gains: np.ndarray           # (r,)
    converged: bool


def _sym_decorrelate(W: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(W @ W.T)
    vals = np.maximum(vals, 1e-12)
    return (vecs / np.sqrt(vals)) @ vecs.T @ W


def _fixed_point(V: np.ndarray, W0: np.ndarray, cfg: IcaConfig):
    n = V.shape[0]
    W = W0
    for _ in range(cfg.max_iter):
        S = V @ W.T
        if cfg.nonlinearity == "logcosh":
            G = np.tanh(S)
            gprime = 1.0 - G**2
        else:
            G = S**3
            gprime = 3.0 * S**2
        Wn = (G.T @ V) / n - gprime.mean(axis=0)[:, None] * W
        Wn = _sym_decorrelate(Wn)
        delta = np.abs(1.0 - np.abs((Wn * W).sum(axis=1))).max()
        W = Wn
        if delta < cfg.conv_tol:
            return W, True
    return W, False


def _negentropy_proxy(S: np.ndarray, nonlinearity: str) -> float:
    if nonlinearity == "logcosh":
        return float(((np.log(np.cosh(S)).mean(axis=0) - _LOGCOSH_GAUSS) ** 2).sum())
    return float((((S**4).mean(axis=0) / 4.0 - _QUARTIC_GAUSS) ** 2).sum())


def fast_ica(
    X: np.ndarray,
    n_components: int,
    cfg: IcaConfig | None = None,
    tol: RankTolerance | float | None = None,
) -> IcaCandidates:
    """Extract up to ``n_components`` independent directions from ``X``.

    The effective count is ``min(n_components, numerical rank of X)``; rank
    reduction is silent, but rank-0 input raises a degenerate-data error.
    """
    cfg = cfg or IcaConfig()
    X = np.asarray(X, dtype=float)
    whitened, backmap = whiten(X, n_components, tol)
    r = whitened.shape[1]
    rng = np.random.default_rng(cfg.seed)
    best_W, best_score, best_conv = None, -np.inf, False
    for _ in range(cfg.restarts):
        W0, _ = np.linalg.qr(rng.normal(size=(r, r)))
        W, converged = _fixed_point(whitened, W0, cfg)
        score = _negentropy_proxy(whitened @ W.T, cfg.nonlinearity)
        if score > best_score:
            best_W, best_score, best_conv = W, score, converged
    raw = backmap @ best_W.T                      # column i: direction for source i
    norms = np.linalg.norm(raw, axis=0)
    alphas = np.vstack([fix_sign(raw[:, i] / norms[i]) for i in range(r)])
    return IcaCandidates(alphas=alphas, gains=norms, converged=best_conv)
