"""Deterministic linear-algebra kernels shared by every stage of the pipeline.

All routines are thin, contract-carrying wrappers around LAPACK via numpy:
rank decisions use a single relative singular-value threshold, regressions
solve normal equations with an explicit minimum-norm fallback, and every
sign/tie ambiguity is resolved by a fixed convention so that repeated runs
are bit-identical.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DegenerateDataError,
    DegenerateSubspaceError,
    NumericalFailureError,
    PseudoInverseFallbackWarning,
)

__all__ = [
    "RankTolerance",
    "DEFAULT_RANK_TOL",
    "svd_rank",
    "least_squares",
    "residualize",
    "whiten",
    "orthonormal_projector",
    "min_singular_vector",
    "fix_sign",
]


@dataclass(frozen=True)
class RankTolerance:
    """Relative singular-value cutoff for rank decisions.

    A singular value counts toward the rank iff it exceeds
    ``relative_threshold * sigma_max``. The default suits exact or
    population-level inputs; sampled rank tests use a larger value supplied
    through the pipeline configuration.
    """

    relative_threshold: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.relative_threshold < 1.0:
            raise ValueError(
                f"relative_threshold must lie in (0, 1), got {self.relative_threshold}"
            )


DEFAULT_RANK_TOL = RankTolerance()


def _as_tol(tol: RankTolerance | float | None) -> RankTolerance:
    if tol is None:
        return DEFAULT_RANK_TOL
    if isinstance(tol, RankTolerance):
        return tol
    return RankTolerance(float(tol))


def _singular_values(M: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    except np.linalg.LinAlgError as err:
        raise NumericalFailureError(
            f"SVD did not converge on a {M.shape} matrix"
        ) from err


def svd_rank(M: np.ndarray, tol: RankTolerance | float | None = None) -> int:
    """Numerical rank of ``M``: singular values above ``tol`` relative to the largest.

    A zero matrix (or empty matrix) has rank 0.
    """
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    s = _singular_values(M)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > _as_tol(tol).relative_threshold * s[0]))


def least_squares(A: np.ndarray, B: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    """Solve ``min_X ||A X - B||^2 + ridge ||X||^2`` by normal equations.

    Parameters
    ----------
    A : (n, q) regressor matrix.
    B : (n, m) or (n,) targets.
    ridge : nonnegative Tikhonov weight; 0 gives plain least squares.

    Returns
    -------
    X : (q, m) coefficients, or (q,) when ``B`` is one-dimensional.

    With ``ridge = 0`` and a singular Gram matrix the minimum-norm
    pseudo-inverse solution is returned and a
    :class:`PseudoInverseFallbackWarning` is emitted.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if ridge < 0:
        raise ValueError(f"ridge must be nonnegative, got {ridge}")
    squeeze = B.ndim == 1
    if squeeze:
        B = B[:, None]
    if A.shape[0] != B.shape[0]:
        raise ValueError(f"row mismatch: A has {A.shape[0]}, B has {B.shape[0]}")
    q = A.shape[1]
    if q == 0:
        out = np.zeros((0, B.shape[1]))
        return out[:, 0] if squeeze else out
    gram = A.T @ A
    rhs = A.T @ B
    if ridge > 0.0:
        coef = np.linalg.solve(gram + ridge * np.eye(q), rhs)
    else:
        # Relative cutoff 1e-12 ~ condition 1e12: beyond that the normal
        # equations carry no trustworthy digits and we fall back.
        if svd_rank(gram, RankTolerance(1e-12)) < q:
            warnings.warn(
                "singular Gram matrix; returning minimum-norm solution",
                PseudoInverseFallbackWarning,
                stacklevel=2,
            )
            coef = np.linalg.lstsq(A, B, rcond=None)[0]
        else:
            coef = np.linalg.solve(gram, rhs)
    return coef[:, 0] if squeeze else coef


def residualize(X: np.ndarray, Z: np.ndarray | None) -> np.ndarray:
    """Remove from each column of ``X`` its least-squares projection onto ``Z``.

    ``Z`` with zero columns (or ``None``) returns ``X`` unchanged. No
    intercept is added; callers center their data once upstream.
    """
    X = np.asarray(X, dtype=float)
    if Z is None:
        return X
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.shape[1] == 0:
        return X
    return X - Z @ least_squares(Z, X)


def whiten(
    X: np.ndarray,
    target_rank: int,
    tol: RankTolerance | float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Center ``X`` and rotate/scale it to identity second-moment matrix.

    Parameters
    ----------
    X : (n, p) data.
    target_rank : upper bound on the number of whitened coordinates; the
        effective dimension is ``min(target_rank, numerical rank of X)``.

    Returns
    -------
    whitened : (n, r) with ``whitened.T @ whitened / n == I_r``.
    backmap : (p, r) such that ``(X - mean) @ backmap == whitened``; a unit
        vector ``u`` in whitened coordinates pulls back to the direction
        ``backmap @ u`` on the original data.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if target_rank < 1:
        raise ValueError(f"target_rank must be >= 1, got {target_rank}")
    Xc = X - X.mean(axis=0)
    try:
        U, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    except np.linalg.LinAlgError as err:
        raise NumericalFailureError(f"SVD did not converge on {X.shape} data") from err
    if s[0] == 0.0:
        raise DegenerateDataError("cannot whiten constant data (rank 0)")
    r = int(np.sum(s > _as_tol(tol).relative_threshold * s[0]))
    r = min(r, int(target_rank))
    whitened = np.sqrt(n) * U[:, :r]
    backmap = np.sqrt(n) * (Vt[:r].T / s[:r])
    return whitened, backmap


def orthonormal_projector(
    vectors: np.ndarray,
    tol: RankTolerance | float | None = None,
) -> np.ndarray:
    """Orthogonal projector onto the span of the given row vectors.

    Parameters
    ----------
    vectors : (m, d) stack of spanning vectors (rows).

    Returns
    -------
    Q : (d, d) symmetric idempotent matrix projecting onto the span.
    """
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    s_all = _singular_values(V)
    if V.size == 0 or s_all[0] == 0.0:
        raise DegenerateSubspaceError("spanning set contains only zero vectors")
    _, s, Vt = np.linalg.svd(V, full_matrices=False)
    r = int(np.sum(s > _as_tol(tol).relative_threshold * s[0]))
    basis = Vt[:r]
    return basis.T @ basis


def min_singular_vector(M: np.ndarray) -> np.ndarray:
    """Unit right-singular vector for the smallest singular value of ``M``.

    Ties are broken by taking the last singular triple reported by the SVD;
    the sign is fixed so the first non-negligible component is positive.
    """
    M = np.asarray(M, dtype=float)
    try:
        _, _, Vt = np.linalg.svd(M)
    except np.linalg.LinAlgError as err:
        raise NumericalFailureError(f"SVD did not converge on a {M.shape} matrix") from err
    return fix_sign(Vt[-1])


def fix_sign(v: np.ndarray) -> np.ndarray:
    """Flip ``v`` if needed so its first non-negligible entry is positive.

    Entries below ``1e-12 * max|v|`` are treated as zero when locating the
    leading entry, so the convention is stable under numerical dust.
    """
    v = np.asarray(v, dtype=float)
    top = np.abs(v).max() if v.size else 0.0
    if top == 0.0:
        return v
    lead = np.flatnonzero(np.abs(v) > 1e-12 * top)
    if lead.size and v[lead[0]] < 0:
        return -v
    return v
