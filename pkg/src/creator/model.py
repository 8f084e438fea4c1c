"""Data model and synthetic benchmark generation.

A shared DAG and mixing map, plus per-environment edge weights and noise
scales, define the ensemble

    y = W^T y + Omega z,      x = H y

from which each environment contributes n i.i.d. rows. Noise components are
standardized non-Gaussian draws from a fixed pool of families; the same pool
supplies the random edge weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .exceptions import ConfigurationError
from .numerics import RankTolerance, svd_rank

__all__ = [
    "NoiseSpec",
    "FAMILY_POOL",
    "Dag",
    "EnvParams",
    "ScmEnsemble",
    "MultiEnvDataset",
    "sample_noise",
    "sample_er_dag",
    "sample_mixing",
    "sample_env_params",
    "simulate",
    "check_degeneracy",
]

_FAMILIES = ("laplace", "exponential", "uniform", "gumbel", "beta",
             "gamma", "chi2", "gennorm")
_NEEDS_SHAPE = ("beta", "gamma", "chi2", "gennorm")


@dataclass(frozen=True)
class NoiseSpec:
    """One noise (or weight) distribution family with its parameters.

    `shape` parameterizes beta (a = b = shape), gamma (shape, unit scale),
    chi2 (degrees of freedom) and gennorm (exponent); the remaining families
    ignore it. `scale` multiplies the standardized draws.
    """

    family: str
    shape: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ConfigurationError(
                f"unknown family {self.family!r}; expected one of {_FAMILIES}"
            )
        if self.scale <= 0:
            raise ConfigurationError(f"scale must be positive, got {self.scale}")
        if self.family in _NEEDS_SHAPE and self.shape <= 0:
            raise ConfigurationError(
                f"{self.family} requires a positive shape, got {self.shape}"
            )

    def distribution(self):
        """Frozen unit-parameter scipy distribution for this family."""
        if self.family == "laplace":
            return stats.laplace(0.0, 1.0)
        if self.family == "exponential":
            return stats.expon(scale=1.0)
        if self.family == "uniform":
            return stats.uniform(0.0, 1.0)
        if self.family == "gumbel":
            return stats.gumbel_r(0.0, 1.0)
        if self.family == "beta":
            return stats.beta(self.shape, self.shape)
        if self.family == "gamma":
            return stats.gamma(self.shape, scale=1.0)
        if self.family == "chi2":
            return stats.chi2(self.shape)
        return stats.gennorm(self.shape)


# The nine-family pool used both for random edge weights and for mixed noise.
FAMILY_POOL: tuple[NoiseSpec, ...] = (
    NoiseSpec("laplace"),
    NoiseSpec("exponential"),
    NoiseSpec("uniform"),
    NoiseSpec("gumbel"),
    NoiseSpec("beta", shape=0.5),
    NoiseSpec("gamma", shape=1.0),
    NoiseSpec("chi2", shape=1.0),
    NoiseSpec("chi2", shape=3.0),
    NoiseSpec("gamma", shape=3.0),
)


def sample_noise(spec: NoiseSpec, n: int, rng) -> np.ndarray:
    """Draw n standardized values: empirically centered, population-variance scaled.

    The draws are divided by the family's exact standard deviation (not the
    sample one) and multiplied by ``spec.scale``, so the output has zero
    sample mean and variance ``scale**2`` up to sampling error.
    """
    rng = np.random.default_rng(rng)
    if n == 0:
        return np.zeros(0)
    dist = spec.distribution()
    draws = np.asarray(dist.rvs(size=n, random_state=rng), dtype=float)
    return spec.scale * (draws - draws.mean()) / dist.std()


class Dag:
    """Directed acyclic graph on nodes 0..d-1 with a boolean adjacency matrix.

    ``adjacency[i, j]`` is True iff the edge i -> j exists. Acyclicity is
    verified at construction.
    """

    def __init__(self, adjacency: np.ndarray):
        adj = np.array(adjacency, dtype=bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError(f"adjacency must be square, got {adj.shape}")
        if np.any(np.diag(adj)):
            raise ValueError("self-loops are not allowed")
        adj.setflags(write=False)
        self._adj = adj
        self._order = self._toposort()

    @property
    def adjacency(self) -> np.ndarray:
        return self._adj

    @property
    def d(self) -> int:
        return self._adj.shape[0]

    @property
    def num_edges(self) -> int:
        return int(self._adj.sum())

    def _toposort(self) -> list[int]:
        # Kahn's algorithm; lowest index first for determinism.
        indegree = self._adj.sum(axis=0).astype(int)
        remaining = set(range(self.d))
        order = []
        while remaining:
            ready = sorted(i for i in remaining if indegree[i] == 0)
            if not ready:
                raise ValueError("adjacency matrix contains a cycle")
            node = ready[0]
            remaining.discard(node)
            order.append(node)
            indegree -= self._adj[node].astype(int)
        return order

    def topological_order(self) -> list[int]:
        return list(self._order)

    def parents(self, i: int) -> set[int]:
        return set(np.flatnonzero(self._adj[:, i]).tolist())

    def children(self, i: int) -> set[int]:
        return set(np.flatnonzero(self._adj[i]).tolist())

    def parents_closed(self, i: int) -> set[int]:
        return self.parents(i) | {i}

    def children_closed(self, i: int) -> set[int]:
        return self.children(i) | {i}

    def surrounding(self, i: int) -> set[int]:
        """Parents j of i whose child set contains every child of i."""
        ch_i = self.children(i)
        return {j for j in self.parents(i) if ch_i <= self.children(j)}

    def surrounding_closed(self, i: int) -> set[int]:
        return self.surrounding(i) | {i}

    def edges(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self._adj))]

    def relabel(self, mapping) -> "Dag":
        """New Dag where node i becomes mapping[i]."""
        mapping = np.asarray(mapping, dtype=int)
        new = np.zeros_like(self._adj)
        for i, j in self.edges():
            new[mapping[i], mapping[j]] = True
        return Dag(new)

    def __eq__(self, other) -> bool:
        return isinstance(other, Dag) and np.array_equal(self._adj, other._adj)

    def __repr__(self) -> str:
        return f"Dag(d={self.d}, edges={self.edges()})"


@dataclass
class EnvParams:
    """Weights, noise scales, and per-component noise families of one environment."""

    W: np.ndarray
    omega: np.ndarray
    noise: tuple[NoiseSpec, ...]

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.omega = np.asarray(self.omega, dtype=float)
        d = self.W.shape[0]
        if self.W.shape != (d, d):
            raise ValueError(f"W must be square, got {self.W.shape}")
        if self.omega.shape != (d,) or np.any(self.omega <= 0):
            raise ValueError("omega must be a positive vector of length d")
        if len(self.noise) != d:
            raise ValueError(f"need {d} noise specs, got {len(self.noise)}")


@dataclass
class ScmEnsemble:
    """Shared DAG and mixing map with per-environment parameters."""

    dag: Dag
    H: np.ndarray
    envs: list[EnvParams]

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        d = self.dag.d
        if not self.envs:
            raise ValueError("need at least one environment")
        if self.H.ndim != 2 or self.H.shape[1] != d:
            raise ValueError(f"H must have {d} columns, got {self.H.shape}")
        if svd_rank(self.H) < d:
            raise ValueError("mixing matrix must have full column rank")
        off = ~self.dag.adjacency
        for k, env in enumerate(self.envs):
            if env.W.shape != (d, d):
                raise ValueError(f"environment {k}: W shape {env.W.shape} != ({d},{d})")
            if np.any(env.W[off] != 0):
                raise ValueError(f"environment {k}: weights off the dag support")

    @property
    def d(self) -> int:
        return self.dag.d

    @property
    def p(self) -> int:
        return self.H.shape[0]

    @property
    def K(self) -> int:
        return len(self.envs)

    def noise_loading(self, k: int) -> np.ndarray:
        """Omega^{-1} (I - W)^T for environment k; maps features to noise."""
        env = self.envs[k]
        return (np.eye(self.d) - env.W).T / env.omega[:, None]


@dataclass
class MultiEnvDataset:
    """Per-environment observation matrices, optionally with ground truth."""

    X: list[np.ndarray]
    Y: list[np.ndarray] | None = None
    Z: list[np.ndarray] | None = None
    ensemble: ScmEnsemble | None = None

    def __post_init__(self):
        if not self.X:
            raise ValueError("need at least one environment")
        self.X = [np.asarray(X, dtype=float) for X in self.X]
        p = self.X[0].shape[1]
        for k, X in enumerate(self.X):
            if X.ndim != 2 or X.shape[1] != p:
                raise ValueError(f"environment {k}: expected {p} columns, got {X.shape}")
            if X.shape[0] < 1:
                raise ValueError(f"environment {k}: no rows")
        for name in ("Y", "Z"):
            mats = getattr(self, name)
            if mats is None:
                continue
            if len(mats) != len(self.X):
                raise ValueError(f"{name} must cover all {len(self.X)} environments")
            mats = [np.asarray(M, dtype=float) for M in mats]
            setattr(self, name, mats)
            d = mats[0].shape[1]
            for k, M in enumerate(mats):
                if M.shape != (self.X[k].shape[0], d):
                    raise ValueError(f"{name}[{k}] has shape {M.shape}")
        if self.ensemble is not None and self.ensemble.p != p:
            raise ValueError("ensemble mixing width disagrees with X")

    @property
    def K(self) -> int:
        return len(self.X)

    @property
    def p(self) -> int:
        return self.X[0].shape[1]

    @property
    def n_per_env(self) -> list[int]:
        return [X.shape[0] for X in self.X]

    def has_ground_truth(self) -> bool:
        return self.Y is not None and self.ensemble is not None


def sample_er_dag(d: int, edge_prob: float, rng) -> Dag:
    """Erdos-Renyi DAG in index order: edge i -> j (i < j) w.p. edge_prob."""
    if d < 1:
        raise ConfigurationError(f"d must be >= 1, got {d}")
    if not 0.0 <= edge_prob <= 1.0:
        raise ConfigurationError(f"edge_prob must lie in [0, 1], got {edge_prob}")
    rng = np.random.default_rng(rng)
    mask = np.triu(rng.random((d, d)) < edge_prob, k=1)
    return Dag(mask)


def sample_mixing(p: int, d: int, rng) -> np.ndarray:
    """Standard normal (p, d) mixing matrix, re-drawn until full column rank."""
    if p < d:
        raise ConfigurationError(f"need p >= d, got p={p}, d={d}")
    rng = np.random.default_rng(rng)
    for _ in range(100):
        H = rng.normal(size=(p, d))
        if svd_rank(H) == d:
            return H
    raise ConfigurationError(f"could not draw a rank-{d} mixing matrix")


def sample_env_params(
    dag: Dag,
    sigma_scale: float,
    rng,
    weight_family: NoiseSpec | None = None,
    noise: tuple[NoiseSpec, ...] | None = None,
) -> EnvParams:
    """Random environment: family-drawn weights on the dag support, Omega in [0.5, 1.5].

    One weight family serves the whole matrix (drawn uniformly from the pool
    unless supplied); draws are used as-is, then multiplied by ``sigma_scale``.
    Noise specs default to a fresh uniform draw from the pool per component.
    """
    if sigma_scale <= 0:
        raise ConfigurationError(f"sigma_scale must be positive, got {sigma_scale}")
    rng = np.random.default_rng(rng)
    d = dag.d
    family = weight_family or FAMILY_POOL[rng.integers(len(FAMILY_POOL))]
    draws = np.asarray(family.distribution().rvs(size=(d, d), random_state=rng))
    W = np.where(dag.adjacency, sigma_scale * draws, 0.0)
    omega = rng.uniform(0.5, 1.5, size=d)
    if noise is None:
        noise = tuple(FAMILY_POOL[i] for i in rng.integers(len(FAMILY_POOL), size=d))
    return EnvParams(W, omega, tuple(noise))


def simulate(ensemble: ScmEnsemble, n: int, rng) -> MultiEnvDataset:
    """Draw n rows per environment; returns observations with ground truth attached."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(rng)
    order = ensemble.dag.topological_order()
    Xs, Ys, Zs = [], [], []
    for env in ensemble.envs:
        Z = np.column_stack([sample_noise(spec, n, rng) for spec in env.noise])
        Y = np.zeros((n, ensemble.d))
        for j in order:
            Y[:, j] = Y @ env.W[:, j] + env.omega[j] * Z[:, j]
        Xs.append(Y @ ensemble.H.T)
        Ys.append(Y)
        Zs.append(Z)
    return MultiEnvDataset(X=Xs, Y=Ys, Z=Zs, ensemble=ensemble)


def check_degeneracy(
    ensemble: ScmEnsemble,
    tol: RankTolerance | float | None = None,
) -> np.ndarray:
    """Per-node non-degeneracy: noise-loading rows span |parents| + 1 dimensions.

    Node i passes iff the K rows ``(Omega^{-1}(I - W)^T)_{i, .}`` across
    environments span a space of dimension |pa(i)| + 1, the condition under
    which the rank tests downstream can identify its parent set.
    """
    loadings = [ensemble.noise_loading(k) for k in range(ensemble.K)]
    out = np.zeros(ensemble.d, dtype=bool)
    for i in range(ensemble.d):
        rows = np.vstack([L[i] for L in loadings])
        out[i] = svd_rank(rows, tol) == len(ensemble.dag.parents(i)) + 1
    return out
