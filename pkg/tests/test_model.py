"""Graph, ensemble-sampling, and simulation tests.

Distribution parameters are pinned against hand-derived moments so the scipy
frozen distributions cannot silently drift from the intended families.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from creator.exceptions import ConfigurationError, DegenerateDataError
from creator.model import (
    FAMILY_POOL,
    Dag,
    EnvParams,
    MultiEnvDataset,
    NoiseSpec,
    ScmEnsemble,
    check_degeneracy,
    sample_env_params,
    sample_er_dag,
    sample_mixing,
    sample_noise,
    simulate,
)

# family -> exact variance, derived by hand from the density
ANALYTIC_VARIANCE = {
    NoiseSpec("laplace"): 2.0,
    NoiseSpec("exponential"): 1.0,
    NoiseSpec("uniform"): 1.0 / 12.0,
    NoiseSpec("gumbel"): np.pi**2 / 6.0,
    NoiseSpec("beta", shape=0.5): 0.125,          # ab/((a+b)^2 (a+b+1))
    NoiseSpec("gamma", shape=1.0): 1.0,
    NoiseSpec("chi2", shape=1.0): 2.0,
    NoiseSpec("chi2", shape=3.0): 6.0,
    NoiseSpec("gamma", shape=3.0): 3.0,
    NoiseSpec("gennorm", shape=2.0): 0.5,         # Gamma(3/2)/Gamma(1/2)
    NoiseSpec("gennorm", shape=2.5): 0.41393269,  # Gamma(1.2)/Gamma(0.4)
}


def chain_dag(d):
    adj = np.zeros((d, d), dtype=bool)
    for i in range(d - 1):
        adj[i, i + 1] = True
    return Dag(adj)


def manual_ensemble(*, W_list, omega_list, H, noise=None):
    H = np.asarray(H, dtype=float)
    d = H.shape[1]
    adj = np.zeros((d, d), dtype=bool)
    for W in W_list:
        adj |= np.asarray(W) != 0
    specs = noise or tuple(NoiseSpec("laplace") for _ in range(d))
    envs = [
        EnvParams(np.asarray(W, dtype=float), np.asarray(om, dtype=float), specs)
        for W, om in zip(W_list, omega_list)
    ]
    return ScmEnsemble(Dag(adj), np.asarray(H, dtype=float), envs)


# ---------------------------------------------------------------- NoiseSpec

def test_noise_spec_rejects_unknown_family():
    with pytest.raises(ConfigurationError):
        NoiseSpec("cauchy")

def test_noise_spec_rejects_bad_parameters():
    with pytest.raises(ConfigurationError):
        NoiseSpec("laplace", scale=0.0)
    with pytest.raises(ConfigurationError):
        NoiseSpec("gennorm", shape=0.0)

def test_family_pool_has_nine_distinct_members():
    assert len(FAMILY_POOL) == 9
    assert len(set(FAMILY_POOL)) == 9
    assert all(spec.family != "gennorm" for spec in FAMILY_POOL)


# ---------------------------------------------------------------- sample_noise

def test_scipy_variances_match_hand_derived_constants():
    for spec, var in ANALYTIC_VARIANCE.items():
        assert_allclose(spec.distribution().var(), var, rtol=1e-6)

def test_sample_noise_standardization():
    rng = np.random.default_rng(0)
    for spec in ANALYTIC_VARIANCE:
        z = sample_noise(spec, 100_000, rng)
        assert abs(z.mean()) < 1e-12          # centered empirically
        assert abs(z.var() - 1.0) < 0.1       # population-variance scaling

def test_sample_noise_respects_scale():
    z1 = sample_noise(NoiseSpec("laplace"), 5000, 42)
    z3 = sample_noise(NoiseSpec("laplace", scale=3.0), 5000, 42)
    assert_allclose(z3, 3.0 * z1, atol=1e-12)

def test_sample_noise_gennorm_beta2_is_gaussian():
    from scipy.stats import kurtosis
    z = sample_noise(NoiseSpec("gennorm", shape=2.0), 100_000, 7)
    assert abs(kurtosis(z)) < 0.1

def test_sample_noise_beta_range_is_bounded():
    spec = NoiseSpec("beta", shape=0.5)
    z = sample_noise(spec, 10_000, 3)
    # raw support [0, 1] maps to a window of width 1/std = sqrt(8)
    assert z.max() - z.min() <= np.sqrt(8.0) + 1e-9

def test_sample_noise_deterministic():
    a = sample_noise(NoiseSpec("gumbel"), 100, 11)
    b = sample_noise(NoiseSpec("gumbel"), 100, 11)
    assert_allclose(a, b)


# ---------------------------------------------------------------- Dag

def test_dag_rejects_cycle():
    adj = np.array([[0, 1], [1, 0]], dtype=bool)
    with pytest.raises(ValueError):
        Dag(adj)

def test_dag_rejects_self_loop():
    adj = np.eye(2, dtype=bool)
    with pytest.raises(ValueError):
        Dag(adj)

def test_dag_triangle_queries():
    # 0 -> 1, 0 -> 2, 1 -> 2
    dag = Dag(np.array([[0, 1, 1], [0, 0, 1], [0, 0, 0]], dtype=bool))
    assert dag.parents(2) == {0, 1}
    assert dag.children(0) == {1, 2}
    assert dag.surrounding(1) == {0}        # ch(1)={2} subset of ch(0)={1,2}
    assert dag.surrounding_closed(1) == {0, 1}

def test_dag_surrounding_of_sink():
    dag = Dag(np.array([[0, 1, 1], [0, 0, 1], [0, 0, 0]], dtype=bool))
    # empty ch(2) is a subset of every parent's child set
    assert dag.surrounding(2) == {0, 1}
    assert dag.surrounding_closed(2) == {0, 1, 2}

def test_dag_chain_has_no_surrounding():
    dag = chain_dag(3)
    assert dag.surrounding(1) == set()
    assert dag.surrounding(2) == {1}
    assert dag.surrounding_closed(1) == {1}

def test_dag_topological_order():
    # 2 -> 0 -> 1 stored out of order
    dag = Dag(np.array([[0, 1, 0], [0, 0, 0], [1, 0, 0]], dtype=bool))
    order = dag.topological_order()
    pos = {node: t for t, node in enumerate(order)}
    assert pos[2] < pos[0] < pos[1]

def test_dag_relabel_roundtrip():
    dag = chain_dag(3)
    perm = np.array([2, 0, 1])
    back = np.argsort(perm)
    assert dag.relabel(perm).relabel(back) == dag
    assert dag.relabel(perm).num_edges == dag.num_edges

def test_dag_single_node():
    dag = Dag(np.zeros((1, 1), dtype=bool))
    assert dag.topological_order() == [0]
    assert dag.num_edges == 0


# ---------------------------------------------------------------- samplers

def test_sample_er_dag_extremes():
    assert sample_er_dag(1, 0.5, 0).num_edges == 0
    assert sample_er_dag(4, 1.0, 0).num_edges == 6
    assert sample_er_dag(4, 0.0, 0).num_edges == 0

def test_sample_er_dag_indices_are_topological():
    dag = sample_er_dag(5, 0.7, 123)
    for i, j in dag.edges():
        assert i < j

def test_sample_er_dag_edge_frequency():
    counts = [sample_er_dag(3, 0.5, s).num_edges for s in range(1000)]
    # 3 pairs, each present w.p. 0.5; 3 standard errors of the mean
    se = np.sqrt(3 * 0.25 / 1000)
    assert abs(np.mean(counts) - 1.5) < 3 * se

def test_sample_mixing_shapes_and_rank():
    from creator.numerics import svd_rank
    assert sample_mixing(1, 1, 0)[0, 0] != 0
    assert svd_rank(sample_mixing(30, 3, 1)) == 3
    assert svd_rank(sample_mixing(5, 5, 2)) == 5

def test_sample_mixing_rejects_p_below_d():
    with pytest.raises(ConfigurationError):
        sample_mixing(2, 3, 0)

def test_sample_env_params_empty_dag():
    params = sample_env_params(Dag(np.zeros((3, 3), dtype=bool)), 1.0, 0)
    assert_allclose(params.W, np.zeros((3, 3)))
    assert np.all((params.omega >= 0.5) & (params.omega <= 1.5))

def test_sample_env_params_weight_support_and_scale():
    dag = sample_er_dag(4, 0.6, 5)
    p1 = sample_env_params(dag, 1.0, 9)
    p2 = sample_env_params(dag, 0.05, 9)
    adj = dag.adjacency
    assert np.all(p1.W[~adj] == 0)
    assert np.all(p1.W[adj] != 0)
    assert_allclose(p2.W, 0.05 * p1.W, atol=1e-12)   # same seed, scaled weights

def test_sample_env_params_uniform_family_range():
    dag = chain_dag(2)
    params = sample_env_params(dag, 1.0, 3, weight_family=NoiseSpec("uniform"))
    w = params.W[0, 1]
    assert 0.0 < w < 1.0

def test_sample_env_params_supplied_noise():
    specs = (NoiseSpec("beta", shape=0.5), NoiseSpec("gumbel"))
    params = sample_env_params(chain_dag(2), 1.0, 4, noise=specs)
    assert params.noise == specs


# ---------------------------------------------------------------- ensemble validation

def test_ensemble_rejects_off_support_weights():
    W = np.array([[0.0, 1.0], [0.0, 0.0]])
    bad = np.array([[0.0, 0.0], [0.5, 0.0]])
    with pytest.raises(ValueError):
        manual_ensemble(W_list=[W, bad], omega_list=[[1, 1], [1, 1]], H=np.eye(2))

def test_ensemble_rejects_rank_deficient_mixing():
    W = np.zeros((2, 2))
    H = np.array([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(ValueError):
        manual_ensemble(W_list=[W], omega_list=[[1, 1]], H=H)

def test_ensemble_rejects_nonpositive_omega():
    with pytest.raises(ValueError):
        EnvParams(np.zeros((2, 2)), np.array([1.0, 0.0]),
                  (NoiseSpec("laplace"), NoiseSpec("laplace")))


# ---------------------------------------------------------------- simulate

def test_simulate_single_node_is_scaled_noise():
    ens = manual_ensemble(W_list=[np.zeros((1, 1))], omega_list=[[2.0]], H=[[1.0]])
    data = simulate(ens, 500, 0)
    assert_allclose(data.X[0][:, 0], 2.0 * data.Z[0][:, 0], atol=1e-12)
    assert_allclose(data.Y[0], data.X[0], atol=1e-12)

def test_simulate_chain_substitution():
    W = np.array([[0.0, 0.7], [0.0, 0.0]])
    ens = manual_ensemble(W_list=[W], omega_list=[[1.0, 0.8]], H=np.eye(2))
    data = simulate(ens, 300, 1)
    Y, Z = data.Y[0], data.Z[0]
    assert_allclose(Y[:, 0], Z[:, 0], atol=1e-12)
    assert_allclose(Y[:, 1], 0.7 * Y[:, 0] + 0.8 * Z[:, 1], atol=1e-12)

def test_simulate_layout_and_fixed_point():
    dag = sample_er_dag(4, 0.6, 2)
    H = sample_mixing(6, 4, 3)
    envs = [sample_env_params(dag, 1.0, 10 + k) for k in range(3)]
    ens = ScmEnsemble(dag, H, envs)
    data = simulate(ens, 200, 4)
    for k in range(3):
        Y, Z, X = data.Y[k], data.Z[k], data.X[k]
        W, om = envs[k].W, envs[k].omega
        assert_allclose(X, Y @ H.T, atol=1e-12)
        assert np.abs(Y - (Y @ W + Z * om)).max() < 1e-10

def test_simulate_noise_columns_uncorrelated():
    dag = chain_dag(3)
    H = np.eye(3)
    worst = 0.0
    for seed in range(20):
        envs = [sample_env_params(dag, 1.0, 100 + seed * 7 + k) for k in range(2)]
        data = simulate(ScmEnsemble(dag, H, envs), 2000, seed)
        for Z in data.Z:
            corr = np.corrcoef(Z.T)
            worst = max(worst, np.abs(corr - np.eye(3)).max())
    assert worst < 5.0 / np.sqrt(2000)

def test_simulate_deterministic():
    dag = sample_er_dag(3, 0.5, 0)
    ens = ScmEnsemble(dag, sample_mixing(3, 3, 1),
                      [sample_env_params(dag, 1.0, k) for k in range(2)])
    d1 = simulate(ens, 100, 9)
    d2 = simulate(ens, 100, 9)
    for a, b in zip(d1.X, d2.X):
        assert np.array_equal(a, b)


# ---------------------------------------------------------------- MultiEnvDataset

def test_dataset_rejects_mismatched_width():
    with pytest.raises(ValueError):
        MultiEnvDataset(X=[np.zeros((10, 3)), np.zeros((10, 4))])

def test_dataset_rejects_empty():
    with pytest.raises(ValueError):
        MultiEnvDataset(X=[])

def test_dataset_properties():
    data = MultiEnvDataset(X=[np.zeros((10, 3)), np.zeros((12, 3))])
    assert data.K == 2
    assert data.p == 3
    assert data.n_per_env == [10, 12]


# ---------------------------------------------------------------- check_degeneracy

def test_degeneracy_root_only_always_passes():
    ens = manual_ensemble(W_list=[np.zeros((1, 1))], omega_list=[[1.0]], H=[[1.0]])
    assert check_degeneracy(ens).tolist() == [True]

def test_degeneracy_single_env_chain_fails_child():
    W = np.array([[0.0, 0.9], [0.0, 0.0]])
    ens = manual_ensemble(W_list=[W], omega_list=[[1.0, 1.0]], H=np.eye(2))
    assert check_degeneracy(ens).tolist() == [True, False]

def test_degeneracy_two_envs_generic_passes():
    W1 = np.array([[0.0, 0.9], [0.0, 0.0]])
    W2 = np.array([[0.0, -0.4], [0.0, 0.0]])
    ens = manual_ensemble(W_list=[W1, W2], omega_list=[[1.0, 1.0], [1.2, 0.7]],
                          H=np.eye(2))
    assert check_degeneracy(ens).tolist() == [True, True]

def test_degeneracy_sampled_ensembles_mostly_pass():
    passes = 0
    for seed in range(100):
        dag = sample_er_dag(4, 0.5, 1000 + seed)
        envs = [sample_env_params(dag, 1.0, seed * 31 + k) for k in range(8)]
        ens = ScmEnsemble(dag, sample_mixing(4, 4, seed), envs)
        passes += bool(check_degeneracy(ens).all())
    assert passes >= 95
