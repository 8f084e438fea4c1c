"""Causal representation learning from heterogeneous environments.

Recovers latent features, a topological ordering, and a shared causal graph
from multi-environment observations of linearly mixed linear-SCM data. The
pipeline has three stages: source-by-source topological ordering driven by
independence scores, edge pruning through rank tests on cross-environment
regression coefficients, and feature disentanglement via subspace
intersections.
"""

from .exceptions import (
    ConfigurationError,
    CreatorError,
    DegenerateDataError,
    DegenerateSubspaceError,
    NumericalFailureError,
    PseudoInverseFallbackWarning,
    StructuralFailureError,
    VacuousTestWarning,
)
from .hsic import HsicConfig, hsic_biased, hsic_profile, median_bandwidth
from .ica import IcaConfig, fast_ica
from .metrics import MetricsReport, d_top, evaluate_recovery, loc_r2, shd
from .model import (
    Dag,
    EnvParams,
    MultiEnvDataset,
    NoiseSpec,
    ScmEnsemble,
    check_degeneracy,
    sample_env_params,
    sample_er_dag,
    sample_mixing,
    simulate,
)
from .numerics import RankTolerance
from .pipeline import CreatorConfig, RecoveryResult, fit

__version__ = "0.1.0"
