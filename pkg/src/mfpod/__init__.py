"""Multifidelity proper orthogonal decomposition.

Builds POD subspaces from a few high-fidelity snapshots plus many cheap
surrogate snapshots, by minimizing a control-variate estimate of the
expected projection error.  See the README for the CLI and study tools.
"""

from .adaptive import AdaptiveStep, AdaptiveTrace, adaptive_weight, mfpod_adaptive
from .core import Basis, Metric, SnapshotSet, inner, norm, orthonormalize, project, validate_levels
from .estimator import (
    Allocation,
    VarianceProfile,
    estimate_profile,
    j_mc,
    j_mf,
    mf_mse,
    min_mse,
    optimal_alpha,
    usefulness,
)
from .experiment import (
    MfpFileError,
    Reference,
    StudyConfig,
    StudyReport,
    allocate_budget,
    build_reference,
    captured_energy,
    generate_snapshot_files,
    read_snapshots,
    run_study,
    select_dim,
    write_snapshots,
    write_study,
)
from .mfpod import MfBasis, MfOperator, build_operator, correct_eigenvalue, jmf_plus, mfpod_fixed
from .models import (
    AdvDiffConfig,
    ModelCosts,
    ModelPair,
    equispaced_parameters,
    fine_metric,
    make_model_pair,
    mass_matrix,
    prolong,
    restrict,
    sample_parameters,
    snapshot,
    solve_adv_diff,
)
from .pod import PodResult, pod, pod_projection_error
from .solver import EigenPairs, EigensolverError, LinearAction, dense_symmetric_eig, lowrank_eig
from .verify import (
    ConvergenceStudyResult,
    EigenSumStudy,
    convergence_study,
    eigenvalue_sum_mse,
    hs_error,
    reference_matrix,
    subspace_alignment,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveStep",
    "AdaptiveTrace",
    "AdvDiffConfig",
    "Allocation",
    "Basis",
    "ConvergenceStudyResult",
    "EigenPairs",
    "EigenSumStudy",
    "EigensolverError",
    "LinearAction",
    "Metric",
    "MfBasis",
    "MfOperator",
    "MfpFileError",
    "ModelCosts",
    "ModelPair",
    "PodResult",
    "Reference",
    "SnapshotSet",
    "StudyConfig",
    "StudyReport",
    "VarianceProfile",
    "adaptive_weight",
    "allocate_budget",
    "build_operator",
    "build_reference",
    "captured_energy",
    "convergence_study",
    "correct_eigenvalue",
    "dense_symmetric_eig",
    "eigenvalue_sum_mse",
    "equispaced_parameters",
    "estimate_profile",
    "fine_metric",
    "generate_snapshot_files",
    "hs_error",
    "inner",
    "j_mc",
    "j_mf",
    "jmf_plus",
    "lowrank_eig",
    "make_model_pair",
    "mass_matrix",
    "mf_mse",
    "mfpod_adaptive",
    "mfpod_fixed",
    "min_mse",
    "norm",
    "optimal_alpha",
    "orthonormalize",
    "pod",
    "pod_projection_error",
    "project",
    "prolong",
    "read_snapshots",
    "reference_matrix",
    "restrict",
    "run_study",
    "sample_parameters",
    "select_dim",
    "snapshot",
    "solve_adv_diff",
    "subspace_alignment",
    "usefulness",
    "validate_levels",
    "write_snapshots",
    "write_study",
]
