"""Vecchia-approximated Gaussian-process likelihoods via batched small-matrix computations.

The library evaluates the ordered-conditional (Vecchia) approximation of
the Gaussian log-likelihood as a batch of small Cholesky factorizations
over a strided contiguous workspace, alongside a dense exact oracle,
KL-divergence accuracy sweeps, maximum-likelihood fitting, and kriging.
"""

from .batchla import (
    BatchScalars,
    StridedMatrixBatch,
    StridedVectorBatch,
    batch_dot,
    batch_potrf,
    batch_trsv,
    half_log_det,
)
from .errors import (
    EstimationError,
    LikelihoodEvaluationError,
    NonPositiveDefiniteError,
    SingularTriangularError,
    VecchiaGPError,
)
from .exact import KLReport, exact_loglik, kl_gaussian, kl_vecchia, simulate_grf
from .fit import (
    FitConfig,
    FitResult,
    PredictionReport,
    krige_predict,
    mle_estimate,
    nelder_mead_max,
    ols_detrend,
    sqrt_transform,
)
from .geo import (
    EARTH_RADIUS_KM,
    Dataset,
    Euclidean,
    GreatCircle,
    NeighborTable,
    Permutation,
    euclidean_distance,
    great_circle_distance,
    morton_ordering,
    nearest_neighbors,
    random_ordering,
)
from .kernels import (
    EFFECTIVE_RANGE_BETA,
    KernelParams,
    KernelSpec,
    bessel_kv,
    beta_from_effective_range,
    cov_matrix,
    matern_cov,
    powexp_cov,
)
from .parallel import get_num_threads, set_num_threads
from .vecchia import (
    BatchWorkspace,
    LogLikResult,
    VecchiaPlan,
    assemble,
    flop_count,
    make_plan,
    vecchia_loglik,
)

__version__ = "0.1.0"

__all__ = [
    "BatchScalars",
    "BatchWorkspace",
    "Dataset",
    "EARTH_RADIUS_KM",
    "EFFECTIVE_RANGE_BETA",
    "EstimationError",
    "Euclidean",
    "FitConfig",
    "FitResult",
    "GreatCircle",
    "KLReport",
    "KernelParams",
    "KernelSpec",
    "LikelihoodEvaluationError",
    "LogLikResult",
    "NeighborTable",
    "NonPositiveDefiniteError",
    "Permutation",
    "PredictionReport",
    "SingularTriangularError",
    "StridedMatrixBatch",
    "StridedVectorBatch",
    "VecchiaGPError",
    "VecchiaPlan",
    "assemble",
    "batch_dot",
    "batch_potrf",
    "batch_trsv",
    "bessel_kv",
    "beta_from_effective_range",
    "cov_matrix",
    "euclidean_distance",
    "exact_loglik",
    "flop_count",
    "get_num_threads",
    "great_circle_distance",
    "half_log_det",
    "kl_gaussian",
    "kl_vecchia",
    "krige_predict",
    "make_plan",
    "matern_cov",
    "mle_estimate",
    "morton_ordering",
    "nearest_neighbors",
    "nelder_mead_max",
    "ols_detrend",
    "powexp_cov",
    "random_ordering",
    "simulate_grf",
    "sqrt_transform",
    "vecchia_loglik",
]
