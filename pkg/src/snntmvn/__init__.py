"""Linear-complexity sampling of high-dimensional truncated multivariate
normals via sequential nearest-neighbor conditioning, with posterior
sampling for partially censored Gaussian processes."""

from .censored import (
    CensoredDataset,
    build_censored_problem,
    krige_predict,
    left_censor,
    sample_censored_posterior,
)
from .engine import (
    SampleEnsemble,
    SnnPlan,
    TruncationProblem,
    marginal_keep_first,
    precompute,
    sample,
)
from .gaussian import (
    ConditionalFactors,
    FactorizationError,
    cholesky_with_jitter,
    conditional_factors,
    log_interval_prob,
    sample_truncated_univariate,
    std_normal_cdf,
    std_normal_quantile,
)
from .geometry import (
    KnnIndex,
    NeighborPlan,
    Ordering,
    build_neighbor_plan,
    knn_query,
    make_ordering,
    order_coordinate,
    order_maximin,
    order_random,
)
from .kernels import (
    CovarianceModel,
    KernelCovariance,
    LocationSet,
    MatrixCovariance,
    covariance_block,
    cross_covariance,
    distance,
    kernel_value,
)
from .lowdim import (
    DrawStats,
    LowDimTarget,
    OracleInapplicableError,
    SamplerPolicy,
    sample_gibbs_oracle,
    sample_lowdim_tmvn,
    sample_rejection_oracle,
)
from .rng import substream
from .scoring import ScoreReport, crps_ensemble, ks_statistic, qq_data, rmse, score_ensemble

__version__ = "0.1.0"

__all__ = [
    "CensoredDataset",
    "ConditionalFactors",
    "CovarianceModel",
    "DrawStats",
    "FactorizationError",
    "KernelCovariance",
    "KnnIndex",
    "LocationSet",
    "LowDimTarget",
    "MatrixCovariance",
    "NeighborPlan",
    "OracleInapplicableError",
    "Ordering",
    "SampleEnsemble",
    "SamplerPolicy",
    "ScoreReport",
    "SnnPlan",
    "TruncationProblem",
    "build_censored_problem",
    "build_neighbor_plan",
    "cholesky_with_jitter",
    "conditional_factors",
    "covariance_block",
    "crps_ensemble",
    "cross_covariance",
    "distance",
    "kernel_value",
    "knn_query",
    "krige_predict",
    "ks_statistic",
    "left_censor",
    "log_interval_prob",
    "make_ordering",
    "marginal_keep_first",
    "order_coordinate",
    "order_maximin",
    "order_random",
    "precompute",
    "qq_data",
    "rmse",
    "sample",
    "sample_censored_posterior",
    "sample_gibbs_oracle",
    "sample_lowdim_tmvn",
    "sample_rejection_oracle",
    "sample_truncated_univariate",
    "score_ensemble",
    "std_normal_cdf",
    "std_normal_quantile",
    "substream",
    "score_ensemble",
]
