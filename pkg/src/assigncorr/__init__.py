"""Assignment correlation: how the choice of randomization design affects the
spread of the difference-in-means MSE across designs."""

__version__ = "0.1.0"

from .assign import (
    AssignmentVector,
    Design,
    UniquenessHistogram,
    Violation,
    enumerate_all,
    enumerate_half,
    mirror,
    uniqueness,
    uniqueness_histogram,
    validate_design,
)
from .correlation import (
    PhiEstimate,
    RiskReport,
    block_phi_analytic,
    phi_complete,
    phi_exact,
    phi_monte_carlo,
    psi,
    relative_sd_increase,
    risk_report,
    var_mse_large_h,
    var_mse_theorem4,
)
from .errors import (
    AssignCorrError,
    DesignTooSmall,
    InvalidArgument,
    InvalidDesign,
    NoNonMirrorPairs,
    ParseError,
    SingularCovariance,
    TooLarge,
)
from .estimators import PotentialOutcomes, complete_randomization_mse, design_mse, diff_in_means, sate
from .generators import (
    BlockSpec,
    CovariateMatrix,
    MahalanobisBalance,
    RerandSpec,
    adaptive_pa,
    block_enumerate,
    block_sampler,
    mahalanobis,
    pair_switch,
    ps_design_sampler,
    rerandomization_sampler,
    sample_covariates,
)
from .oracle import DesignFamily, brute_variance_mse, enumerate_designs, verify_theorems
from .sampling import CompleteSampler, DesignSampler, stream_rng
