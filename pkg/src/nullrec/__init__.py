"""Kernel regression with null-recurrent regressors: exact regeneration
algebra on finite chains, split-chain simulation, the local estimator, and
replicated normality experiments."""

__version__ = "0.1.0"

from .algebra import (
    BlockMomentRequest,
    FiniteMarkovModel,
    InvariantMeasure,
    KernelMatrix,
    block_mean_variance,
    block_moment,
    compound_block_moment,
    embedded_transition,
    fundamental_kernel,
    fundamental_kernel_series,
    generalized_autocov,
    invariant_measure,
    sigma2_from_series,
    taboo_kernel,
    validate_atom,
    weighted_block_moment,
)
from .estimator import (
    EPANECHNIKOV,
    EstimateReport,
    Kernel,
    cv_constant,
    gaussian_truncated,
    local_bandwidth,
    modal_value,
    nw_estimate,
    studentized,
)
from .montecarlo import (
    CltExperimentResult,
    CltProtocol,
    derive_seed,
    ks_normal,
    run_clt,
    trend_report,
)
from .processes import (
    GeneratedPath,
    ProcessSpec,
    Transfer,
    empirical_corr_decay,
    generate,
    linear,
    theoretical_cross_moment,
)
from .splitting import (
    AtomSpecContinuous,
    BlockDecomposition,
    SplitTrajectory,
    block_sums,
    gaussian_rw_atom,
    occupation_count,
    regeneration_stats,
    simulate_split,
)
