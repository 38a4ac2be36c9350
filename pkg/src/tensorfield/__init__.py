"""Geostatistical simulation and Bayesian inference for 3x3 SPD matrix fields.

The library simulates spatially dependent fields of symmetric positive
definite matrices (sums of outer products of Gaussian process draws, giving
Wishart marginals), fits a Cholesky-element Gaussian working model by
Vecchia-approximated MCMC, and estimates treatment effects on fractional
anisotropy. Hot kernels run through numba when available; set
TENSORFIELD_NUMBA=0 to force the pure-numpy implementations.
"""

from .config import PACKAGE_VERSION as __version__
from .correlation import MaternParams, corr_matrix, correlation, matern
from .errors import (
    CholeskyFailure,
    DegenerateFA,
    DegenerateTensor,
    DimensionMismatch,
    DuplicateLocations,
    InvalidDof,
    InvalidParams,
    InvalidQ,
    MalformedData,
    MissingTruth,
    NonFiniteLikelihood,
    NonpositiveScale,
    NotPositiveDefinite,
    PlanMismatch,
    RankDeficientDesign,
    SingularArgument,
    TensorFieldError,
)
from .estimators import (
    BaselineFit,
    DeltaFaResult,
    PosteriorSummary,
    ScoreReport,
    delta_fa,
    fit_univariate_baseline,
    score_chain,
)
from .gp import (
    GridDomain,
    VecchiaPlan,
    build_vecchia_plan,
    dense_scaled_loglik,
    exact_loglik,
    simulate_gp,
    vecchia_loglik,
    vecchia_scaled_loglik,
    vecchia_simulate,
)
from .inference import (
    CdpModelSpec,
    GaussianComponent,
    McmcChain,
    McmcState,
    OlsScales,
    PriorSettings,
    build_cdp_components,
    fit,
    gibbs_update_beta,
    gibbs_update_precisions,
    log_posterior,
    mh_update_spatial,
    ols_scales,
    run_mcmc,
)
from .regression import (
    CoefficientField,
    GeneratedDataset,
    ScenarioConfig,
    generate_covariates,
    generate_dataset,
    mean_cholesky,
    mean_cholesky_field,
    region_mask,
    sample_coefficients,
)
from .spd import (
    cholesky_lower,
    compose,
    eigenvalues,
    fractional_anisotropy,
    frobenius_sq_diff,
    from_matrix,
    is_spd,
    to_matrix,
)
from .swp import (
    SwpParams,
    VariogramTable,
    characteristic_function,
    gamma_factor,
    mc_characteristic_function,
    oracle_diag_marginal,
    oracle_offdiag_conditional,
    simulate_swp,
    variogram_empirical,
    variogram_theoretical,
    wishart_cf_single_site,
)
from .validate import SUITES, run_suite

__all__ = [name for name in dir() if not name.startswith("_")]
