"""Mean model and synthetic-data generation.

The mean matrix at voxel s for subject i is Sigma_i(s) = L_i(s) L_i(s)' with

    log l_ikk(s) = X_i . beta_kk(s)      (diagonal, log link)
    l_ikl(s)     = X_i . beta_kl(s)      (off-diagonal, identity link)

Coefficient surfaces are stacked in the component order
(1,1), (2,2), (3,3), (2,1), (3,1), (3,2) and carry independent mean-zero GP
priors. The synthetic scenario places a drug effect on the diagonal
components inside a centered square region only, and an age effect on all
six components.
"""

from dataclasses import dataclass

import numpy as np

from . import spd
from .correlation import MaternParams
from .errors import DimensionMismatch, InvalidParams
from .gp import GridDomain, as_generator, simulate_gp
from .swp import SwpParams, simulate_swp

#: component order (k, l) used across the package
COMPONENTS = ((1, 1), (2, 2), (3, 3), (2, 1), (3, 1), (3, 2))
COMPONENT_NAMES = ("11", "22", "33", "21", "31", "32")
DIAG = (0, 1, 2)
OFFDIAG = (3, 4, 5)
#: component index -> position in the packed-6 lower-triangle layout
COMP_TO_PACKED = (0, 2, 5, 1, 3, 4)
#: off-diagonal component -> diagonal component of its ROW index k
#: (2,1) scales by t_22, (3,1) and (3,2) scale by t_33
ROW_DIAG = {3: 1, 4: 2, 5: 2}


@dataclass
class CoefficientField:
    """Six stacks of coefficient surfaces, one per Cholesky component.

    values has shape (6, p, n): component, covariate, voxel.
    """

    values: np.ndarray
    domain: GridDomain

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or self.values.shape[0] != 6:
            raise DimensionMismatch(f"values must be (6, p, n), got {self.values.shape}")
        if self.values.shape[2] != self.domain.n:
            raise DimensionMismatch("voxel axis does not match domain")

    @property
    def n_covariates(self):
        return self.values.shape[1]

    def surface(self, comp, covariate):
        return self.values[comp, covariate]

    @classmethod
    def zeros(cls, domain, n_covariates):
        return cls(np.zeros((6, n_covariates, domain.n)), domain)


@dataclass(frozen=True)
class ScenarioConfig:
    """Synthetic-study settings: grid, subjects, effects, kernels, dof."""

    width: int = 20
    height: int = 20
    spacing: float = 1.0
    n_subjects: int = 10
    m: int = 50
    sigma_beta: float = 0.1
    rho_u: float = 2.0
    nu_u: float = 0.5
    rho_beta: float = 2.0
    nu_beta: float = 0.5
    drug_effect: float = 0.5
    age_effect: float = 0.25
    region_size: int = 4

    def __post_init__(self):
        if self.n_subjects < 2:
            raise InvalidParams("need at least 2 subjects")
        if self.sigma_beta < 0:
            raise InvalidParams("sigma_beta must be nonnegative")
        if self.region_size > min(self.width, self.height):
            raise InvalidParams("region does not fit inside the grid")

    @property
    def domain(self):
        return GridDomain(self.width, self.height, self.spacing)

    @property
    def kernel_u(self):
        return MaternParams(self.rho_u, self.nu_u)

    @property
    def kernel_beta(self):
        return MaternParams(self.rho_beta, self.nu_beta)


def region_mask(domain, size=4):
    """Boolean mask of the axis-centered size x size block of the grid."""
    x0 = (domain.width - size) // 2
    y0 = (domain.height - size) // 2
    g = domain.grid_indices()
    return (
        (g[:, 0] >= x0)
        & (g[:, 0] < x0 + size)
        & (g[:, 1] >= y0)
        & (g[:, 1] < y0 + size)
    )


def table_means(scenario):
    """Mean coefficient surfaces of the synthetic scenario, shape (6, 3, n).

    Covariate order: intercept, drug, age. Intercept mean 0 everywhere; drug
    mean = drug_effect on diagonal components inside the centered region and
    0 elsewhere (all off-diagonal drug means 0); age mean = age_effect on all
    six components everywhere.
    """
    domain = scenario.domain
    means = np.zeros((6, 3, domain.n))
    mask = region_mask(domain, scenario.region_size)
    for c in DIAG:
        means[c, 1, mask] = scenario.drug_effect
    means[:, 2, :] = scenario.age_effect
    return means


def sample_coefficients(scenario, seed):
    """Draw coefficient surfaces: Table means + GP(0, K_beta, sigma_beta^2).

    All 6 x 3 surfaces are independent draws sharing one spatial kernel.
    sigma_beta = 0 returns the mean surfaces exactly.
    """
    domain = scenario.domain
    means = table_means(scenario)
    draws = simulate_gp(
        domain,
        0.0,
        scenario.kernel_beta,
        scenario.sigma_beta**2,
        seed,
        size=18,
    ).reshape(6, 3, domain.n)
    return CoefficientField(means + draws, domain)


def generate_covariates(n_subjects, seed):
    """Design matrix (N, 3): intercept, deterministic drug split, half-normal age.

    The first ceil(N/2) subjects are drug users; age is |N(0, 1)|.
    """
    rng = as_generator(seed)
    x = np.ones((n_subjects, 3))
    n_users = (n_subjects + 1) // 2
    x[:, 1] = 0.0
    x[:n_users, 1] = 1.0
    x[:, 2] = np.abs(rng.standard_normal(n_subjects))
    return x


def mean_cholesky_field(design, coeffs):
    """Mean Cholesky factors for every subject and voxel, packed (N, n, 6).

    Diagonal components are exp(X.beta_kk); off-diagonals are X.beta_kl.
    """
    design = np.asarray(design, dtype=np.float64)
    if design.ndim != 2 or design.shape[1] != coeffs.n_covariates:
        raise DimensionMismatch(
            f"design {design.shape} does not match {coeffs.n_covariates} covariates"
        )
    eta = np.einsum("ip,cpn->cin", design, coeffs.values)
    out = np.empty((design.shape[0], coeffs.domain.n, 6))
    for c in range(6):
        vals = np.exp(eta[c]) if c in DIAG else eta[c]
        out[:, :, COMP_TO_PACKED[c]] = vals
    return out


def mean_cholesky(x_row, coeffs, voxel):
    """Packed lower-triangular mean factor for one subject at one voxel."""
    x_row = np.asarray(x_row, dtype=np.float64).reshape(1, -1)
    full = mean_cholesky_field(x_row, coeffs)
    return full[0, voxel]


@dataclass
class GeneratedDataset:
    """Synthetic tensors plus everything needed to score an analysis."""

    tensors: np.ndarray  # (N, n, 6)
    design: np.ndarray  # (N, 3)
    coeffs: CoefficientField
    scenario: ScenarioConfig
    model: str
    seed: int


def generate_dataset(scenario, model, seed, sigma_m_sq=None):
    """Generate a synthetic tensor dataset under either generative route.

    model="swp":  A_i(s) = L_i(s) U_i(s) L_i(s)' with U_i ~ SWP(m, K_u, I);
    model="cdp":  Cholesky elements drawn from the working-model GPs: the
        diagonal draws g ~ GP(sqrt(2) X beta_kk, C, sigma_m^2) with
        t_kk = exp(g / sqrt(2)), and the off-diagonals
        t_kl ~ GP(X beta_kl, sigma_m^2 C(s,s') tbar(s) tbar(s')) where the
        scale field tbar uses the TRUE diagonal coefficients and the row
        index k of the element, and C = K_u^2.

    sigma_m_sq defaults to 1/m, matching the working-model link.
    """
    if model not in ("swp", "cdp"):
        raise InvalidParams(f"model must be 'swp' or 'cdp', got {model!r}")
    rng = as_generator(seed)
    domain = scenario.domain
    n_sub = scenario.n_subjects
    coeffs = sample_coefficients(scenario, rng)
    design = generate_covariates(n_sub, rng)
    lfield = mean_cholesky_field(design, coeffs)  # (N, n, 6)
    if sigma_m_sq is None:
        sigma_m_sq = 1.0 / scenario.m
    if model == "swp":
        params = SwpParams(scenario.m, scenario.kernel_u)
        u = simulate_swp(domain, params, rng, size=n_sub)
        lm = spd.to_matrix(lfield)
        lm = np.tril(lm)
        um = spd.to_matrix(u)
        tensors = spd.from_matrix(lm @ um @ np.swapaxes(lm, -1, -2))
    else:
        resid = simulate_gp(
            domain, 0.0, scenario.kernel_u, sigma_m_sq, rng, squared=True, size=n_sub * 6
        ).reshape(6, n_sub, domain.n)
        t6 = np.empty((n_sub, domain.n, 6))
        for c in DIAG:
            logt = np.log(lfield[:, :, COMP_TO_PACKED[c]])
            g = np.sqrt(2.0) * logt + resid[c]
            t6[:, :, COMP_TO_PACKED[c]] = np.exp(g / np.sqrt(2.0))
        for c in OFFDIAG:
            # scale field from TRUE diagonal coefficients, not the noisy draw
            tbar = lfield[:, :, COMP_TO_PACKED[ROW_DIAG[c]]]
            t6[:, :, COMP_TO_PACKED[c]] = (
                lfield[:, :, COMP_TO_PACKED[c]] + tbar * resid[c]
            )
        tensors = spd.compose(t6)
    seed_val = int(seed) if isinstance(seed, (int, np.integer)) else None
    return GeneratedDataset(tensors, design, coeffs, scenario, model, seed_val)
