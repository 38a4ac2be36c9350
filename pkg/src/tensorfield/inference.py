"""Bayesian inference for the Cholesky working model.

The model places Gaussian processes on the Cholesky elements of each
subject's tensor field:

    sqrt(2) log t_ikk ~ GP(sqrt(2) X_i beta_kk, sigma_m^2 C)        k = 1..3
    t_ikl | tbar     ~ GP(X_i beta_kl, sigma_m^2 C(s,s') tbar(s) tbar(s'))

with C = K(.|Phi_u)^2, tbar_ikk(s) = exp(X_i . betahat_kk(s)) from per-voxel
OLS, held fixed for the whole chain. Coefficient surfaces carry GP(0,
K(.|Phi_beta), sigma_beta^2) priors; precisions are Gamma; log-range and
log-smoothness parameters are normal. Sampling is blocked Gibbs on the six
coefficient stacks and the two precisions, with random-walk Metropolis on the
four spatial log-parameters, everything through the Vecchia factorization so
one likelihood sweep costs O(n q^3) instead of O(n^3).

The engine is generic over a list of Gaussian response components, which is
how the univariate baseline model reuses it with a single component.
"""

import logging
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import gammaln

from . import kernels, spd
from .correlation import MaternParams
from .errors import (
    CholeskyFailure,
    DimensionMismatch,
    InvalidParams,
    NonFiniteLikelihood,
    RankDeficientDesign,
)
from .gp import LOG_2PI, as_generator, build_vecchia_plan
from .regression import COMP_TO_PACKED, COMPONENT_NAMES, DIAG, OFFDIAG, ROW_DIAG

log = logging.getLogger("tensorfield.inference")

# order of the Metropolis-updated spatial parameters
SPATIAL_NAMES = ("log_rho_u", "log_nu_u", "log_rho_beta", "log_nu_beta")


@dataclass(frozen=True)
class PriorSettings:
    """Hyperprior settings: normals on log spatial params, Gammas on precisions."""

    rho_mean: float = 0.0
    rho_sd: float = 1.0
    nu_mean: float = -1.0
    nu_sd: float = 1.0
    prec_shape: float = 0.01
    prec_rate: float = 0.01

    def __post_init__(self):
        if self.rho_sd <= 0 or self.nu_sd <= 0:
            raise InvalidParams("prior standard deviations must be positive")
        if self.prec_shape <= 0 or self.prec_rate <= 0:
            raise InvalidParams("Gamma prior shape and rate must be positive")


@dataclass(frozen=True)
class CdpModelSpec:
    """MCMC settings: Vecchia budget, chain lengths, priors, proposals, seed."""

    q: int = 10
    direction: str = "following"
    iters: int = 7000
    burnin: int = 2000
    thin: int = 1
    seed: int = 0
    priors: PriorSettings = dc_field(default_factory=PriorSettings)
    proposal_scale: float = 0.5
    target_accept: float = 0.4
    adapt: bool = True
    sample_rho_u: bool = True
    sample_nu_u: bool = True
    sample_rho_beta: bool = True
    sample_nu_beta: bool = True
    init_log_rho: float = 0.0
    init_log_nu: float = -1.0
    progress_every: int = 0

    def __post_init__(self):
        if self.q < 1:
            raise InvalidParams("q must be >= 1")
        if not (0 <= self.burnin < self.iters):
            raise InvalidParams("need 0 <= burnin < iters")
        if self.thin < 1:
            raise InvalidParams("thin must be >= 1")
        if not (0 < self.target_accept < 1):
            raise InvalidParams("target_accept must lie in (0, 1)")

    def active_spatial(self):
        flags = (self.sample_rho_u, self.sample_nu_u, self.sample_rho_beta, self.sample_nu_beta)
        return [i for i, on in enumerate(flags) if on]


@dataclass
class GaussianComponent:
    """One response process: values, mean multiplier, optional scale field."""

    name: str
    y: np.ndarray  # (N, n)
    mean_factor: float = 1.0
    scale: np.ndarray = None  # (N, n) strictly positive, or None


@dataclass
class McmcState:
    """Current parameter values of one chain."""

    beta: np.ndarray  # (C, p, n)
    prec_beta: float
    prec_m: float
    theta: np.ndarray  # (4,) = log rho_u, log nu_u, log rho_beta, log nu_beta

    def params_u(self):
        return MaternParams(float(np.exp(self.theta[0])), float(np.exp(self.theta[1])))

    def params_beta(self):
        return MaternParams(float(np.exp(self.theta[2])), float(np.exp(self.theta[3])))

    def copy(self):
        return McmcState(self.beta.copy(), self.prec_beta, self.prec_m, self.theta.copy())


@dataclass
class OlsScales:
    """Per-voxel OLS fits of the log diagonal Cholesky elements.

    tbar has shape (N, n, 3): subject, voxel, diagonal index k; beta_hat has
    shape (3, p, n).
    """

    tbar: np.ndarray
    beta_hat: np.ndarray


@dataclass
class McmcChain:
    """Stored posterior draws plus provenance."""

    beta: np.ndarray  # (T, C, p, n)
    prec_beta: np.ndarray  # (T,)
    prec_m: np.ndarray  # (T,)
    theta: np.ndarray  # (T, 4)
    log_post: np.ndarray  # (T,)
    accept_rates: dict
    seed: int
    spec: CdpModelSpec
    component_names: tuple
    domain: object
    design: np.ndarray

    @property
    def n_stored(self):
        return self.beta.shape[0]


def ols_scales(tensors, design):
    """Per-voxel OLS of log t_kk on the design; returns fitted scale fields.

    Raises RankDeficientDesign when the design has dependent columns and
    NotPositiveDefinite when some tensor has no Cholesky factor.
    """
    design = np.asarray(design, dtype=np.float64)
    tensors = np.asarray(tensors, dtype=np.float64)
    if tensors.ndim != 3 or tensors.shape[0] != design.shape[0]:
        raise DimensionMismatch("tensors must be (N, n, 6) matching the design rows")
    p = design.shape[1]
    if np.linalg.matrix_rank(design) < p:
        raise RankDeficientDesign("design matrix has linearly dependent columns")
    chol = spd.cholesky_lower(tensors)
    pinv = np.linalg.pinv(design)
    n = tensors.shape[1]
    beta_hat = np.empty((3, p, n))
    tbar = np.empty((tensors.shape[0], n, 3))
    for k, c in enumerate(DIAG):
        logt = np.log(chol[:, :, COMP_TO_PACKED[c]])
        beta_hat[k] = pinv @ logt
        tbar[:, :, k] = np.exp(design @ beta_hat[k])
    return OlsScales(tbar, beta_hat)


def build_cdp_components(tensors, scales):
    """Assemble the six Gaussian response components of the working model."""
    chol = spd.cholesky_lower(np.asarray(tensors, dtype=np.float64))
    comps = []
    for c in DIAG:
        y = np.sqrt(2.0) * np.log(chol[:, :, COMP_TO_PACKED[c]])
        comps.append(GaussianComponent("t" + COMPONENT_NAMES[c], y, np.sqrt(2.0), None))
    for c in OFFDIAG:
        y = chol[:, :, COMP_TO_PACKED[c]]
        scale = scales.tbar[:, :, ROW_DIAG[c]]
        comps.append(GaussianComponent("t" + COMPONENT_NAMES[c], y, 1.0, scale))
    return comps


# ---------------------------------------------------------------------------
# log-posterior pieces
# ---------------------------------------------------------------------------

def _data_loglik(state, comps, design, plan):
    """Vecchia log-likelihood of all components under the current state."""
    params_u = state.params_u()
    fac = plan.factors(params_u, squared=True)
    var_m = 1.0 / state.prec_m
    n = plan.n
    total = 0.0
    for c, comp in enumerate(comps):
        mean = comp.mean_factor * (design @ state.beta[c])
        if comp.scale is None:
            dev = comp.y - mean
            extra = 0.0
        else:
            dev = (comp.y - mean) / comp.scale
            extra = np.log(comp.scale).sum()
        dev = np.ascontiguousarray(dev)
        if plan.q == 0:
            quad = float((dev * dev @ (1.0 / fac.cond_var)).sum())
        else:
            quad = float(kernels.vecchia_quad(dev, fac.coef, plan.neighbors, fac.cond_var).sum())
        rows = dev.shape[0]
        total += (
            -0.5 * rows * (n * (LOG_2PI + np.log(var_m)) + fac.logdet)
            - 0.5 * quad / var_m
            - extra
        )
    return total


def _beta_prior_loglik(state, plan):
    """GP prior log density of all coefficient surfaces."""
    params_b = state.params_beta()
    fac = plan.factors(params_b, squared=False)
    var_b = 1.0 / state.prec_beta
    n = plan.n
    flat = np.ascontiguousarray(state.beta.reshape(-1, n))
    if plan.q == 0:
        quad = float((flat * flat @ (1.0 / fac.cond_var)).sum())
    else:
        quad = float(kernels.vecchia_quad(flat, fac.coef, plan.neighbors, fac.cond_var).sum())
    rows = flat.shape[0]
    return -0.5 * rows * (n * (LOG_2PI + np.log(var_b)) + fac.logdet) - 0.5 * quad / var_b


def _gamma_logpdf(x, shape, rate):
    return shape * np.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x


def _normal_logpdf(x, mean, sd):
    return -0.5 * (LOG_2PI + 2.0 * np.log(sd) + ((x - mean) / sd) ** 2)


def _hyper_logprior(state, spec):
    pri = spec.priors
    lp = _normal_logpdf(state.theta[0], pri.rho_mean, pri.rho_sd)
    lp += _normal_logpdf(state.theta[1], pri.nu_mean, pri.nu_sd)
    lp += _normal_logpdf(state.theta[2], pri.rho_mean, pri.rho_sd)
    lp += _normal_logpdf(state.theta[3], pri.nu_mean, pri.nu_sd)
    lp += _gamma_logpdf(state.prec_beta, pri.prec_shape, pri.prec_rate)
    lp += _gamma_logpdf(state.prec_m, pri.prec_shape, pri.prec_rate)
    return float(lp)


def log_posterior(state, comps, design, plan, spec):
    """Full unnormalized log posterior; raises NonFiniteLikelihood on NaN/inf."""
    total = (
        _data_loglik(state, comps, design, plan)
        + _beta_prior_loglik(state, plan)
        + _hyper_logprior(state, spec)
    )
    if not np.isfinite(total):
        raise NonFiniteLikelihood(f"log posterior is {total}")
    return float(total)


# ---------------------------------------------------------------------------
# Gibbs updates
# ---------------------------------------------------------------------------

def gibbs_update_beta(state, comps, design, plan, spec, rng):
    """Draw each coefficient block from its Gaussian full conditional.

    Blocks are the per-component stacks (all covariates and voxels jointly);
    prior precision prec_beta * (I_p kron Q_beta) plus likelihood precision
    mean_factor^2 * prec_m * sum_i x_i x_i' kron (G_i Q_u G_i) with
    G_i = diag(1/scale_i). Mutates state.beta in place and returns it.
    """
    design = np.asarray(design, dtype=np.float64)
    p = design.shape[1]
    n = plan.n
    q_u = plan.precision(state.params_u(), squared=True)
    q_b = plan.precision(state.params_beta(), squared=False)
    xtx = design.T @ design
    prec_m = state.prec_m
    prec_b = state.prec_beta
    for c, comp in enumerate(comps):
        a = comp.mean_factor
        if comp.scale is None:
            blocks = (a * a * prec_m) * np.einsum("pq,ab->pqab", xtx, q_u)
            v = comp.y @ q_u.T
            b = (a * prec_m) * np.einsum("ip,in->pn", design, v)
        else:
            g = 1.0 / comp.scale
            w = np.einsum("ip,iq,ia,ib->pqab", design, design, g, g, optimize=True)
            blocks = (a * a * prec_m) * (w * q_u)
            v = (g * comp.y) @ q_u.T
            b = (a * prec_m) * np.einsum("ip,in->pn", design, g * v)
        arr = np.ascontiguousarray(np.transpose(blocks, (0, 2, 1, 3)))
        for j in range(p):
            arr[j, :, j, :] += prec_b * q_b
        mat = arr.reshape(p * n, p * n)
        try:
            cho = cho_factor(mat, lower=True)
        except np.linalg.LinAlgError as exc:
            raise CholeskyFailure(f"full-conditional precision not PD: {exc}") from exc
        mu = cho_solve(cho, b.reshape(p * n))
        z = rng.standard_normal(p * n)
        draw = mu + solve_triangular(cho[0], z, lower=True, trans="T")
        state.beta[c] = draw.reshape(p, n)
    return state.beta


def gibbs_update_precisions(state, comps, design, plan, spec, rng):
    """Conjugate Gamma draws for (prec_beta, prec_m); mutates state.

    Shapes are prior_shape + count/2 with count the total residual (resp.
    coefficient) dimension; rates are prior_rate + quadratic_form/2.
    """
    pri = spec.priors
    n = plan.n
    fac_b = plan.factors(state.params_beta(), squared=False)
    flat = np.ascontiguousarray(state.beta.reshape(-1, n))
    if plan.q == 0:
        quad_b = float((flat * flat @ (1.0 / fac_b.cond_var)).sum())
    else:
        quad_b = float(
            kernels.vecchia_quad(flat, fac_b.coef, plan.neighbors, fac_b.cond_var).sum()
        )
    count_b = flat.shape[0] * n
    state.prec_beta = float(
        rng.gamma(pri.prec_shape + 0.5 * count_b, 1.0 / (pri.prec_rate + 0.5 * quad_b))
    )
    fac_u = plan.factors(state.params_u(), squared=True)
    quad_m = 0.0
    count_m = 0
    for c, comp in enumerate(comps):
        mean = comp.mean_factor * (design @ state.beta[c])
        dev = comp.y - mean
        if comp.scale is not None:
            dev = dev / comp.scale
        dev = np.ascontiguousarray(dev)
        if plan.q == 0:
            quad_m += float((dev * dev @ (1.0 / fac_u.cond_var)).sum())
        else:
            quad_m += float(
                kernels.vecchia_quad(dev, fac_u.coef, plan.neighbors, fac_u.cond_var).sum()
            )
        count_m += dev.shape[0] * n
    state.prec_m = float(
        rng.gamma(pri.prec_shape + 0.5 * count_m, 1.0 / (pri.prec_rate + 0.5 * quad_m))
    )
    return state.prec_beta, state.prec_m


def mh_update_spatial(state, comps, design, plan, spec, rng, proposal_scales):
    """One-at-a-time random-walk Metropolis on the active spatial log-params.

    proposal_scales is a length-4 array of RW standard deviations. Returns a
    list of (param_index, acceptance_probability, accepted) tuples in update
    order; mutates state.theta.
    """
    results = []
    pri = spec.priors
    for idx in spec.active_spatial():
        if idx < 2:
            current_ll = _data_loglik(state, comps, design, plan)
        else:
            current_ll = _beta_prior_loglik(state, plan)
        mean, sd = (pri.rho_mean, pri.rho_sd) if idx % 2 == 0 else (pri.nu_mean, pri.nu_sd)
        current_lp = current_ll + _normal_logpdf(state.theta[idx], mean, sd)
        old = state.theta[idx]
        state.theta[idx] = old + proposal_scales[idx] * rng.standard_normal()
        try:
            if idx < 2:
                prop_ll = _data_loglik(state, comps, design, plan)
            else:
                prop_ll = _beta_prior_loglik(state, plan)
            prop_lp = prop_ll + _normal_logpdf(state.theta[idx], mean, sd)
            delta = prop_lp - current_lp
        except (FloatingPointError, np.linalg.LinAlgError, InvalidParams, CholeskyFailure):
            # untenable proposal (overflowing parameters, singular factor): reject
            delta = -np.inf
        if not np.isfinite(delta):
            delta = -np.inf
        accept_prob = min(1.0, float(np.exp(min(delta, 0.0))))
        accepted = np.log(rng.uniform()) < delta
        if not accepted:
            state.theta[idx] = old
        results.append((idx, accept_prob, bool(accepted)))
    return results


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------

def _initial_state(comps, design, plan, spec):
    p = np.asarray(design).shape[1]
    n = plan.n
    pinv = np.linalg.pinv(np.asarray(design, dtype=np.float64))
    beta = np.zeros((len(comps), p, n))
    for c, comp in enumerate(comps):
        if comp.scale is None:
            beta[c] = pinv @ (comp.y / comp.mean_factor)
    theta = np.array(
        [spec.init_log_rho, spec.init_log_nu, spec.init_log_rho, spec.init_log_nu]
    )
    return McmcState(beta, 1.0, 1.0, theta)


def run_mcmc(comps, design, domain, spec, component_names=None):
    """Generic MCMC driver over a list of Gaussian components.

    Returns an McmcChain with post-burn-in, thinned draws. The log posterior
    is evaluated at every stored iteration and must be finite.
    """
    design = np.asarray(design, dtype=np.float64)
    rng = as_generator(spec.seed)
    n = domain.n
    q_eff = min(spec.q, n - 1)
    plan = build_vecchia_plan(domain, q_eff, spec.direction)
    state = _initial_state(comps, design, plan, spec)
    names = tuple(component_names or [comp.name for comp in comps])
    n_store = (spec.iters - spec.burnin + spec.thin - 1) // spec.thin
    p = design.shape[1]
    beta_out = np.empty((n_store, len(comps), p, n))
    prec_b_out = np.empty(n_store)
    prec_m_out = np.empty(n_store)
    theta_out = np.empty((n_store, 4))
    logpost_out = np.empty(n_store)
    prop_scales = np.full(4, spec.proposal_scale)
    attempts = np.zeros(4)
    accepts = np.zeros(4)
    stored = 0
    for it in range(spec.iters):
        gibbs_update_beta(state, comps, design, plan, spec, rng)
        gibbs_update_precisions(state, comps, design, plan, spec, rng)
        results = mh_update_spatial(state, comps, design, plan, spec, rng, prop_scales)
        for idx, acc_prob, accepted in results:
            attempts[idx] += 1
            accepts[idx] += accepted
            if spec.adapt and it < spec.burnin:
                step = (attempts[idx]) ** -0.6
                prop_scales[idx] = float(
                    np.clip(
                        prop_scales[idx] * np.exp(step * (acc_prob - spec.target_accept)),
                        1e-4,
                        20.0,
                    )
                )
        if it >= spec.burnin and (it - spec.burnin) % spec.thin == 0:
            beta_out[stored] = state.beta
            prec_b_out[stored] = state.prec_beta
            prec_m_out[stored] = state.prec_m
            theta_out[stored] = state.theta
            logpost_out[stored] = log_posterior(state, comps, design, plan, spec)
            stored += 1
        if spec.progress_every and (it + 1) % spec.progress_every == 0:
            with np.errstate(invalid="ignore"):
                rates = np.divide(accepts, np.maximum(attempts, 1))
            log.info(
                "iter %d/%d logpost=%.2f accept=%s",
                it + 1,
                spec.iters,
                log_posterior(state, comps, design, plan, spec),
                np.round(rates, 3).tolist(),
            )
    rates = {
        SPATIAL_NAMES[i]: (accepts[i] / attempts[i] if attempts[i] else 0.0)
        for i in range(4)
    }
    return McmcChain(
        beta_out[:stored],
        prec_b_out[:stored],
        prec_m_out[:stored],
        theta_out[:stored],
        logpost_out[:stored],
        rates,
        spec.seed,
        spec,
        names,
        domain,
        design,
    )


def fit(tensors, design, domain, spec):
    """Fit the six-component Cholesky working model; returns an McmcChain.

    Runs ols_scales once, builds the component responses, then iterates the
    three update kinds for spec.iters iterations.
    """
    scales = ols_scales(tensors, design)
    comps = build_cdp_components(tensors, scales)
    return run_mcmc(comps, design, domain, spec)
