"""Posterior summaries, chain scoring, and treatment-effect estimation.

Implements the outcome-regression estimator for the fractional-anisotropy
contrast: per posterior draw, each subject's expected tensor is composed from
the fitted coefficient surfaces with the drug covariate toggled on and off,
and the FA difference is averaged over subjects. Also provides the
univariate logit-FA baseline model, which reuses the generic MCMC engine
with a single response process.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from . import kernels, spd
from .errors import DegenerateFA, DimensionMismatch, InvalidParams, MissingTruth
from .inference import GaussianComponent, run_mcmc
from .regression import CoefficientField, mean_cholesky_field

CLAMP_LO = 1e-6
CLAMP_HI = 1.0 - 1e-6


@dataclass
class PosteriorSummary:
    """Elementwise posterior summaries of a draw array."""

    mean: np.ndarray
    sd: np.ndarray
    z: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def from_draws(cls, draws):
        """Summarize draws along axis 0: mean, sd, z = mean/sd, 2.5%/97.5%."""
        draws = np.asarray(draws, dtype=np.float64)
        mean = draws.mean(axis=0)
        sd = draws.std(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(sd > 0, mean / np.where(sd > 0, sd, 1.0), 0.0)
        lo = np.quantile(draws, 0.025, axis=0)
        hi = np.quantile(draws, 0.975, axis=0)
        return cls(mean, sd, z, lo, hi)


@dataclass
class ScoreReport:
    """MAD / 95% coverage / MCSD per component group and overall.

    Metrics follow the usual chain-scoring definitions: MAD is the absolute
    error of the posterior mean, MCSD the root mean squared deviation of the
    draws around their mean, coverage the fraction of parameters whose truth
    falls inside the equal-tailed 95% interval. Each is averaged over
    covariates and voxels within a component.
    """

    components: dict
    overall: dict

    def rows(self):
        """Yield (group, mad, coverage, mcsd) rows, overall last."""
        for name, m in self.components.items():
            yield (name, m["mad"], m["coverage"], m["mcsd"])
        yield ("overall", self.overall["mad"], self.overall["coverage"], self.overall["mcsd"])


def score_chain(chain, truth):
    """Score posterior coefficient draws against the generating truth.

    truth is a CoefficientField or an array broadcastable to the chain's
    (components, covariates, voxels) block. Raises MissingTruth when shapes
    do not cover the scored parameters.
    """
    if isinstance(truth, CoefficientField):
        truth = truth.values
    truth = np.asarray(truth, dtype=np.float64)
    draws = chain.beta
    if truth.shape != draws.shape[1:]:
        raise MissingTruth(
            f"truth shape {truth.shape} does not cover chain block {draws.shape[1:]}"
        )
    post_mean = draws.mean(axis=0)
    per_sd = np.sqrt(np.mean((draws - post_mean) ** 2, axis=0))
    lo = np.quantile(draws, 0.025, axis=0)
    hi = np.quantile(draws, 0.975, axis=0)
    covered = (lo <= truth) & (truth <= hi)
    abs_err = np.abs(post_mean - truth)
    components = {}
    for c, name in enumerate(chain.component_names):
        components[name] = {
            "mad": float(abs_err[c].mean()),
            "coverage": float(covered[c].mean()),
            "mcsd": float(per_sd[c].mean()),
        }
    overall = {
        "mad": float(abs_err.mean()),
        "coverage": float(covered.mean()),
        "mcsd": float(per_sd.mean()),
    }
    return ScoreReport(components, overall)


@dataclass
class DeltaFaResult:
    """Per-draw, per-voxel samples of the FA treatment contrast."""

    samples: np.ndarray  # (T, n)

    def summary(self):
        return PosteriorSummary.from_draws(self.samples)


def _toggled_designs(design, drug_column):
    design = np.asarray(design, dtype=np.float64)
    col = design[:, drug_column]
    if not np.all(np.isin(col, (0.0, 1.0))):
        raise InvalidParams("drug column must be binary 0/1")
    x1 = design.copy()
    x0 = design.copy()
    x1[:, drug_column] = 1.0
    x0[:, drug_column] = 0.0
    return x0, x1


def _fa_of_mean_tensor(x, coeffs):
    """FA of the expected tensor L(x) L(x)' for each subject and voxel."""
    lfield = mean_cholesky_field(x, coeffs)
    a = spd.compose(lfield)
    return spd.fractional_anisotropy(a)


def delta_fa(chain, design, drug_column):
    """Outcome-regression FA contrast from posterior coefficient draws.

    Per draw and voxel: the average over subjects of
    FA(mean tensor | drug=1) - FA(mean tensor | drug=0), all other covariates
    held at the subject's observed values.
    """
    x0, x1 = _toggled_designs(design, drug_column)
    draws = chain.beta
    n = draws.shape[3]
    out = np.empty((draws.shape[0], n))
    for t in range(draws.shape[0]):
        cf = CoefficientField(draws[t], chain.domain)
        fa1 = _fa_of_mean_tensor(x1, cf)
        fa0 = _fa_of_mean_tensor(x0, cf)
        out[t] = (fa1 - fa0).mean(axis=0)
    return DeltaFaResult(out)


@dataclass
class BaselineFit:
    """Univariate logit-FA model fit: the chain and its FA contrast samples."""

    chain: object
    delta: DeltaFaResult
    degenerate_fraction: float


def fa_responses(tensors):
    """Clamped logit-FA responses with the degenerate-voxel fraction.

    FA values outside (0, 1) (including NaN from all-zero tensors) count as
    degenerate; they are clamped to [1e-6, 1 - 1e-6] before the logit.
    """
    tensors = np.asarray(tensors, dtype=np.float64)
    flat = np.ascontiguousarray(tensors.reshape(-1, 6))
    fa = kernels.fa3_batch(flat).reshape(tensors.shape[:-1])
    bad = ~np.isfinite(fa) | (fa <= 0.0) | (fa >= 1.0)
    frac = float(bad.mean())
    fa = np.where(np.isfinite(fa), fa, CLAMP_LO)
    y = logit(np.clip(fa, CLAMP_LO, CLAMP_HI))
    return y, frac


def fit_univariate_baseline(tensors, design, domain, spec, drug_column=None):
    """Fit the spatially varying coefficient model on logit-FA responses.

    Same priors, Vecchia settings, and update machinery as the full model,
    with a single unscaled response process. When drug_column is given, the
    FA contrast is computed per draw as the subject-averaged difference of
    inverse-logit linear predictors with the drug covariate toggled.

    Raises DegenerateFA when more than 1% of FA values fall outside (0, 1)
    before clamping.
    """
    tensors = np.asarray(tensors, dtype=np.float64)
    if tensors.ndim != 3 or tensors.shape[2] != 6:
        raise DimensionMismatch("tensors must have shape (subjects, voxels, 6)")
    y, frac = fa_responses(tensors)
    if frac > 0.01:
        raise DegenerateFA(f"{frac:.1%} of FA values are degenerate (limit 1%)")
    comp = GaussianComponent("logit_fa", np.ascontiguousarray(y), 1.0, None)
    chain = run_mcmc([comp], design, domain, spec)
    delta = None
    if drug_column is not None:
        x0, x1 = _toggled_designs(design, drug_column)
        draws = chain.beta[:, 0]  # (T, p, n)
        out = np.empty((draws.shape[0], draws.shape[2]))
        for t in range(draws.shape[0]):
            out[t] = (expit(x1 @ draws[t]) - expit(x0 @ draws[t])).mean(axis=0)
        delta = DeltaFaResult(out)
    return BaselineFit(chain, delta, frac)
