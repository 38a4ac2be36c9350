"""FA treatment contrast, chain scoring, and the univariate baseline."""

import numpy as np
import pytest
from scipy.special import expit, logit

from tensorfield import spd
from tensorfield.errors import DegenerateFA, InvalidParams, MissingTruth
from tensorfield.estimators import (
    CLAMP_HI,
    PosteriorSummary,
    delta_fa,
    fa_responses,
    fit_univariate_baseline,
    score_chain,
)
from tensorfield.gp import GridDomain
from tensorfield.inference import CdpModelSpec, McmcChain
from tensorfield.regression import (
    CoefficientField,
    ScenarioConfig,
    generate_dataset,
    mean_cholesky_field,
)


def make_chain(draws, domain, design, names=("t11", "t22", "t33", "t21", "t31", "t32")):
    t = draws.shape[0]
    return McmcChain(
        beta=draws,
        prec_beta=np.ones(t),
        prec_m=np.ones(t),
        theta=np.zeros((t, 4)),
        log_post=np.zeros(t),
        accept_rates={},
        seed=0,
        spec=None,
        component_names=tuple(names),
        domain=domain,
        design=design,
    )


def test_posterior_summary_from_draws():
    rng = np.random.default_rng(0)
    draws = rng.standard_normal((5000, 3)) * np.array([1.0, 2.0, 0.5]) + np.array(
        [0.0, 4.0, -1.0]
    )
    s = PosteriorSummary.from_draws(draws)
    assert np.allclose(s.mean, draws.mean(axis=0))
    assert np.allclose(s.sd, draws.std(axis=0))
    assert np.allclose(s.lo, np.quantile(draws, 0.025, axis=0))
    assert np.allclose(s.hi, np.quantile(draws, 0.975, axis=0))
    assert np.allclose(s.z, s.mean / s.sd)
    # constant draws: sd = 0 maps to z = 0, not inf
    s0 = PosteriorSummary.from_draws(np.full((10, 2), 3.0))
    assert np.all(s0.z == 0.0) and np.all(s0.sd == 0.0)


def test_score_chain_constant_draws_equal_truth():
    domain = GridDomain(3, 3)
    truth = np.random.default_rng(1).standard_normal((6, 2, 9))
    draws = np.repeat(truth[None], 8, axis=0)
    chain = make_chain(draws, domain, np.ones((2, 2)))
    report = score_chain(chain, truth)
    assert report.overall["mad"] < 1e-12
    assert report.overall["coverage"] == 1.0
    assert report.overall["mcsd"] < 1e-12


def test_score_chain_gaussian_draws_known_metrics():
    """iid N(truth + shift, sd^2) draws give mad ~ |shift|, mcsd ~ sd, and
    coverage matching the normal interval probability."""
    rng = np.random.default_rng(2)
    domain = GridDomain(4, 4)
    truth = np.zeros((6, 2, 16))
    shift, sd = 0.3, 1.0
    draws = shift + sd * rng.standard_normal((20000, 6, 2, 16))
    chain = make_chain(draws, domain, np.ones((2, 2)))
    report = score_chain(chain, truth)
    assert abs(report.overall["mad"] - shift) < 0.02
    assert abs(report.overall["mcsd"] - sd) < 0.01
    # truth sits 0.3 sd below the center of a 95% interval: still covered
    assert report.overall["coverage"] > 0.95
    rows = list(report.rows())
    assert rows[-1][0] == "overall" and len(rows) == 7


def test_score_chain_shape_mismatch():
    domain = GridDomain(2, 2)
    draws = np.zeros((5, 6, 2, 4))
    chain = make_chain(draws, domain, np.ones((2, 2)))
    with pytest.raises(MissingTruth):
        score_chain(chain, np.zeros((6, 3, 4)))


def test_score_chain_accepts_coefficient_field():
    domain = GridDomain(2, 2)
    truth = CoefficientField(np.zeros((6, 2, 4)), domain)
    draws = np.zeros((5, 6, 2, 4))
    chain = make_chain(draws, domain, np.ones((2, 2)))
    assert score_chain(chain, truth).overall["mad"] == 0.0


def test_delta_fa_zero_drug_effect_is_exactly_zero():
    domain = GridDomain(3, 3)
    rng = np.random.default_rng(3)
    draws = 0.1 * rng.standard_normal((7, 6, 3, domain.n))
    draws[:, :, 1, :] = 0.0  # no drug coefficient anywhere
    design = np.array([[1.0, 1.0, 0.4], [1.0, 0.0, 1.2]])
    chain = make_chain(draws, domain, design)
    result = delta_fa(chain, design, drug_column=1)
    assert result.samples.shape == (7, domain.n)
    assert np.all(result.samples == 0.0)


def test_delta_fa_hand_composed_single_draw():
    domain = GridDomain(2, 1)
    values = np.zeros((6, 2, 2))
    values[0, 1, 0] = 0.4  # drug raises log t11 at voxel 0
    values[3, 0, :] = 0.3  # constant t21
    coeffs = CoefficientField(values, domain)
    design = np.array([[1.0, 0.0], [1.0, 1.0]])
    chain = make_chain(values[None], domain, design)
    result = delta_fa(chain, design, drug_column=1)
    x1 = np.array([[1.0, 1.0], [1.0, 1.0]])
    x0 = np.array([[1.0, 0.0], [1.0, 0.0]])
    fa1 = spd.fractional_anisotropy(spd.compose(mean_cholesky_field(x1, coeffs)))
    fa0 = spd.fractional_anisotropy(spd.compose(mean_cholesky_field(x0, coeffs)))
    expected = (fa1 - fa0).mean(axis=0)
    assert np.allclose(result.samples[0], expected, atol=1e-12)
    assert abs(result.samples[0, 1]) < 1e-12  # no drug effect at voxel 1


def test_delta_fa_requires_binary_drug_column():
    domain = GridDomain(2, 1)
    draws = np.zeros((2, 6, 2, 2))
    design = np.array([[1.0, 0.5], [1.0, 1.0]])
    chain = make_chain(draws, domain, design)
    with pytest.raises(InvalidParams):
        delta_fa(chain, design, drug_column=1)


def test_fa_responses_logit_round_trip():
    sc = ScenarioConfig(width=3, height=3, n_subjects=4, m=30, region_size=2)
    ds = generate_dataset(sc, "cdp", seed=4)
    y, frac = fa_responses(ds.tensors)
    assert frac == 0.0
    fa = spd.fractional_anisotropy(ds.tensors)
    assert np.allclose(expit(y), fa, atol=1e-12)
    assert np.allclose(y, logit(fa), atol=1e-12)


def test_fa_responses_clamps_degenerate_values():
    # FA numerically at 1 clamps to the cap without counting as degenerate
    prolate = np.tile(spd.from_matrix(np.diag([1.0, 1e-14, 1e-14])), (2, 3, 1))
    y, frac = fa_responses(prolate)
    assert frac == 0.0
    assert np.all(np.isfinite(y))
    assert np.all(expit(y) <= CLAMP_HI)
    # exactly isotropic tensors give FA = 0: degenerate, clamped to the floor
    iso = np.tile(spd.from_matrix(np.eye(3)), (2, 3, 1))
    y2, frac2 = fa_responses(iso)
    assert frac2 == 1.0
    assert np.all(np.isfinite(y2))


def test_fit_univariate_baseline_runs_and_rejects_degenerate():
    sc = ScenarioConfig(width=3, height=3, n_subjects=4, m=30, region_size=2)
    ds = generate_dataset(sc, "cdp", seed=6)
    spec = CdpModelSpec(q=4, iters=40, burnin=10, seed=1)
    result = fit_univariate_baseline(ds.tensors, ds.design, sc.domain, spec, drug_column=1)
    assert result.degenerate_fraction == 0.0
    assert result.chain.component_names == ("logit_fa",)
    assert result.delta.samples.shape == (30, sc.domain.n)
    # contrast of expit-transformed linear predictors, computed directly
    draws = result.chain.beta
    x1 = ds.design.copy()
    x0 = ds.design.copy()
    x1[:, 1], x0[:, 1] = 1.0, 0.0
    t0 = (expit(x1 @ draws[0, 0]) - expit(x0 @ draws[0, 0])).mean(axis=0)
    assert np.allclose(result.delta.samples[0], t0, atol=1e-12)
    bad = np.tile(spd.from_matrix(np.eye(3)), (4, sc.domain.n, 1))
    with pytest.raises(DegenerateFA):
        fit_univariate_baseline(bad, ds.design, sc.domain, spec, drug_column=1)
