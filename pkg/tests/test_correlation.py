"""Matern correlation: closed forms, the Bessel branch, and lookup tables."""

import numpy as np
import pytest

from tensorfield.correlation import MaternParams, corr_matrix, corr_table, correlation, matern
from tensorfield.errors import InvalidParams


def test_matern_exponential_closed_form():
    # nu = 1/2 reduces to exp(-h/rho)
    params = MaternParams(rho=2.5, nu=0.5)
    h = np.linspace(0.0, 12.0, 49)
    expected = np.exp(-h / 2.5)
    got = matern(h, params)
    assert np.allclose(got, expected, rtol=0, atol=1e-14)


def test_matern_three_halves_closed_form():
    params = MaternParams(rho=1.7, nu=1.5)
    h = np.linspace(0.0, 8.0, 33)
    s = np.sqrt(3.0) * h / 1.7
    expected = (1.0 + s) * np.exp(-s)
    assert np.allclose(matern(h, params), expected, rtol=0, atol=1e-14)


def test_matern_five_halves_closed_form():
    params = MaternParams(rho=3.0, nu=2.5)
    h = np.linspace(0.0, 8.0, 33)
    s = np.sqrt(5.0) * h / 3.0
    expected = (1.0 + s + s * s / 3.0) * np.exp(-s)
    assert np.allclose(matern(h, params), expected, rtol=0, atol=1e-14)


def test_bessel_branch_agrees_with_closed_forms():
    """The general-nu Bessel route must agree with the half-integer closed
    forms when nu sits a hair off the dispatch values (continuity in nu)."""
    h = np.linspace(0.05, 10.0, 40)
    for nu in (0.5, 1.5, 2.5):
        closed = matern(h, MaternParams(rho=2.0, nu=nu))
        bessel = matern(h, MaternParams(rho=2.0, nu=nu + 1e-9))
        assert np.allclose(closed, bessel, atol=1e-6), f"nu={nu}"


def test_matern_basic_properties():
    rng = np.random.default_rng(3)
    for _ in range(20):
        rho = float(rng.uniform(0.3, 8.0))
        nu = float(rng.uniform(0.2, 4.0))
        params = MaternParams(rho, nu)
        h = np.sort(rng.uniform(0.0, 20.0, size=30))
        k = matern(h, params)
        assert matern(0.0, params) == 1.0
        assert np.all(k <= 1.0) and np.all(k >= 0.0)
        # nonincreasing in distance
        assert np.all(np.diff(k) <= 1e-12)


def test_matern_extreme_nu_is_finite():
    # huge nu overflows BesselK internally; the result must be a clean 0/1
    params = MaternParams(rho=1.0, nu=np.exp(8.0))
    vals = matern(np.array([0.0, 0.5, 3.0]), params)
    assert np.all(np.isfinite(vals))


def test_matern_rejects_negative_distance():
    with pytest.raises(InvalidParams):
        matern(-0.5, MaternParams(1.0, 0.5))


def test_matern_params_validation():
    with pytest.raises(InvalidParams):
        MaternParams(rho=0.0, nu=0.5)
    with pytest.raises(InvalidParams):
        MaternParams(rho=1.0, nu=-1.0)


def test_correlation_squared_flag():
    params = MaternParams(2.0, 0.5)
    h = np.linspace(0.0, 5.0, 11)
    assert np.allclose(correlation(h, params, squared=True), matern(h, params) ** 2)


def test_corr_matrix_matches_pairwise_scalar_calls():
    rng = np.random.default_rng(11)
    locs = rng.uniform(0.0, 6.0, size=(9, 2))
    params = MaternParams(1.8, 0.5)
    mat = corr_matrix(locs, params)
    for i in range(9):
        for j in range(9):
            d = float(np.hypot(*(locs[i] - locs[j])))
            assert abs(mat[i, j] - matern(d, params)) < 1e-14
    assert np.allclose(mat, mat.T)
    # valid correlation matrix: unit diagonal, PD after jitter
    assert np.allclose(np.diag(mat), 1.0)
    np.linalg.cholesky(mat + 1e-10 * np.eye(9))


def test_corr_table_indexed_by_squared_offsets():
    """Table entry at integer d2 equals the correlation at sqrt(d2)*spacing."""
    params = MaternParams(2.2, 0.5)
    for spacing in (1.0, 0.5):
        table = corr_table(25, params, spacing=spacing)
        for d2 in range(26):
            expected = matern(np.sqrt(d2) * spacing, params)
            assert abs(table[d2] - expected) < 1e-14
    sq = corr_table(25, params, spacing=1.0, squared=True)
    assert np.allclose(sq, corr_table(25, params, spacing=1.0) ** 2)
