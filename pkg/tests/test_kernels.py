"""The compiled loop kernels and the vectorized numpy kernels must agree.

Every public kernel exists in three forms: the pure-python loop body (in
kernels._LOOPS), the numpy implementation (kernels._NUMPY), and the active
binding (jit-compiled loops when numba is enabled, else the numpy form).
All of them are run on identical inputs here.
"""

import numpy as np

from tensorfield import kernels, spd
from tensorfield.correlation import MaternParams
from tensorfield.gp import GridDomain, build_vecchia_plan


def _variants(name):
    out = {"loops": kernels._LOOPS[name], "numpy": kernels._NUMPY[name]}
    out["active"] = getattr(kernels, name)
    return out


def _assert_all_close(results, label, atol=1e-12):
    ref = results["numpy"]
    for key, val in results.items():
        if isinstance(ref, tuple):
            for a, b in zip(ref, val):
                assert np.allclose(a, b, rtol=1e-12, atol=atol), f"{label}:{key}"
        else:
            assert np.allclose(ref, val, rtol=1e-12, atol=atol), f"{label}:{key}"


def _plan_inputs(seed, q=6, width=5, height=4):
    domain = GridDomain(width, height)
    plan = build_vecchia_plan(domain, q)
    params = MaternParams(2.0, 0.5)
    table = domain.corr_table(params)
    gx = np.ascontiguousarray(domain.grid_indices()[:, 0])
    gy = np.ascontiguousarray(domain.grid_indices()[:, 1])
    return domain, plan, table, gx, gy


def test_vecchia_factors_paths_agree():
    for seed, q in [(0, 1), (1, 4), (2, 10)]:
        _, plan, table, gx, gy = _plan_inputs(seed, q=q)
        results = {
            key: fn(plan.neighbors, gx, gy, table, kernels.JITTER)
            for key, fn in _variants("vecchia_factors").items()
        }
        _assert_all_close(results, f"factors q={q}")


def test_vecchia_residuals_and_quad_paths_agree():
    rng = np.random.default_rng(7)
    _, plan, table, gx, gy = _plan_inputs(0, q=5)
    coef, cond_var = kernels._NUMPY["vecchia_factors"](
        plan.neighbors, gx, gy, table, kernels.JITTER
    )
    dev = rng.standard_normal((3, plan.n))
    res = {
        key: fn(dev, coef, plan.neighbors)
        for key, fn in _variants("vecchia_residuals").items()
    }
    _assert_all_close(res, "residuals")
    quad = {
        key: fn(dev, coef, plan.neighbors, cond_var)
        for key, fn in _variants("vecchia_quad").items()
    }
    _assert_all_close(quad, "quad")


def test_matrix_kernels_paths_agree():
    rng = np.random.default_rng(8)
    mats = []
    for _ in range(64):
        g = rng.standard_normal((3, 3))
        mats.append(spd.from_matrix(g @ g.T + 0.05 * np.eye(3)))
    a = np.asarray(mats)
    for name in ("chol3_batch", "eigvals3_batch", "fa3_batch"):
        results = {key: fn(a.copy()) for key, fn in _variants(name).items()}
        # eigenvalue order is part of the contract, so compare unsorted
        _assert_all_close(results, name, atol=1e-9)
    t, ok = kernels.chol3_batch(a)
    assert ok.all()
    results = {key: fn(t.copy()) for key, fn in _variants("compose3_batch").items()}
    _assert_all_close(results, "compose3_batch")


def test_variogram_accumulate_paths_agree():
    rng = np.random.default_rng(9)
    n = 20
    fields = rng.standard_normal((6, n, 6))
    pi = np.repeat(np.arange(n), n).astype(np.int64)
    pj = np.tile(np.arange(n), n).astype(np.int64)
    keep = pi < pj
    pi, pj = pi[keep], pj[keep]
    bins = rng.integers(0, 4, size=pi.size).astype(np.int64)
    results = {
        key: fn(fields, pi, pj, bins, 4)
        for key, fn in _variants("variogram_accumulate").items()
    }
    _assert_all_close(results, "variogram")


def test_active_path_flag_consistent():
    assert kernels.ACTIVE_PATH in ("numba", "numpy")
    if kernels.ACTIVE_PATH == "numba":
        assert kernels.USE_NUMBA
