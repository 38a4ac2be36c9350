"""Numerical kernels with paired numba and vectorized-numpy implementations.

Every hot loop in the package funnels through this module. Each kernel exists
twice: a ``*_loops`` version written as plain nested loops (compiled with
``numba.njit`` when available) and a ``*_numpy`` version written against
vectorized numpy. The public names bind to the numba path by default; setting
the environment variable ``TENSORFIELD_NUMBA=0`` before import (or running
without numba installed) binds them to the numpy path instead.

All kernels are serial. Reductions keep a fixed summation order so repeated
runs of the same build produce byte-identical results.

Correlation values enter these kernels through lookup tables indexed by
integer squared grid offsets: for grid geometries every squared distance is
``(dx^2 + dy^2) * spacing^2`` with integer ``dx, dy``, so the table is exact.
"""

import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env flag in tests
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("TENSORFIELD_NUMBA", "1") != "0"

# Added to correlation-matrix diagonals before factorization, never to the
# matrices themselves: both the dense and the sequential (Vecchia) routes
# factor R + JITTER*I so the two agree to roundoff.
JITTER = 1e-10

# Frobenius weights for symmetric 3x3 matrices packed as the lower triangle
# (a11, a21, a22, a31, a32, a33): off-diagonal entries appear twice.
_FROB_W = np.array([1.0, 2.0, 1.0, 2.0, 2.0, 1.0])


# ---------------------------------------------------------------------------
# Vecchia sequential factors
# ---------------------------------------------------------------------------

def _vecchia_factors_loops(nbrs, gx, gy, table, jitter):
    n, q = nbrs.shape
    coef = np.zeros((n, q))
    cond_var = np.empty(n)
    for i in range(n):
        k = 0
        while k < q and nbrs[i, k] >= 0:
            k += 1
        if k == 0:
            cond_var[i] = 1.0 + jitter
            continue
        rnn = np.empty((k, k))
        rni = np.empty(k)
        for a in range(k):
            ja = nbrs[i, a]
            dxa = gx[i] - gx[ja]
            dya = gy[i] - gy[ja]
            rni[a] = table[dxa * dxa + dya * dya]
            for b in range(k):
                jb = nbrs[i, b]
                dx = gx[ja] - gx[jb]
                dy = gy[ja] - gy[jb]
                rnn[a, b] = table[dx * dx + dy * dy]
            rnn[a, a] += jitter
        sol = np.linalg.solve(rnn, rni)
        acc = 0.0
        for a in range(k):
            coef[i, a] = sol[a]
            acc += rni[a] * sol[a]
        cond_var[i] = 1.0 + jitter - acc
    return coef, cond_var


def _vecchia_factors_numpy(nbrs, gx, gy, table, jitter):
    n, q = nbrs.shape
    if q == 0:
        return np.zeros((n, 0)), np.full(n, 1.0 + jitter)
    valid = nbrs >= 0
    idx = np.where(valid, nbrs, 0)
    ngx = gx[idx]
    ngy = gy[idx]
    rni = table[(ngx - gx[:, None]) ** 2 + (ngy - gy[:, None]) ** 2]
    rni = np.where(valid, rni, 0.0)
    rnn = table[
        (ngx[:, :, None] - ngx[:, None, :]) ** 2
        + (ngy[:, :, None] - ngy[:, None, :]) ** 2
    ]
    both = valid[:, :, None] & valid[:, None, :]
    rnn = np.where(both, rnn, 0.0)
    # padded slots become decoupled unit equations with zero right-hand side
    diag = np.arange(q)
    rnn[:, diag, diag] = np.where(valid, rnn[:, diag, diag] + jitter, 1.0)
    coef = np.linalg.solve(rnn, rni[:, :, None])[:, :, 0]
    coef = np.where(valid, coef, 0.0)
    cond_var = 1.0 + jitter - np.einsum("ik,ik->i", rni, coef)
    return coef, cond_var


# ---------------------------------------------------------------------------
# Vecchia residuals and quadratic forms (batched over fields)
# ---------------------------------------------------------------------------

def _vecchia_residuals_loops(dev, coef, nbrs):
    nf, n = dev.shape
    q = nbrs.shape[1]
    out = np.empty((nf, n))
    for f in range(nf):
        for i in range(n):
            acc = dev[f, i]
            for k in range(q):
                j = nbrs[i, k]
                if j < 0:
                    break
                acc -= coef[i, k] * dev[f, j]
            out[f, i] = acc
    return out


def _vecchia_residuals_numpy(dev, coef, nbrs):
    if nbrs.shape[1] == 0:
        return dev.copy()
    valid = nbrs >= 0
    idx = np.where(valid, nbrs, 0)
    gathered = dev[:, idx] * valid
    return dev - np.einsum("fik,ik->fi", gathered, coef)


def _vecchia_quad_loops(dev, coef, nbrs, cond_var):
    nf, n = dev.shape
    q = nbrs.shape[1]
    out = np.zeros(nf)
    for f in range(nf):
        acc = 0.0
        for i in range(n):
            e = dev[f, i]
            for k in range(q):
                j = nbrs[i, k]
                if j < 0:
                    break
                e -= coef[i, k] * dev[f, j]
            acc += e * e / cond_var[i]
        out[f] = acc
    return out


def _vecchia_quad_numpy(dev, coef, nbrs, cond_var):
    resid = _vecchia_residuals_numpy(dev, coef, nbrs)
    return np.einsum("fi,i->f", resid * resid, 1.0 / cond_var)


# ---------------------------------------------------------------------------
# Batched 3x3 symmetric operations (lower-triangle packing a11,a21,a22,a31,a32,a33)
# ---------------------------------------------------------------------------

def _chol3_loops(a):
    m = a.shape[0]
    t = np.zeros((m, 6))
    ok = np.empty(m, dtype=np.bool_)
    for i in range(m):
        a11 = a[i, 0]
        a21 = a[i, 1]
        a22 = a[i, 2]
        a31 = a[i, 3]
        a32 = a[i, 4]
        a33 = a[i, 5]
        dmax = a11
        if a22 > dmax:
            dmax = a22
        if a33 > dmax:
            dmax = a33
        thr = 1e-14 * dmax
        if a11 <= thr:
            ok[i] = False
            continue
        t11 = np.sqrt(a11)
        t21 = a21 / t11
        t31 = a31 / t11
        p2 = a22 - t21 * t21
        if p2 <= thr:
            ok[i] = False
            continue
        t22 = np.sqrt(p2)
        t32 = (a32 - t31 * t21) / t22
        p3 = a33 - t31 * t31 - t32 * t32
        if p3 <= thr:
            ok[i] = False
            continue
        t[i, 0] = t11
        t[i, 1] = t21
        t[i, 2] = t22
        t[i, 3] = t31
        t[i, 4] = t32
        t[i, 5] = np.sqrt(p3)
        ok[i] = True
    return t, ok


def _chol3_numpy(a):
    a11, a21, a22, a31, a32, a33 = (a[:, c] for c in range(6))
    thr = 1e-14 * np.max(a[:, [0, 2, 5]], axis=1)
    ok = a11 > thr
    with np.errstate(invalid="ignore", divide="ignore"):
        t11 = np.sqrt(np.where(ok, a11, 1.0))
        t21 = a21 / t11
        t31 = a31 / t11
        p2 = a22 - t21 * t21
        ok &= p2 > thr
        t22 = np.sqrt(np.where(ok, p2, 1.0))
        t32 = (a32 - t31 * t21) / t22
        p3 = a33 - t31 * t31 - t32 * t32
        ok &= p3 > thr
        t33 = np.sqrt(np.where(ok, p3, 1.0))
    t = np.stack([t11, t21, t22, t31, t32, t33], axis=1)
    t[~ok] = 0.0
    return t, ok


def _compose3_loops(t):
    m = t.shape[0]
    a = np.empty((m, 6))
    for i in range(m):
        t11 = t[i, 0]
        t21 = t[i, 1]
        t22 = t[i, 2]
        t31 = t[i, 3]
        t32 = t[i, 4]
        t33 = t[i, 5]
        a[i, 0] = t11 * t11
        a[i, 1] = t21 * t11
        a[i, 2] = t21 * t21 + t22 * t22
        a[i, 3] = t31 * t11
        a[i, 4] = t31 * t21 + t32 * t22
        a[i, 5] = t31 * t31 + t32 * t32 + t33 * t33
    return a


def _compose3_numpy(t):
    t11, t21, t22, t31, t32, t33 = (t[:, c] for c in range(6))
    return np.stack(
        [
            t11 * t11,
            t21 * t11,
            t21 * t21 + t22 * t22,
            t31 * t11,
            t31 * t21 + t32 * t22,
            t31 * t31 + t32 * t32 + t33 * t33,
        ],
        axis=1,
    )


def _eigvals3_loops(a):
    m = a.shape[0]
    out = np.empty((m, 3))
    mat = np.empty((3, 3))
    for i in range(m):
        a11 = a[i, 0]
        a21 = a[i, 1]
        a22 = a[i, 2]
        a31 = a[i, 3]
        a32 = a[i, 4]
        a33 = a[i, 5]
        amax = abs(a11)
        for c in range(1, 6):
            v = abs(a[i, c])
            if v > amax:
                amax = v
        p1 = a21 * a21 + a31 * a31 + a32 * a32
        if amax == 0.0 or p1 <= (1e-14 * amax) ** 2:
            # numerically diagonal: eigenvalues are the diagonal entries
            l1 = a11
            l2 = a22
            l3 = a33
            if l1 < l2:
                l1, l2 = l2, l1
            if l2 < l3:
                l2, l3 = l3, l2
            if l1 < l2:
                l1, l2 = l2, l1
            out[i, 0] = l1
            out[i, 1] = l2
            out[i, 2] = l3
            continue
        qq = (a11 + a22 + a33) / 3.0
        b11 = a11 - qq
        b22 = a22 - qq
        b33 = a33 - qq
        p2 = b11 * b11 + b22 * b22 + b33 * b33 + 2.0 * p1
        p = np.sqrt(p2 / 6.0)
        c11 = b11 / p
        c21 = a21 / p
        c22 = b22 / p
        c31 = a31 / p
        c32 = a32 / p
        c33 = b33 / p
        detb = (
            c11 * (c22 * c33 - c32 * c32)
            - c21 * (c21 * c33 - c32 * c31)
            + c31 * (c21 * c32 - c22 * c31)
        )
        r = detb / 2.0
        if r > 1.0 - 1e-12 or r < -1.0 + 1e-12:
            # near-degenerate spectrum: Householder tridiagonalization route
            mat[0, 0] = a11
            mat[0, 1] = a21
            mat[0, 2] = a31
            mat[1, 0] = a21
            mat[1, 1] = a22
            mat[1, 2] = a32
            mat[2, 0] = a31
            mat[2, 1] = a32
            mat[2, 2] = a33
            w = np.linalg.eigvalsh(mat)
            out[i, 0] = w[2]
            out[i, 1] = w[1]
            out[i, 2] = w[0]
            continue
        phi = np.arccos(r) / 3.0
        l1 = qq + 2.0 * p * np.cos(phi)
        l3 = qq + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
        out[i, 0] = l1
        out[i, 1] = 3.0 * qq - l1 - l3
        out[i, 2] = l3
    return out


def _eigvals3_numpy(a):
    a11, a21, a22, a31, a32, a33 = (a[:, c] for c in range(6))
    amax = np.max(np.abs(a), axis=1)
    p1 = a21 * a21 + a31 * a31 + a32 * a32
    diag = (amax == 0.0) | (p1 <= (1e-14 * amax) ** 2)
    qq = (a11 + a22 + a33) / 3.0
    p2 = (a11 - qq) ** 2 + (a22 - qq) ** 2 + (a33 - qq) ** 2 + 2.0 * p1
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.sqrt(p2 / 6.0)
        psafe = np.where(p > 0, p, 1.0)
        c11 = (a11 - qq) / psafe
        c22 = (a22 - qq) / psafe
        c33 = (a33 - qq) / psafe
        c21 = a21 / psafe
        c31 = a31 / psafe
        c32 = a32 / psafe
        r = (
            c11 * (c22 * c33 - c32 * c32)
            - c21 * (c21 * c33 - c32 * c31)
            + c31 * (c21 * c32 - c22 * c31)
        ) / 2.0
    hard = (~diag) & ((r > 1.0 - 1e-12) | (r < -1.0 + 1e-12) | ~np.isfinite(r))
    phi = np.arccos(np.clip(r, -1.0, 1.0)) / 3.0
    l1 = qq + 2.0 * p * np.cos(phi)
    l3 = qq + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    out = np.stack([l1, 3.0 * qq - l1 - l3, l3], axis=1)
    if np.any(diag):
        d = np.stack([a11, a22, a33], axis=1)[diag]
        out[diag] = -np.sort(-d, axis=1)
    if np.any(hard):
        sub = a[hard]
        mats = np.empty((sub.shape[0], 3, 3))
        mats[:, 0, 0] = sub[:, 0]
        mats[:, 1, 0] = mats[:, 0, 1] = sub[:, 1]
        mats[:, 1, 1] = sub[:, 2]
        mats[:, 2, 0] = mats[:, 0, 2] = sub[:, 3]
        mats[:, 2, 1] = mats[:, 1, 2] = sub[:, 4]
        mats[:, 2, 2] = sub[:, 5]
        out[hard] = np.linalg.eigvalsh(mats)[:, ::-1]
    return out


def _fa_from_eigvals(vals):
    l1 = vals[:, 0]
    l2 = vals[:, 1]
    l3 = vals[:, 2]
    num = (l1 - l2) ** 2 + (l2 - l3) ** 2 + (l3 - l1) ** 2
    den = l1 * l1 + l2 * l2 + l3 * l3
    degenerate = (np.abs(vals) < 1e-14).all(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        fa = np.sqrt(0.5 * num / np.where(degenerate, 1.0, den))
    return np.where(degenerate, np.nan, fa)


def _fa3_loops(a):
    vals = _eigvals3_loops(a)
    m = a.shape[0]
    out = np.empty(m)
    for i in range(m):
        l1 = vals[i, 0]
        l2 = vals[i, 1]
        l3 = vals[i, 2]
        if abs(l1) < 1e-14 and abs(l2) < 1e-14 and abs(l3) < 1e-14:
            out[i] = np.nan
            continue
        num = (l1 - l2) ** 2 + (l2 - l3) ** 2 + (l3 - l1) ** 2
        den = l1 * l1 + l2 * l2 + l3 * l3
        out[i] = np.sqrt(0.5 * num / den)
    return out


def _fa3_numpy(a):
    return _fa_from_eigvals(_eigvals3_numpy(a))


# ---------------------------------------------------------------------------
# Variogram accumulation
# ---------------------------------------------------------------------------

def _variogram_accumulate_loops(fields, pi, pj, bins, nbins):
    nr = fields.shape[0]
    npairs = pi.shape[0]
    sums = np.zeros(nbins)
    w = _FROB_W
    for r in range(nr):
        for p in range(npairs):
            i = pi[p]
            j = pj[p]
            acc = 0.0
            for c in range(6):
                d = fields[r, i, c] - fields[r, j, c]
                acc += w[c] * d * d
            sums[bins[p]] += acc
    return sums


def _variogram_accumulate_numpy(fields, pi, pj, bins, nbins):
    sums = np.zeros(nbins)
    chunk = max(1, int(4e6) // max(1, pi.shape[0] * 6))
    for start in range(0, fields.shape[0], chunk):
        block = fields[start : start + chunk]
        diff = block[:, pi, :] - block[:, pj, :]
        per_pair = np.einsum("rpc,c->p", diff * diff, _FROB_W)
        sums += np.bincount(bins, weights=per_pair, minlength=nbins)
    return sums


# ---------------------------------------------------------------------------
# Path binding
# ---------------------------------------------------------------------------

_LOOPS = {
    "vecchia_factors": _vecchia_factors_loops,
    "vecchia_residuals": _vecchia_residuals_loops,
    "vecchia_quad": _vecchia_quad_loops,
    "chol3_batch": _chol3_loops,
    "compose3_batch": _compose3_loops,
    "eigvals3_batch": _eigvals3_loops,
    "fa3_batch": _fa3_loops,
    "variogram_accumulate": _variogram_accumulate_loops,
}

_NUMPY = {
    "vecchia_factors": _vecchia_factors_numpy,
    "vecchia_residuals": _vecchia_residuals_numpy,
    "vecchia_quad": _vecchia_quad_numpy,
    "chol3_batch": _chol3_numpy,
    "compose3_batch": _compose3_numpy,
    "eigvals3_batch": _eigvals3_numpy,
    "fa3_batch": _fa3_numpy,
    "variogram_accumulate": _variogram_accumulate_numpy,
}

if USE_NUMBA:
    _jit = njit(cache=True)
    _vecchia_factors_loops = _jit(_vecchia_factors_loops)
    _vecchia_residuals_loops = _jit(_vecchia_residuals_loops)
    _vecchia_quad_loops = _jit(_vecchia_quad_loops)
    _chol3_loops = _jit(_chol3_loops)
    _compose3_loops = _jit(_compose3_loops)
    _eigvals3_loops = _jit(_eigvals3_loops)
    _fa3_loops = _jit(_fa3_loops)
    _variogram_accumulate_loops = _jit(_variogram_accumulate_loops)
    _ACTIVE = {
        "vecchia_factors": _vecchia_factors_loops,
        "vecchia_residuals": _vecchia_residuals_loops,
        "vecchia_quad": _vecchia_quad_loops,
        "chol3_batch": _chol3_loops,
        "compose3_batch": _compose3_loops,
        "eigvals3_batch": _eigvals3_loops,
        "fa3_batch": _fa3_loops,
        "variogram_accumulate": _variogram_accumulate_loops,
    }
else:
    _ACTIVE = _NUMPY

vecchia_factors = _ACTIVE["vecchia_factors"]
vecchia_residuals = _ACTIVE["vecchia_residuals"]
vecchia_quad = _ACTIVE["vecchia_quad"]
chol3_batch = _ACTIVE["chol3_batch"]
compose3_batch = _ACTIVE["compose3_batch"]
eigvals3_batch = _ACTIVE["eigvals3_batch"]
fa3_batch = _ACTIVE["fa3_batch"]
variogram_accumulate = _ACTIVE["variogram_accumulate"]

ACTIVE_PATH = "numba" if USE_NUMBA else "numpy"
