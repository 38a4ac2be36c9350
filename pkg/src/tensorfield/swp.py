"""Spatial Wishart process: simulation, variograms, characteristic function,
and the distributional oracles used as test references.

A draw of the process at locations {s} is U(s) = (1/m) sum_j Z_j(s) Z_j(s)',
with Z_j iid mean-zero 3-variate Gaussian processes sharing a spatial kernel
K and cross-covariance Sigma. Marginally U(s) ~ W(Sigma, m) in the MEAN
parameterization: E[U] = Sigma, not the classical m*Sigma.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag

from . import kernels, spd
from .correlation import MaternParams, corr_matrix, correlation
from .errors import (
    CholeskyFailure,
    DimensionMismatch,
    InvalidDof,
    InvalidParams,
    SingularArgument,
)
from .gp import as_generator

IDENTITY6 = np.array([1.0, 0.0, 1.0, 0.0, 0.0, 1.0])

# packed component -> (row, col) pairs used when accumulating outer products
_PAIR = ((0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2))


@dataclass(frozen=True)
class SwpParams:
    """Degrees of freedom, spatial kernel, and cross-covariance of an SWP."""

    m: int
    kernel: MaternParams
    sigma: np.ndarray = field(default_factory=lambda: IDENTITY6.copy())

    def __post_init__(self):
        if not float(self.m).is_integer() or self.m < 3:
            raise InvalidDof(f"m must be an integer >= 3, got {self.m}")
        object.__setattr__(self, "m", int(self.m))
        sig = np.asarray(self.sigma, dtype=np.float64)
        if sig.shape == (3, 3):
            sig = spd.from_matrix(sig)
        if sig.shape != (6,):
            raise DimensionMismatch(f"sigma must be packed (6,) or (3,3), got {sig.shape}")
        object.__setattr__(self, "sigma", sig)
        spd.cholesky_lower(sig)  # raises NotPositiveDefinite if unsuitable

    @property
    def sigma_is_identity(self):
        return bool(np.array_equal(self.sigma, IDENTITY6))


def simulate_swp(domain, params, seed, size=None, return_latent=False, order=None):
    """Simulate spatial Wishart process replicates on a grid.

    Parameters
    ----------
    domain : GridDomain
    params : SwpParams
    seed : int or numpy Generator
    size : replicate count; None means a single replicate with shape (n, 6)
    return_latent : also return the latent Gaussian components, shape
        (size, m, n, 3); needed by the conditional-law oracles
    order : optional permutation of location indices; fields are computed in
        canonical lexicographic order and then reindexed, so a permuted call
        returns bit-identical values in permuted positions

    Returns
    -------
    fields : array (size, n, 6) packed SPD matrices (or (n, 6) when size is
        None); optionally (fields, latent)
    """
    rng = as_generator(seed)
    n = domain.n
    m = params.m
    nd = 1 if size is None else int(size)
    r = domain.corr_dense(params.kernel)
    r[np.diag_indices_from(r)] += kernels.JITTER
    try:
        chol_r = np.linalg.cholesky(r)
    except np.linalg.LinAlgError as exc:
        raise CholeskyFailure(f"spatial correlation not PD: {exc}") from exc
    chol_sig = None
    if not params.sigma_is_identity:
        chol_sig = spd.to_matrix(spd.cholesky_lower(params.sigma))
        chol_sig = np.tril(chol_sig)
    fields = np.empty((nd, n, 6))
    latent = np.empty((nd, m, n, 3)) if return_latent else None
    chunk = max(1, int(2e7) // max(1, m * 3 * n))
    for start in range(0, nd, chunk):
        stop = min(nd, start + chunk)
        c = stop - start
        z = rng.standard_normal((c * m * 3, n)) @ chol_r.T
        z = z.reshape(c, m, 3, n)
        if chol_sig is not None:
            z = np.einsum("ab,jmbn->jman", chol_sig, z)
        for comp, (a, b) in enumerate(_PAIR):
            fields[start:stop, :, comp] = (
                np.einsum("jmn,jmn->jn", z[:, :, a, :], z[:, :, b, :]) / m
            )
        if return_latent:
            latent[start:stop] = np.transpose(z, (0, 1, 3, 2))
    if order is not None:
        order = np.asarray(order)
        fields = fields[:, order, :]
        if return_latent:
            latent = latent[:, :, order, :]
    if size is None:
        fields = fields[0]
        if return_latent:
            latent = latent[0]
    return (fields, latent) if return_latent else fields


def gamma_factor(params):
    """Non-spatial variogram factor gamma(m, Sigma) = (2/m)[Tr(Sigma^2) + Tr(Sigma)^2]."""
    sig = spd.to_matrix(params.sigma)
    return (2.0 / params.m) * (np.trace(sig @ sig) + np.trace(sig) ** 2)


def variogram_theoretical(h, params):
    """Expected squared Frobenius difference at distance h: gamma * (1 - K(h)^2)."""
    k = correlation(np.asarray(h, dtype=np.float64), params.kernel)
    out = gamma_factor(params) * (1.0 - k * k)
    return float(out) if np.ndim(h) == 0 else out


@dataclass
class VariogramTable:
    """Binned empirical variogram: realized lags, averages, pair counts."""

    lags: np.ndarray
    empirical: np.ndarray
    n_pairs: np.ndarray

    def rows(self, params=None):
        """Iterate (lag, empirical, n_pairs[, theoretical]) tuples."""
        theo = None if params is None else variogram_theoretical(self.lags, params)
        for i, lag in enumerate(self.lags):
            row = [float(lag), float(self.empirical[i]), int(self.n_pairs[i])]
            if theo is not None:
                row.append(float(theo[i]))
            yield tuple(row)


def variogram_empirical(fields, domain, max_lag=None):
    """Empirical matrix-variate variogram, binned by exact pair distance.

    Distances are grouped exactly (rounded to 3 decimals - grid distances are
    a discrete set, so this is grouping, not binning noise). The lag-0 bin is
    included and is exactly zero. Requested integer lags with no realized
    pairs appear with n_pairs = 0 and NaN empirical value.

    Parameters
    ----------
    fields : array (R, n, 6), R >= 2 replicates
    domain : GridDomain
    max_lag : include pairs with distance <= max_lag (default: all pairs)
    """
    fields = np.asarray(fields, dtype=np.float64)
    if fields.ndim != 3 or fields.shape[0] < 2:
        raise DimensionMismatch("need at least 2 replicates, shape (R, n, 6)")
    if fields.shape[1] != domain.n or fields.shape[2] != 6:
        raise DimensionMismatch(
            f"fields shape {fields.shape} does not match domain n={domain.n}"
        )
    g = domain.grid_indices()
    iu, ju = np.triu_indices(domain.n, k=1)
    dx = g[iu, 0] - g[ju, 0]
    dy = g[iu, 1] - g[ju, 1]
    dist = domain.spacing * np.sqrt((dx * dx + dy * dy).astype(np.float64))
    if max_lag is not None:
        keep = dist <= max_lag + 1e-9
        iu, ju, dist = iu[keep], ju[keep], dist[keep]
    lag_of_pair = np.round(dist, 3)
    lags, bin_idx = np.unique(lag_of_pair, return_inverse=True)
    counts = np.bincount(bin_idx, minlength=lags.size)
    sums = kernels.variogram_accumulate(
        np.ascontiguousarray(fields),
        np.ascontiguousarray(iu.astype(np.int64)),
        np.ascontiguousarray(ju.astype(np.int64)),
        np.ascontiguousarray(bin_idx.astype(np.int64)),
        lags.size,
    )
    empirical = sums / (counts * fields.shape[0])
    # lag-0 bin: i = j pairs differ by exactly zero
    lags = np.concatenate([[0.0], lags])
    empirical = np.concatenate([[0.0], empirical])
    counts = np.concatenate([[domain.n], counts])
    if max_lag is not None:
        wanted = np.arange(1, int(np.floor(max_lag)) + 1, dtype=np.float64)
        missing = wanted[~np.isin(wanted, lags)]
        if missing.size:
            lags = np.concatenate([lags, missing])
            empirical = np.concatenate([empirical, np.full(missing.size, np.nan)])
            counts = np.concatenate([counts, np.zeros(missing.size, dtype=counts.dtype)])
            srt = np.argsort(lags)
            lags, empirical, counts = lags[srt], empirical[srt], counts[srt]
    return VariogramTable(lags, empirical, counts.astype(np.int64))


def _coefficient_matrices(t_matrices):
    """Per-location symmetric coefficient matrices with halved off-diagonals."""
    t = np.asarray(t_matrices, dtype=np.float64)
    if t.ndim == 2 and t.shape[-1] == 6:
        t = spd.to_matrix(t)
    if t.ndim != 3 or t.shape[-2:] != (3, 3):
        raise DimensionMismatch(
            "t_matrices must be (n_loc, 6) packed or (n_loc, 3, 3) symmetric"
        )
    if not np.allclose(t, np.swapaxes(t, -1, -2)):
        raise InvalidParams("coefficient matrices must be symmetric")
    half = t * 0.5
    d = np.arange(3)
    half[:, d, d] = t[:, d, d]
    return half


def characteristic_function(t_matrices, params, locations):
    """Joint characteristic function of the SWP at a set of locations.

    phi(T) = det(I - 2i T (R kron Sigma/m))^(-m/2), with T block-diagonal in
    per-location symmetric coefficient matrices whose off-diagonal entries
    are halved (so the exponent is sum_s sum_{i<=j} t_ij(s) U_ij(s)).

    The -m/2 power of a complex determinant is multivalued; the branch is
    fixed by continuity along the homotopy tau -> tau*T from phi(0) = 1.
    Because T is real symmetric, the determinant factors into terms
    (1 - 2i*lambda_k) with real lambda_k, each of which stays in the right
    half-plane along the homotopy, so principal logarithms realize the
    tracked branch.

    Parameters
    ----------
    t_matrices : (n_loc, 6) packed or (n_loc, 3, 3) symmetric coefficients
    params : SwpParams
    locations : (n_loc, 2) coordinates

    Returns complex phi with |phi| <= 1.
    """
    half = _coefficient_matrices(t_matrices)
    locations = np.atleast_2d(np.asarray(locations, dtype=np.float64))
    if half.shape[0] != locations.shape[0]:
        raise DimensionMismatch("one coefficient matrix per location required")
    r = corr_matrix(locations, params.kernel)
    sig = spd.to_matrix(params.sigma) / params.m
    cov = np.kron(r, sig)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:  # Sigma SPD and R PD make this unreachable
        raise CholeskyFailure(f"R kron Sigma/m not PD: {exc}") from exc
    tblock = block_diag(*half)
    h = chol.T @ tblock @ chol
    lam = np.linalg.eigvalsh(h)
    factors = 1.0 - 2.0j * lam
    if np.any(np.abs(factors) < 1e-12):
        raise SingularArgument("determinant crosses zero on the homotopy path")
    return complex(np.exp(-0.5 * params.m * np.sum(np.log(factors))))


def mc_characteristic_function(t_matrices, params, locations, draws, seed):
    """Monte Carlo estimate of the SWP characteristic function.

    Simulates iid joint draws at the given locations (via a degenerate grid
    carrying exact pairwise distances is not possible for arbitrary points,
    so this builds the dense correlation directly) and averages
    exp(i * sum_s <T_s, U_s>).
    """
    half = _coefficient_matrices(t_matrices)
    locations = np.atleast_2d(np.asarray(locations, dtype=np.float64))
    rng = as_generator(seed)
    r = corr_matrix(locations, params.kernel)
    r[np.diag_indices_from(r)] += kernels.JITTER
    chol_r = np.linalg.cholesky(r)
    nloc = locations.shape[0]
    m = params.m
    chol_sig = None
    if not params.sigma_is_identity:
        chol_sig = np.tril(spd.to_matrix(spd.cholesky_lower(params.sigma)))
    total = 0.0 + 0.0j
    chunk = max(1, int(2e6) // max(1, m * 3 * nloc))
    done = 0
    while done < draws:
        c = min(chunk, draws - done)
        z = rng.standard_normal((c * m * 3, nloc)) @ chol_r.T
        z = z.reshape(c, m, 3, nloc)
        if chol_sig is not None:
            z = np.einsum("ab,jmbn->jman", chol_sig, z)
        # exponent per draw: sum over locations of tr(M_s U_s)
        u = np.einsum("jman,jmbn->jnab", z, z) / m
        expo = np.einsum("jnab,nab->j", u, half)
        total += np.exp(1j * expo).sum()
        done += c
    return complex(total / draws)


def wishart_cf_single_site(t_matrix, m, sigma=None):
    """Closed-form single-site Wishart characteristic function.

    For U ~ W(Sigma, m) (mean parameterization), phi(T) =
    det(I - 2i M Sigma / m)^(-m/2) with M the halved-off-diagonal
    coefficient matrix. Evaluated through the eigenvalues of
    Sigma^(1/2) M Sigma^(1/2), each factor on the principal branch.
    """
    half = _coefficient_matrices(np.asarray(t_matrix)[None, ...])[0]
    sig = IDENTITY6 if sigma is None else np.asarray(sigma)
    root = np.tril(spd.to_matrix(spd.cholesky_lower(sig)))
    lam = np.linalg.eigvalsh(root.T @ half @ root) / m
    return complex(np.exp(-0.5 * m * np.sum(np.log(1.0 - 2.0j * lam))))


def oracle_diag_marginal(samples, k, m, l_kk=1.0):
    """Goodness of fit of squared Cholesky diagonals against their Gamma law.

    t_kk^2 of chol(A) with A = L U L' and U ~ SWP(m, K, I) is marginally
    GA((m - k + 1)/2, scale 2*l_kk^2/m). Returns the KS statistic/p-value
    plus moment diagnostics.
    """
    from scipy import stats

    samples = np.asarray(samples, dtype=np.float64)
    shape = (m - k + 1) / 2.0
    scale = 2.0 * l_kk * l_kk / m
    stat, pvalue = stats.kstest(samples, stats.gamma(a=shape, scale=scale).cdf)
    return {
        "k": k,
        "m": m,
        "shape": shape,
        "scale": scale,
        "ks_stat": float(stat),
        "p_value": float(pvalue),
        "mean_expected": shape * scale,
        "mean_observed": float(samples.mean()),
        "n": int(samples.size),
    }


def oracle_offdiag_conditional(fields, latent, domain, params, max_lag=None):
    """Conditional-law oracle for the (2,1) Cholesky element of SWP draws.

    Given fields simulated with Sigma = I and their latent components:

    - single site: sqrt(m) * d_21 is standard normal (its conditional law
      given d_11 is N(0, 1/m) regardless of d_11); KS tested at location 0;
    - lag h: conditional on the latent first components, cov of
      sqrt(m) d_21 at two sites is K(h) * Q with
      Q = [sum_j Z_j1(s) Z_j1(s')/m] / (d_11(s) d_11(s')); the report
      compares the empirical second moment against K*mean(Q) and against the
      large-m limit K(h)^2.

    Returns a dict with the KS result and per-lag comparison rows.
    """
    from scipy import stats

    fields = np.asarray(fields, dtype=np.float64)
    latent = np.asarray(latent, dtype=np.float64)
    m = params.m
    if fields.ndim != 3 or latent.ndim != 4 or latent.shape[1] != m:
        raise DimensionMismatch("need fields (R, n, 6) and latent (R, m, n, 3)")
    chol = spd.cholesky_lower(fields)
    d21 = chol[:, :, 1]
    d11 = chol[:, :, 0]
    xi = np.sqrt(m) * d21[:, 0]
    ks_stat, p_value = stats.kstest(xi, "norm")
    # horizontal pairs (same row, offset h) pooled per integer lag
    width, height = domain.width, domain.height
    hmax = width - 1 if max_lag is None else min(width - 1, int(max_lag))
    z1 = latent[:, :, :, 0]
    rows = [
        {
            "lag": 0.0,
            "expected_kq": 1.0,
            "expected_k2": 1.0,
            "observed_moment": float(np.mean(m * d21 * d21)),
            "observed_corr": 1.0,
            "n_pairs": int(fields.shape[1]),
        }
    ]
    base = np.arange(domain.n).reshape(height, width)
    for h in range(1, hmax + 1):
        i_idx = base[:, : width - h].ravel()
        j_idx = base[:, h:].ravel()
        k_h = correlation(h * domain.spacing, params.kernel)
        zq = np.einsum("rmp,rmp->rp", z1[:, :, i_idx], z1[:, :, j_idx]) / m
        q = zq / (d11[:, i_idx] * d11[:, j_idx])
        moment = float(np.mean(m * d21[:, i_idx] * d21[:, j_idx]))
        corr = float(
            np.corrcoef(d21[:, i_idx].ravel(), d21[:, j_idx].ravel())[0, 1]
        )
        rows.append(
            {
                "lag": float(h * domain.spacing),
                "expected_kq": float(k_h * q.mean()),
                "expected_k2": float(k_h * k_h),
                "observed_moment": moment,
                "observed_corr": corr,
                "n_pairs": int(i_idx.size),
            }
        )
    return {
        "ks_stat": float(ks_stat),
        "p_value": float(p_value),
        "n_single": int(xi.size),
        "lags": rows,
    }
