"""Matern spatial correlation functions and correlation matrices.

The Matern family is parameterized by a range ``rho`` and a smoothness
``nu``:

    K(h) = 2^(1-nu) / Gamma(nu) * (sqrt(2 nu) h / rho)^nu
           * BesselK_nu(sqrt(2 nu) h / rho)

with K(0) = 1. At nu = 1/2 this reduces to the exponential kernel
exp(-h / rho). Squared kernels K(h)^2 arise as residual correlation
functions and are exposed through the ``squared`` flag.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import kv

from .errors import DuplicateLocations, InvalidParams

# closed-form half-integer cases, keyed by nu
_HALF_INTEGER = (0.5, 1.5, 2.5)


@dataclass(frozen=True)
class MaternParams:
    """Range and smoothness of a Matern correlation function."""

    rho: float
    nu: float

    def __post_init__(self):
        if not np.isfinite(self.rho) or self.rho <= 0.0:
            raise InvalidParams(f"rho must be positive and finite, got {self.rho}")
        if not np.isfinite(self.nu) or self.nu <= 0.0:
            raise InvalidParams(f"nu must be positive and finite, got {self.nu}")


def matern(h, params):
    """Evaluate the Matern correlation at distances h (scalar or array).

    Half-integer smoothness values 0.5, 1.5, 2.5 use their closed forms;
    other nu go through the modified Bessel function of the second kind.
    Values are clipped into [0, 1] only to absorb roundoff at h ~ 0.
    """
    h = np.asarray(h, dtype=np.float64)
    scalar = h.ndim == 0
    if scalar:
        h = h[None]
    if np.any(h < 0):
        raise InvalidParams("distances must be nonnegative")
    scaled = np.sqrt(2.0 * params.nu) * h / params.rho
    if params.nu == 0.5:
        out = np.exp(-scaled)
    elif params.nu == 1.5:
        out = (1.0 + scaled) * np.exp(-scaled)
    elif params.nu == 2.5:
        out = (1.0 + scaled + scaled * scaled / 3.0) * np.exp(-scaled)
    else:
        out = np.ones_like(scaled)
        pos = scaled > 0
        sp = scaled[pos]
        # over/invalid arise only where BesselK under/overflows; masked below
        with np.errstate(over="ignore", invalid="ignore"):
            coef = 2.0 ** (1.0 - params.nu) / gamma_fn(params.nu)
            vals = coef * sp**params.nu * kv(params.nu, sp)
        # BesselK underflows to 0 for large arguments, which is the right limit
        out[pos] = np.where(np.isfinite(vals), vals, 0.0)
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out


def correlation(h, params, squared=False):
    """Matern correlation, or its square when squared=True."""
    k = matern(h, params)
    return k * k if squared else k


def corr_matrix(locations, params, squared=False):
    """Dense correlation matrix over a set of locations.

    Parameters
    ----------
    locations : array (n, 2)
        Point coordinates.
    params : MaternParams
    squared : bool
        Evaluate K(h)^2 instead of K(h).

    Returns
    -------
    array (n, n) with unit diagonal. No jitter is added here; factorization
    sites add it.

    Raises
    ------
    DuplicateLocations
        If two rows coincide, which would make the matrix singular.
    """
    locations = np.asarray(locations, dtype=np.float64)
    diff = locations[:, None, :] - locations[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    n = d2.shape[0]
    off = ~np.eye(n, dtype=bool)
    if n > 1 and np.any(d2[off] == 0.0):
        i, j = np.argwhere((d2 == 0.0) & off)[0]
        raise DuplicateLocations(f"locations {i} and {j} coincide")
    return correlation(np.sqrt(d2), params, squared=squared)


def corr_table(max_sq, params, spacing=1.0, squared=False):
    """Correlation lookup table over integer squared grid offsets.

    Entry k holds K(spacing * sqrt(k)); kernels index it by
    (dx^2 + dy^2) for integer grid offsets (dx, dy), making table lookups
    exact rather than interpolated.
    """
    if max_sq < 0:
        raise InvalidParams("max_sq must be nonnegative")
    sq = np.arange(max_sq + 1, dtype=np.float64)
    return correlation(spacing * np.sqrt(sq), params, squared=squared)
