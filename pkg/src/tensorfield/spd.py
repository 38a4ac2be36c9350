"""Operations on symmetric positive definite 3x3 matrices.

Symmetric matrices travel through the package packed as the lower triangle in
row order, ``(a11, a21, a22, a31, a32, a33)``, so a field of tensors is an
array of shape ``(..., 6)``. ``to_matrix`` / ``from_matrix`` convert to and
from full ``(..., 3, 3)`` form. All functions broadcast over leading axes.
"""

import numpy as np

from . import kernels
from .errors import DegenerateTensor, DimensionMismatch, NotPositiveDefinite

# packed index -> (row, col) of the lower triangle, row-major
PACKED_INDEX = ((0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2))

# Frobenius weights: off-diagonal packed entries represent two matrix entries
FROBENIUS_WEIGHTS = np.array([1.0, 2.0, 1.0, 2.0, 2.0, 1.0])


def _as_packed(a):
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] != 6:
        raise DimensionMismatch(f"expected packed shape (..., 6), got {a.shape}")
    return a


def to_matrix(a):
    """Expand packed lower triangles (..., 6) to full symmetric (..., 3, 3)."""
    a = _as_packed(a)
    out = np.empty(a.shape[:-1] + (3, 3))
    for c, (i, j) in enumerate(PACKED_INDEX):
        out[..., i, j] = a[..., c]
        out[..., j, i] = a[..., c]
    return out


def from_matrix(m):
    """Pack matrices (..., 3, 3) into lower-triangle (..., 6) form.

    Only the lower triangle is read, so this also packs lower-triangular
    Cholesky factors unchanged.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.shape[-2:] != (3, 3):
        raise DimensionMismatch(f"expected shape (..., 3, 3), got {m.shape}")
    cols = [m[..., i, j] for (i, j) in PACKED_INDEX]
    return np.stack(cols, axis=-1)


def cholesky_lower(a):
    """Lower Cholesky factor of packed SPD matrices.

    Parameters
    ----------
    a : array (..., 6)
        Packed symmetric matrices.

    Returns
    -------
    array (..., 6)
        Packed lower-triangular factors T with T T' = A and positive diagonal.

    Raises
    ------
    NotPositiveDefinite
        If any input has a Cholesky pivot at or below 1e-14 times its largest
        diagonal entry.
    """
    a = _as_packed(a)
    flat = a.reshape(-1, 6)
    t, ok = kernels.chol3_batch(np.ascontiguousarray(flat))
    if not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        raise NotPositiveDefinite(
            f"matrix at flat index {bad} is not positive definite: {flat[bad]}"
        )
    return t.reshape(a.shape)


def compose(t):
    """Form A = T T' from packed lower-triangular factors (inverse of cholesky_lower)."""
    t = _as_packed(t)
    flat = np.ascontiguousarray(t.reshape(-1, 6))
    return kernels.compose3_batch(flat).reshape(t.shape)


def eigenvalues(a):
    """Eigenvalues of packed symmetric matrices, descending, shape (..., 3).

    Uses the closed-form trigonometric solution for the symmetric 3x3
    characteristic polynomial, falling back to LAPACK Householder
    tridiagonalization on near-degenerate spectra.
    """
    a = _as_packed(a)
    flat = np.ascontiguousarray(a.reshape(-1, 6))
    return kernels.eigvals3_batch(flat).reshape(a.shape[:-1] + (3,))


def is_spd(a, tol=0.0):
    """Boolean mask (...,) of which packed matrices are positive definite."""
    a = _as_packed(a)
    flat = np.ascontiguousarray(a.reshape(-1, 6))
    _, ok = kernels.chol3_batch(flat)
    if tol > 0.0:
        vals = kernels.eigvals3_batch(flat)
        ok = ok & (vals[:, 2] > tol)
    return ok.reshape(a.shape[:-1])


def fractional_anisotropy(a):
    """Fractional anisotropy of packed symmetric matrices.

    FA = sqrt(1/2) * sqrt(sum of squared eigenvalue gaps) / sqrt(sum of
    squared eigenvalues); 0 for isotropic tensors, -> 1 as one eigenvalue
    dominates.

    Raises
    ------
    DegenerateTensor
        If all three eigenvalues of some input are below 1e-14 in magnitude.
    """
    a = _as_packed(a)
    flat = np.ascontiguousarray(a.reshape(-1, 6))
    fa = kernels.fa3_batch(flat)
    if np.isnan(fa).any():
        bad = int(np.flatnonzero(np.isnan(fa))[0])
        raise DegenerateTensor(f"all eigenvalues numerically zero at flat index {bad}")
    return fa.reshape(a.shape[:-1])


def frobenius_sq_diff(a, b):
    """Squared Frobenius distance ||A - B||_F^2 between packed symmetric matrices."""
    a = _as_packed(a)
    b = _as_packed(b)
    d = a - b
    return np.einsum("...c,c->...", d * d, FROBENIUS_WEIGHTS)
