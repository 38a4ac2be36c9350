"""Exception types raised across the package.

Every error the library raises deliberately derives from TensorFieldError,
so callers (and the CLI) can distinguish our diagnostics from genuine bugs.
"""


class TensorFieldError(Exception):
    """Base class for all package errors."""


class InvalidParams(TensorFieldError):
    """A parameter value is outside its legal range (rho <= 0, nu <= 0, ...)."""


class NotPositiveDefinite(TensorFieldError):
    """A matrix required to be symmetric positive definite is not."""


class DegenerateTensor(TensorFieldError):
    """A tensor's eigenvalues are all numerically zero where positivity is required."""


class DuplicateLocations(TensorFieldError):
    """Two rows of a location set coincide, which would make a correlation matrix singular."""


class CholeskyFailure(TensorFieldError):
    """A dense covariance factorization failed even after jitter."""


class InvalidQ(TensorFieldError):
    """Vecchia neighbor count q outside [0, n-1]."""


class PlanMismatch(TensorFieldError):
    """A field's length does not match the Vecchia plan it is evaluated under."""


class NonpositiveScale(TensorFieldError):
    """A per-site scale field contains zeros, negatives, or non-finite values."""


class InvalidDof(TensorFieldError):
    """Wishart degrees of freedom below the dimension, or not an integer."""


class SingularArgument(TensorFieldError):
    """Characteristic-function argument makes I - 2i T (R (x) Sigma/m) singular."""


class DimensionMismatch(TensorFieldError):
    """Array shapes disagree with the declared grid, subject count, or component count."""


class RankDeficientDesign(TensorFieldError):
    """Design matrix has linearly dependent columns; per-voxel OLS is not identified."""


class NonFiniteLikelihood(TensorFieldError):
    """A log posterior evaluation produced NaN or infinity."""


class MissingTruth(TensorFieldError):
    """Chain scoring requested against a truth record lacking the needed entries."""


class DegenerateFA(TensorFieldError):
    """Too many fractional anisotropy values sit at the logit boundary to fit the baseline."""


class MalformedData(TensorFieldError):
    """A data file violates the tensor/design CSV contract.

    Carries enough context for the CLI to report the first offending row.
    """

    def __init__(self, message, subject=None, voxel=None, row=None):
        super().__init__(message)
        self.subject = subject
        self.voxel = voxel
        self.row = row
