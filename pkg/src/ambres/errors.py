"""Exception hierarchy shared across the package."""


class AmbresError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(AmbresError):
    """Malformed input: bad file, bad scenario field, inconsistent sizes."""


class DimensionMismatch(ValidationError):
    """Vector/matrix sizes do not agree."""


class NotPositiveDefinite(AmbresError):
    """A Cholesky pivot fell at or below the definiteness tolerance."""


class UnimodularOverflow(AmbresError):
    """A unimodular transform entry left the 64-bit range."""


class ReductionFailed(AmbresError):
    """Basis reduction did not converge or violated its own invariants."""


class CapacityExceeded(AmbresError):
    """An enumeration would exceed the caller-supplied point cap."""


class NoRoot(AmbresError):
    """The one-dimensional posterior equation has no root in (0, 1)."""


class InvalidProposal(AmbresError):
    """Proposal form violates positive-definiteness of M-tilde or 2M - M-tilde."""


class EmptyNeighborSet(AmbresError):
    """Shifted-center estimator was given no usable neighbor centers."""


class OptimizationDiverged(AmbresError):
    """Proposal optimization made no progress within the iteration budget."""


class NonStationary(AmbresError):
    """AR(1) coefficient outside (-1, 1)."""


class DegenerateModel(AmbresError):
    """Marginalized information matrix has unexpected rank."""
