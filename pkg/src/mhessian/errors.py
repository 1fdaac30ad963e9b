"""Exception types shared across the package."""


class MHessianError(Exception):
    """Base class for all library errors."""


class DimensionMismatchError(MHessianError, ValueError):
    """Operands have incompatible dimensions."""


class NotHermitianError(MHessianError, ValueError):
    """A matrix expected to be Hermitian (or real symmetric) is not."""


class NotPositiveDefiniteError(MHessianError, ValueError):
    """A metric matrix is not positive definite at the working threshold."""


class ConeBoundaryError(MHessianError, ValueError):
    """A spectrum lies on, or outside, the admissible eigenvalue-sum cone."""


class HypothesisViolatedError(MHessianError, ValueError):
    """The curvature hypothesis required by a bound regime does not hold."""


class StencilError(MHessianError, ValueError):
    """A finite-difference stencil leaves the grid domain."""


class NewtonDiverged(MHessianError, RuntimeError):
    """Newton iteration failed to reduce the residual below tolerance."""


class ConeEscape(MHessianError, RuntimeError):
    """No admissible damping step keeps the iterate strictly inside the cone."""


class IllPosedRHS(MHessianError, ValueError):
    """A right-hand side violated its positivity/monotonicity invariants."""


class ChiNotPositive(MHessianError, ValueError):
    """The background form is not strictly m-positive for the metric."""


class DirichletFailure(MHessianError, RuntimeError):
    """A Dirichlet sub-solve inside a pipeline failed."""

    def __init__(self, index, cause):
        super().__init__(f"Dirichlet solve at schedule index {index} failed: {cause}")
        self.index = index
        self.cause = cause


class ScheduleExhausted(MHessianError, RuntimeError):
    """No remaining schedule index satisfies the monotone envelope condition."""


class TargetNotAdmissible(MHessianError, ValueError):
    """The target function fails its discrete cone admissibility test."""


class ConfigError(MHessianError, ValueError):
    """A configuration file failed to parse or validate."""
