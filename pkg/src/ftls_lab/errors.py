"""Exception types shared across the package."""


class FtlsError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(FtlsError, ValueError):
    """A model ingredient or experiment spec violates its contract.

    Carries the full list of problems so callers can report them all at once.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DomainError(FtlsError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NoRootError(FtlsError, ValueError):
    """A bracketing root search found no sign change."""


class OutOfRangeError(FtlsError, ValueError):
    """A flux level exceeds the attainable range of the flux function."""


class IncompatibleAsymptotesError(FtlsError, ValueError):
    """The two asymptotic densities do not carry the same flux."""


class NoProfileError(FtlsError, ValueError):
    """The requested subcase admits no stationary wave profile."""


class AnchorError(FtlsError, ValueError):
    """Anchor value outside the admissible range for the subcase."""


class BlowUpError(FtlsError, RuntimeError):
    """Backward marching left the physical density band (0, 1)."""


class NonConvergenceError(FtlsError, RuntimeError):
    """An iterative solver failed to meet its tolerance."""

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = residual_history or []


class StepSizeError(FtlsError, ValueError):
    """Time step violates the car-length safety bound."""


class CoverageError(FtlsError, ValueError):
    """A sampled car chain is too short to cover the averaging window."""


class WindowTooSmallError(FtlsError, ValueError):
    """The truncated car window does not span the required road segment."""


class GridMismatchError(FtlsError, ValueError):
    """Two grid functions do not share the same grid."""
