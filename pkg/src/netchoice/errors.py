"""Exception types shared across the package."""


class NetchoiceError(Exception):
    """Base class for all package-specific errors."""


class ModelFormatError(NetchoiceError):
    """The model (or knowledge/observation) document violates its schema or invariants."""


class AssumptionError(NetchoiceError):
    """Collective decisiveness fails, so the closed-form solution is undefined."""

    def __init__(self, message: str, unreachable: tuple[str, ...] = ()):
        super().__init__(message)
        self.unreachable = unreachable


class ConvergenceError(NetchoiceError):
    """An iterative routine exhausted its iteration budget."""


class StaleCacheError(NetchoiceError):
    """A factorization cache was presented for a different ambassador set."""


class StructureError(NetchoiceError):
    """A parametric model does not have the structure a closed form requires."""


class InfeasibleError(NetchoiceError):
    """A constraint system admits no solution."""


class SimplexBreakdownError(NetchoiceError):
    """The simplex solver hit a pivot below its numerical tolerance."""
