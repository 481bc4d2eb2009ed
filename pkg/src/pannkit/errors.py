"""Exception hierarchy for pannkit.

Every error raised by the library derives from PannkitError so callers (and
the CLI exit-code mapping) can distinguish library failures from bugs.
"""


class PannkitError(Exception):
    """Base class for all pannkit errors."""


class ConfigError(PannkitError):
    """Invalid or inconsistent experiment configuration."""


class OutOfBounds(PannkitError):
    """A parameter vector violates its box bounds."""


class ShapeMismatch(PannkitError):
    """Array arguments have inconsistent dimensions."""


class SingularDiscretization(PannkitError):
    """(I - A*dt) is numerically singular (reciprocal condition < threshold)."""


class StepTooLarge(PannkitError):
    """||A*dt|| >= 1, so the Neumann bound does not apply.

    Carries the largest admissible step size for the supplied system.
    """

    def __init__(self, message: str, dt_max: float):
        super().__init__(message)
        self.dt_max = dt_max


class NonFinite(PannkitError):
    """A state, loss, or gradient overflowed or became NaN."""


class InvalidSpec(PannkitError):
    """A modulation spec violates its invariants."""


class EmptyDataset(PannkitError):
    """A dataset operation received no segments or no steps."""


class MissingDerivatives(PannkitError):
    """The model does not provide the derivative tensors the operation needs."""


class DegenerateDomain(PannkitError):
    """Monte-Carlo sampling produced no usable (non-coincident) pairs."""


class EmptyTrace(PannkitError):
    """A trace operation received a trace with no epochs."""


class NonPositiveBound(PannkitError):
    """A Lipschitz constant or range that must be positive is not."""


class BoundViolation(PannkitError):
    """An empirical estimate exceeded its theoretical bound beyond tolerance."""


class DivergentBound(PannkitError):
    """The regret bound is undefined (gamma >= 1 or lambda >= 1)."""
