"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input lies outside the domain of an operation (off-manifold point,
    non-tangent vector, zero vector, empty sample, ...)."""


class NotApplicable(ValueError):
    """The operation is not defined for this catalog entry."""


class IntegrationError(RuntimeError):
    """A path produced non-finite values or a vanishing derivative vector."""

    def __init__(self, message, time=None):
        super().__init__(message if time is None else f"{message} (t={time:.6g})")
        self.time = time


class EstimationError(RuntimeError):
    """An ensemble estimate cannot be formed (e.g. every path censored)."""
