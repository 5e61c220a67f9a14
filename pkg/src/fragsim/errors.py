"""Exception types shared across the package."""


class FragsimError(Exception):
    """Base class for all package errors."""


class ModelValidationError(FragsimError, ValueError):
    """A rate model or kernel violates a structural constraint."""


class KernelConservationError(ModelValidationError):
    """The fragmentation kernel does not conserve mass within tolerance."""


class MultiplicityError(FragsimError):
    """The minimum of the loss-rate sequence is not attained at a unique index."""


class EigenvectorOverflowError(FragsimError, OverflowError):
    """An eigenvector recursion left the representable range."""


class IntegrationError(FragsimError):
    """Adaptive time stepping could not satisfy the error test.

    The last accepted state is kept on the exception so callers can inspect
    how far the integration got.
    """

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


class DenseLimitError(FragsimError):
    """A dense computation was requested above the supported size."""


class ScenarioError(FragsimError):
    """A scenario file could not be parsed or failed validation."""
