"""Exception hierarchy shared by the numerical modules."""


class NessLabError(Exception):
    """Base class for all errors raised by ness_lab."""


class DomainViolation(NessLabError, ValueError):
    """A density left the window on which the model is declared valid."""

    def __init__(self, message, component=None, value=None):
        super().__init__(message)
        self.component = component
        self.value = value


class PhaseWindowError(NessLabError, ValueError):
    """Entropy Hessian singular or not negative definite."""


class ModelError(NessLabError, ValueError):
    """The model cannot supply a well-defined noise (e.g. [KJ]_sym not PSD)."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class PreconditionError(NessLabError, ValueError):
    """An input object is not in the state an operation requires."""


class SolverError(NessLabError, RuntimeError):
    """An iterative solve failed to converge."""

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class ConfigError(NessLabError, ValueError):
    """Run configuration could not be parsed or validated."""
