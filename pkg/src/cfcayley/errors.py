"""Exception hierarchy shared across the package.

Usage errors (bad shapes, bad parameters, wrong call order) derive from
``ValueError``; failures of the numerics themselves derive from
``NumericalError`` so the CLI can map them to distinct exit codes.
"""


class ShapeError(ValueError):
    """Operand dimensions do not agree."""


class ParameterError(ValueError):
    """A physical or numerical parameter is outside its admissible range."""


class UsageError(ValueError):
    """A routine was called in a way its contract does not allow."""


class StateError(RuntimeError):
    """An object is not in the state required for the requested operation."""


class NumericalError(RuntimeError):
    """Base class for failures of the numerical method itself."""


class SingularMatrixError(NumericalError):
    def __init__(self, message, time=None):
        if time is not None:
            message = f"{message} (step time t={time:.17g})"
        super().__init__(message)
        self.time = time


class StaleFactorizationError(StateError):
    """A solve was requested against a factorization that has been replaced."""


class PropagationError(NumericalError):
    def __init__(self, message, step=None, iteration=None):
        where = []
        if iteration is not None:
            where.append(f"iteration {iteration}")
        if step is not None:
            where.append(f"step {step}")
        if where:
            message = f"{message} [{', '.join(where)}]"
        super().__init__(message)
        self.step = step
        self.iteration = iteration


class MonotonicityError(NumericalError):
    """The Krotov cost increased between iterations."""
