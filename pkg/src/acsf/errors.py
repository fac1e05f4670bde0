"""Exception hierarchy shared by all modules."""


class AcsfError(Exception):
    """Base class for errors raised by the package."""


class DegenerateCurveError(AcsfError):
    """A curve has a zero-length element (or a zero tangent where one is needed)."""

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class DomainError(AcsfError, ValueError):
    """A point lies outside the admissible domain of a density or metric."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class SingularSystemError(AcsfError):
    """A linear system could not be solved because it is (numerically) singular."""


class NewtonConvergenceError(AcsfError):
    """Newton's method did not reach the requested residual tolerance."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class StepError(AcsfError):
    """A time step failed; wraps the underlying error together with the step index."""

    def __init__(self, step, cause):
        super().__init__(f"step {step} failed: {cause}")
        self.step = step
        self.cause = cause
