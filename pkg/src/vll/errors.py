"""Exception hierarchy shared across modules."""


class VllError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(VllError):
    pass


class DegenerateTaskError(VllError):
    pass


class InvalidConfigError(VllError):
    pass


class DivergenceError(VllError):
    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")


class ShapeMismatchError(VllError):
    pass


class MemoryBudgetError(VllError):
    pass


class UndefinedAlignmentError(VllError):
    pass


class BasisMismatchError(VllError):
    pass


class DegenerateKernelError(VllError):
    pass


class InsufficientReplicationError(VllError):
    pass


class SolverError(VllError):
    def __init__(self, message: str, residual: float | None = None):
        self.residual = residual
        super().__init__(message)


class SingularSystemError(VllError):
    def __init__(self, message: str, cond: float | None = None):
        self.cond = cond
        super().__init__(message)


class NumericalError(VllError):
    pass
