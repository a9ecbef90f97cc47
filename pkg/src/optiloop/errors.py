class OptiLoopError(Exception):
    """Base class for all errors raised by this package."""


class ModelError(OptiLoopError, ValueError):
    """Inconsistent logical/physical graph or energy model."""


class CyclicLogicalGraph(ModelError):
    pass


class InconsistentPolicy(OptiLoopError, ValueError):
    pass


class NumericalFailure(OptiLoopError):
    pass


class BudgetExceeded(OptiLoopError):
    """Branch-and-bound hit its node limit.

    ``report`` holds the best incumbent found so far (``proven`` is False).
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InfeasibleDemand(OptiLoopError):
    """No configuration of the network can carry the demand."""


class NonConvergence(OptiLoopError):
    pass


class SchemaViolation(OptiLoopError, ValueError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class DisconnectedTopology(OptiLoopError):
    pass
