"""Exception hierarchy shared by all modules."""


class AdasgoError(Exception):
    """Base class for every error raised by the package."""


class UnsupportedLevel(AdasgoError, ValueError):
    pass


class DimensionMismatch(AdasgoError, ValueError):
    pass


class NotADownset(AdasgoError, ValueError):
    pass


class NonFiniteValue(AdasgoError, ArithmeticError):
    pass


class BudgetExceeded(AdasgoError, RuntimeError):
    """Raised when a quadrature would exceed its evaluation budget.

    ``partial`` carries whatever result was available when the budget ran out
    (``None`` for non-adaptive rules, which check the budget up front).
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class DomainViolation(AdasgoError, ValueError):
    pass


class SingularHessian(AdasgoError, ArithmeticError):
    def __init__(self, message, kappa=float("inf")):
        super().__init__(message)
        self.kappa = kappa


class NoProgress(AdasgoError, RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class LineSearchFailed(AdasgoError, RuntimeError):
    pass


class MissingEstimate(AdasgoError, ValueError):
    pass


class DegenerateFit(AdasgoError, ValueError):
    pass


class SingularSystem(AdasgoError, ArithmeticError):
    pass


class UnknownProblem(AdasgoError, KeyError):
    pass


class UnknownMethod(AdasgoError, KeyError):
    pass
