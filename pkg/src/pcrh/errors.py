"""Exception hierarchy shared by all pcrh modules."""


class PcrhError(Exception):
    """Base class for every error raised by this package."""


class DomainError(PcrhError, ValueError):
    pass


class NotPositiveDefinite(PcrhError, ValueError):
    pass


class DegenerateInput(PcrhError, ValueError):
    pass


class ParseError(PcrhError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(PcrhError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyCohort(PcrhError, ValueError):
    pass


class RankDeficient(PcrhError, ValueError):
    pass


class ConvergenceFailure(PcrhError, RuntimeError):
    def __init__(self, message, iterations=None, grad_norm=None):
        self.iterations = iterations
        self.grad_norm = grad_norm
        super().__init__(message)


class NotNested(PcrhError, ValueError):
    pass


class SingularHessian(PcrhError, ArithmeticError):
    pass
