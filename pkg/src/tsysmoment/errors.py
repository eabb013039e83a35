"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class TsysError(Exception):
    """Base class for every error raised by this package."""


class ParseError(TsysError):
    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)


class DomainError(TsysError, ArithmeticError):
    """Evaluation left the real domain of an expression (log(0), 1/0, ...)."""


class PreconditionError(TsysError, ValueError):
    pass


class InfeasibleError(TsysError):
    def __init__(self, message: str, residual: float | None = None):
        self.residual = residual
        super().__init__(message)


class UnboundedError(TsysError):
    pass


class NoCertificateError(TsysError):
    def __init__(self, message: str, margin: float | None = None):
        self.margin = margin
        super().__init__(message)


class NotMSystemError(TsysError):
    def __init__(self, message: str, level: int, verdict=None):
        self.level = level
        self.verdict = verdict
        super().__init__(message)


class HypothesisNotVerified(TsysError):
    def __init__(self, message: str, verdicts=()):
        self.verdicts = tuple(verdicts)
        super().__init__(message)


class NoConvergenceError(TsysError):
    def __init__(self, message: str, best=None, residual: float | None = None):
        self.best = best
        self.residual = residual
        super().__init__(message)


class SingularJacobianError(TsysError):
    pass
