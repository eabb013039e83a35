"""Tchebycheff-system verification and sharp generalized-moment bounds."""

from .errors import (
    DomainError,
    HypothesisNotVerified,
    InfeasibleError,
    NoConvergenceError,
    ParseError,
    PreconditionError,
    TsysError,
)
from .expr import Expression, differentiate, evaluate, parse, to_string
from .funcsys import FunctionSystem, moment_vector, rescale

__version__ = "0.1.0"
