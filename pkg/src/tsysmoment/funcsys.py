"""Function systems g_0, ..., g_{n+1} on a compact interval [a, b]."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, PreconditionError
from .expr import ONE, Expression, as_expression, differentiate, div, evaluate

# Grid used to check positivity of a rescaling function (a pragmatic check,
# not a proof).
POSITIVITY_GRID = 10_001


@dataclass(frozen=True)
class FunctionSystem:
    """Constrained functions ``g_0..g_n`` followed by the objective ``g_{n+1}``.

    Systems used only for structure checks may omit the objective; in that
    case every function is treated as a constraint by the verification
    routines, and :attr:`n` is meaningless.
    """

    a: float
    b: float
    functions: tuple[Expression, ...]
    max_derivative_order: int | None = None

    def __post_init__(self):
        a, b = float(self.a), float(self.b)
        if not (math.isfinite(a) and math.isfinite(b)):
            raise PreconditionError("interval endpoints must be finite")
        if not a < b:
            raise PreconditionError(f"need a < b, got [{a}, {b}]")
        funcs = tuple(as_expression(f) for f in self.functions)
        if not funcs:
            raise PreconditionError("a function system needs at least one function")
        order = self.max_derivative_order
        if order is None:
            order = len(funcs) + 1
        if order < 0:
            raise PreconditionError("max_derivative_order must be nonnegative")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "functions", funcs)
        object.__setattr__(self, "max_derivative_order", int(order))
        # Fail early on functions that blow up on the interval.
        probe = np.linspace(a, b, 65)
        for f in funcs:
            evaluate(f, probe)

    @classmethod
    def from_strings(cls, a: float, b: float, sources: Sequence[str], **kw) -> "FunctionSystem":
        return cls(a, b, tuple(as_expression(s) for s in sources), **kw)

    @property
    def n(self) -> int:
        """Index of the last constrained function (objective is g_{n+1})."""
        return len(self.functions) - 2

    @property
    def size(self) -> int:
        return len(self.functions)

    @property
    def objective(self) -> Expression:
        return self.functions[-1]

    @property
    def constraints(self) -> tuple[Expression, ...]:
        return self.functions[:-1]

    def prefix(self, count: int) -> "FunctionSystem":
        """The initial segment made of the first ``count`` functions."""
        if not 1 <= count <= self.size:
            raise PreconditionError(f"prefix length {count} outside 1..{self.size}")
        return FunctionSystem(self.a, self.b, self.functions[:count], self.max_derivative_order)

    def with_objective(self, objective) -> "FunctionSystem":
        return FunctionSystem(
            self.a, self.b, self.constraints + (as_expression(objective),), self.max_derivative_order
        )

    def with_signs(self, signs: Sequence[int]) -> "FunctionSystem":
        from .expr import neg

        if len(signs) > self.size:
            raise PreconditionError("more signs than functions")
        funcs = list(self.functions)
        for i, s in enumerate(signs):
            if s not in (-1, 1):
                raise PreconditionError(f"sign entries must be +-1, got {s}")
            if s == -1:
                funcs[i] = neg(funcs[i])
        return FunctionSystem(self.a, self.b, tuple(funcs), self.max_derivative_order)

    def derivative(self, i: int, order: int) -> Expression:
        if order > self.max_derivative_order:
            raise PreconditionError(
                f"derivative order {order} exceeds configured maximum {self.max_derivative_order}"
            )
        return differentiate(self.functions[i], order)

    def values(self, x, count: int | None = None) -> np.ndarray:
        """Matrix ``V[i, j] = g_i(x_j)`` for the first ``count`` functions."""
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        funcs = self.functions if count is None else self.functions[:count]
        return np.vstack([evaluate(f, xs) for f in funcs])

    def derivative_values(self, x, order: int, count: int | None = None) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        count = self.size if count is None else count
        return np.vstack([evaluate(self.derivative(i, order), xs) for i in range(count)])

    def contains(self, x: float) -> bool:
        return self.a <= x <= self.b

    def __str__(self) -> str:
        body = ", ".join(str(f) for f in self.functions)
        return f"({body}) on [{self.a!r}, {self.b!r}]"


def moment_vector(values, sys: FunctionSystem | None = None) -> np.ndarray:
    """Validate a moment vector ``c``; its length must be the number of constraints."""
    c = np.asarray(values, dtype=float).ravel()
    if not np.all(np.isfinite(c)):
        raise PreconditionError("moments must be finite reals")
    if sys is not None and len(c) != sys.size - 1:
        raise PreconditionError(
            f"{len(c)} moments given for {sys.size - 1} constrained functions"
        )
    return c


def positivity_sample(a: float, b: float, count: int = POSITIVITY_GRID) -> np.ndarray:
    return np.linspace(a, b, count)


def rescale(sys: FunctionSystem, h) -> FunctionSystem:
    """Divide every function by a positive weight ``h``.

    A measure ``mu`` for the original system corresponds to ``nu`` with
    ``d nu = h d mu`` for the rescaled one; moments and objective values
    are unchanged. Positivity of ``h`` is checked on a dense uniform grid
    including both endpoints.
    """
    h = as_expression(h)
    xs = positivity_sample(sys.a, sys.b)
    try:
        hv = evaluate(h, xs)
    except DomainError as exc:
        raise PreconditionError(f"rescaling function is not defined on [a, b]: {exc}") from exc
    bad = np.flatnonzero(hv <= 0)
    if bad.size:
        x0 = float(xs[bad[0]])
        raise PreconditionError(f"rescaling function is not positive: h({x0!r}) = {hv[bad[0]]!r}")
    if h == ONE:
        return sys
    return FunctionSystem(sys.a, sys.b, tuple(div(f, h) for f in sys.functions), sys.max_derivative_order)
