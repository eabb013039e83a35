"""Grid discretisation of the moment problem, solved with the in-repo simplex.

Restricting measures to a finite grid turns the extremal problem into an
LP whose basic optimal solutions carry at most ``n + 1`` atoms. The grid
optimum is a lower bound for the continuum maximum (upper bound for the
minimum), and it approaches the continuum value as the grid is refined.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError, PreconditionError, UnboundedError
from .funcsys import FunctionSystem, moment_vector
from .simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, LPResult, simplex

DEFAULT_GRID = 4097
LADDER = (1025, 4097, 16385)


class Sense(str, enum.Enum):
    MAX = "max"
    MIN = "min"

    @classmethod
    def parse(cls, value) -> "Sense":
        if isinstance(value, Sense):
            return value
        return cls(str(value).lower())


@dataclass(frozen=True)
class Grid:
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise PreconditionError("a grid needs at least two nodes")
        if not np.all(np.diff(nodes) > 0):
            raise PreconditionError("grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def a(self) -> float:
        return float(self.nodes[0])

    @property
    def b(self) -> float:
        return float(self.nodes[-1])

    def __len__(self) -> int:
        return self.nodes.size

    def union(self, points) -> "Grid":
        pts = np.asarray(points, dtype=float)
        pts = pts[(pts >= self.a) & (pts <= self.b)]
        return Grid(np.union1d(self.nodes, pts))


def make_grid(a: float, b: float, N: int) -> Grid:
    """Uniform grid of ``N`` nodes with both endpoints included.

    Nodes are ``a + (b - a) * i / (N - 1)``; when ``N - 1`` is a power of two
    the ladder ``2^k + 1`` produces bitwise-nested grids.
    """
    if N < 2:
        raise PreconditionError("grid size must be at least 2")
    if not a < b:
        raise PreconditionError(f"need a < b, got [{a}, {b}]")
    t = np.arange(N, dtype=float) / (N - 1)
    nodes = a + (b - a) * t
    nodes[-1] = b
    return Grid(nodes)


@dataclass(frozen=True)
class AtomicMeasure:
    """Finitely supported nonnegative measure; nodes strictly increasing."""

    nodes: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        nodes = tuple(float(x) for x in self.nodes)
        weights = tuple(float(w) for w in self.weights)
        if len(nodes) != len(weights):
            raise PreconditionError("nodes and weights differ in length")
        if any(w <= 0 for w in weights):
            raise PreconditionError("atom weights must be strictly positive")
        if any(x1 <= x0 for x0, x1 in zip(nodes, nodes[1:])):
            raise PreconditionError("atom nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_arrays(cls, nodes, weights, drop_below: float = 0.0) -> "AtomicMeasure":
        """Build a measure, merging duplicate nodes and dropping weights <= ``drop_below``."""
        nodes = np.asarray(nodes, dtype=float)
        weights = np.asarray(weights, dtype=float)
        keep = weights > drop_below
        nodes, weights = nodes[keep], weights[keep]
        order = np.argsort(nodes, kind="stable")
        merged: dict[float, float] = {}
        for x, w in zip(nodes[order], weights[order]):
            merged[float(x)] = merged.get(float(x), 0.0) + float(w)
        return cls(tuple(merged), tuple(merged.values()))

    @classmethod
    def zero(cls) -> "AtomicMeasure":
        return cls((), ())

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def mass(self) -> float:
        return float(sum(self.weights))

    def moments(self, sys: FunctionSystem, count: int | None = None) -> np.ndarray:
        if not self.nodes:
            rows = sys.size if count is None else count
            return np.zeros(rows)
        return sys.values(self.nodes, count) @ np.asarray(self.weights)

    def integrate(self, f) -> float:
        from .expr import evaluate

        if not self.nodes:
            return 0.0
        return float(np.dot(evaluate(f, np.asarray(self.nodes)), self.weights))

    def pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.nodes, self.weights))

    def to_record(self) -> list[list[float]]:
        return [[x, w] for x, w in self.pairs()]


@dataclass(frozen=True)
class SupportIndex:
    ell_minus: int
    ell: int
    ell_plus: int

    @property
    def index(self) -> int:
        return self.ell_minus + 2 * self.ell + self.ell_plus

    def to_record(self) -> dict:
        return {"ell_minus": self.ell_minus, "ell": self.ell, "ell_plus": self.ell_plus,
                "index": self.index}


def support_index(m: AtomicMeasure, a: float, b: float, tol: float = 0.0) -> SupportIndex:
    """Atoms at ``a`` and ``b`` count once, interior atoms twice."""
    if any(x < a - tol or x > b + tol for x in m.nodes):
        raise PreconditionError("atoms must lie in [a, b]")
    at_a = sum(1 for x in m.nodes if abs(x - a) <= tol)
    at_b = sum(1 for x in m.nodes if abs(x - b) <= tol)
    return SupportIndex(at_a, len(m.nodes) - at_a - at_b, at_b)


@dataclass
class OracleResult:
    sense: Sense
    value: float
    measure: AtomicMeasure
    duals: np.ndarray  # touching-polynomial coefficients lambda
    phase1_residual: float
    iterations: int
    grid_size: int

    def __iter__(self):
        yield self.value
        yield self.measure

    def to_record(self) -> dict:
        return {
            "grid_size": self.grid_size,
            "sense": self.sense.value,
            "value": self.value,
            "atoms": self.measure.to_record(),
            "dual_variables": [float(v) for v in self.duals],
            "phase1_residual": self.phase1_residual,
            "iterations": self.iterations,
        }


def _scaled_residual(sys, c, m: AtomicMeasure) -> np.ndarray:
    r = m.moments(sys, len(c)) - c
    return np.abs(r) / (1.0 + np.abs(c))


def solve_grid_lp(sys: FunctionSystem, c, grid: Grid, sense="max") -> OracleResult:
    """Optimise ``sum_j w_j g_{n+1}(x_j)`` over grid measures matching ``c``.

    The returned measure is a basic optimal solution, so it has at most
    ``n + 1`` atoms. ``duals`` holds ``lambda`` with
    ``sum lambda_i g_i - g_{n+1}`` nonnegative on the grid for ``max`` and
    nonpositive for ``min``, vanishing on the support.
    """
    sense = Sense.parse(sense)
    c = moment_vector(c, sys)
    _check_grid(sys, grid)
    G = sys.values(grid.nodes)
    A, obj = G[:-1], G[-1]
    cost = -obj if sense is Sense.MAX else obj
    res = simplex(A, c, cost)
    if res.status == INFEASIBLE:
        raise InfeasibleError(
            f"no grid measure matches the moments (phase-1 residual {res.phase1_residual:.3e})",
            residual=res.phase1_residual,
        )
    if res.status == UNBOUNDED:
        raise UnboundedError("grid LP is unbounded; no positivity certificate for the constraints")
    measure = AtomicMeasure.from_arrays(grid.nodes, res.x)
    n = sys.size - 2
    if len(measure) > n + 1:
        raise AssertionError(f"basic solution with {len(measure)} atoms exceeds n+1 = {n + 1}")
    resid = _scaled_residual(sys, c, measure)
    if np.any(resid > 1e-9):
        raise AssertionError(f"grid LP solution violates moments: {resid.max():.3e}")
    duals = -res.duals if sense is Sense.MAX else res.duals
    value = measure.integrate(sys.objective)
    return OracleResult(sense, value, measure, duals, res.phase1_residual, res.iterations, len(grid))


def _check_grid(sys: FunctionSystem, grid: Grid):
    if grid.a < sys.a or grid.b > sys.b:
        raise PreconditionError("grid leaves the interval of the function system")


def merge_close_atoms(sys, c, m: AtomicMeasure, tol: float = 1e-7) -> AtomicMeasure:
    """Merge neighbouring atoms while the moments stay matched to ``tol``.

    On the boundary of the cone the LP may split one atom over two nearby
    nodes at the cost of a roundoff-sized moment error; merging (mass at the
    weighted mean, endpoints kept in place) undoes that split.
    """
    c = np.asarray(c, dtype=float)
    nodes, weights = list(m.nodes), list(m.weights)
    while len(nodes) > 1:
        gaps = np.diff(nodes)
        k = int(np.argmin(gaps))
        w = weights[k] + weights[k + 1]
        if nodes[k] == sys.a:
            x = sys.a
        elif nodes[k + 1] == sys.b:
            x = sys.b
        else:
            x = (nodes[k] * weights[k] + nodes[k + 1] * weights[k + 1]) / w
        trial_nodes = nodes[:k] + [x] + nodes[k + 2:]
        trial_weights = weights[:k] + [w] + weights[k + 2:]
        trial = AtomicMeasure(tuple(trial_nodes), tuple(trial_weights))
        if np.max(_scaled_residual(sys, c, trial)) > tol:
            break
        nodes, weights = trial_nodes, trial_weights
    return AtomicMeasure(tuple(nodes), tuple(weights))


def oracle_ladder(sys, c, sense="max", sizes=LADDER) -> list[OracleResult]:
    return [solve_grid_lp(sys, c, make_grid(sys.a, sys.b, N), sense) for N in sizes]


# ---------------------------------------------------------- cone position

class Classification(str, enum.Enum):
    STRICT = "StrictlyPositive"
    SINGULAR = "SingularlyPositive"
    INFEASIBLE = "Infeasible"


@dataclass
class ConePosition:
    classification: Classification
    margin: float  # coordinate-ball radius of c inside the grid moment cone
    tolerance: float
    grid: Grid
    measure: AtomicMeasure | None = None
    index: SupportIndex | None = None
    phase1_residual: float = 0.0
    refinements: int = 0
    radii: list[float] = field(default_factory=list)

    @property
    def strict(self) -> bool:
        return self.classification is Classification.STRICT

    @property
    def singular(self) -> bool:
        return self.classification is Classification.SINGULAR

    def to_record(self) -> dict:
        rec = {
            "classification": self.classification.value,
            "margin": self.margin,
            "tolerance": self.tolerance,
            "grid_size": len(self.grid),
            "refinements": self.refinements,
        }
        if self.measure is not None:
            rec["evidence_atoms"] = self.measure.to_record()
        if self.index is not None:
            rec["support_index"] = self.index.to_record()
        return rec


def _phase1(A, c) -> LPResult:
    return simplex(A, c, np.zeros(A.shape[1]))


def refine_to_feasibility(sys, c, grid: Grid, max_rounds: int = 40, zoom: int = 8,
                          near: float = 1e-3) -> tuple[Grid, LPResult, int]:
    """Locally refine ``grid`` around the phase-1 support until ``c`` becomes feasible.

    Moment vectors on the boundary of the cone are represented by a unique
    measure whose atoms are generally off-grid; inserting nodes around the
    best-fitting atoms recovers them. Refinement continues past the
    feasibility threshold until the residual is at roundoff level, so that
    boundary measures are not split across neighbouring nodes. Refinement stops once the phase-1
    residual stops shrinking, so genuinely infeasible vectors are still
    rejected.
    """
    c = np.asarray(c, dtype=float)
    A = sys.values(grid.nodes, len(c))
    res = _phase1(A, c)
    rounds = 0
    scale = max(float(np.sum(np.abs(c))), 1e-300)
    stalls = 0
    target = 1e-14 * scale
    while (res.status == INFEASIBLE or res.phase1_residual > target) and rounds < max_rounds \
            and res.phase1_residual <= near * scale:
        nodes = grid.nodes
        support = np.flatnonzero(res.x > 0)
        if support.size == 0:
            break
        new = []
        for j in support:
            lo = nodes[j - 1] if j > 0 else nodes[j]
            hi = nodes[j + 1] if j + 1 < nodes.size else nodes[j]
            h = min(nodes[j] - lo if j > 0 else np.inf, hi - nodes[j] if j + 1 < nodes.size else np.inf)
            if h < 4e-16 * max(1.0, abs(nodes[j])):
                continue
            step = h / zoom
            new.extend(nodes[j] + step * np.arange(-zoom + 1, zoom))
        if not new:
            break
        grid = grid.union(new)
        A = sys.values(grid.nodes, len(c))
        prev = res.phase1_residual
        res = _phase1(A, c)
        rounds += 1
        if res.phase1_residual > 0.5 * prev:
            stalls += 1
            if stalls >= 3:
                break
        else:
            stalls = 0
    return grid, res, rounds


def classify_cone_position(sys: FunctionSystem, c, grid: Grid, refine: bool = True) -> ConePosition:
    """Interior / boundary / outside classification of ``c`` in the grid moment cone.

    For each coordinate direction ``+-e_i`` an LP finds the largest ``t``
    (capped at ``1 + ||c||_inf``) with ``c + t d`` in the cone; ``c`` is
    strictly positive when the smallest such ``t`` exceeds
    ``1e-7 * (1 + ||c||)``.
    """
    c = moment_vector(c, sys)
    _check_grid(sys, grid)
    tol = 1e-7 * (1.0 + float(np.linalg.norm(c)))
    if refine:
        grid, res, rounds = refine_to_feasibility(sys, c, grid)
    else:
        res, rounds = _phase1(sys.values(grid.nodes, len(c)), c), 0
    if res.status == INFEASIBLE:
        return ConePosition(Classification.INFEASIBLE, 0.0, tol, grid,
                            phase1_residual=res.phase1_residual, refinements=rounds)

    A = sys.values(grid.nodes, len(c))
    m, N = A.shape
    cap = 1.0 + float(np.max(np.abs(c))) if c.size else 1.0
    radii = []
    for i in range(m):
        for s in (1.0, -1.0):
            col = np.zeros((m, 1))
            col[i, 0] = -s
            Aug = np.block([[A, col, np.zeros((m, 1))],
                            [np.zeros((1, N)), np.ones((1, 2))]])
            cost = np.zeros(N + 2)
            cost[N] = -1.0
            r = simplex(Aug, np.append(c, cap), cost)
            radii.append(float(r.x[N]) if r.status == OPTIMAL else 0.0)
    margin = min(radii)
    if margin > tol:
        return ConePosition(Classification.STRICT, margin, tol, grid,
                            phase1_residual=res.phase1_residual, refinements=rounds, radii=radii)
    evidence = merge_close_atoms(sys, c, solve_grid_lp(sys, c, grid, Sense.MAX).measure)
    idx = support_index(evidence, sys.a, sys.b)
    return ConePosition(Classification.SINGULAR, margin, tol, grid, evidence, idx,
                        res.phase1_residual, rounds, radii)
