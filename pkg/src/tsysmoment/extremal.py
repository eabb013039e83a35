"""Sharp bounds on the objective moment via the extremal support templates.

With ``m = floor((n + 1) / 2)``, the maximiser and minimiser of
``int g_{n+1} dmu`` over measures matching ``n + 1`` moments of a T+-system
live on at most ``m + 1`` (or ``m``) points with prescribed endpoint
membership:

    n even, max: m + 1 points, b among them
    n even, min: m + 1 points, a among them
    n odd,  max: m + 1 points, a and b among them
    n odd,  min: m points

In every case the number of weights plus free nodes is ``n + 1``, so the
moment equations form a square system, solved here by damped Newton
started from the grid-LP optimum.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    HypothesisNotVerified,
    InfeasibleError,
    NoConvergenceError,
    PreconditionError,
    SingularJacobianError,
)
from .funcsys import FunctionSystem, moment_vector
from .lp_oracle import (
    DEFAULT_GRID,
    AtomicMeasure,
    ConePosition,
    Classification,
    OracleResult,
    Sense,
    classify_cone_position,
    make_grid,
    solve_grid_lp,
)
from .tsys_verify import ZERO_TOL, Verdict, check_tplus

NEWTON_TOL = 1e-12
REPORT_TOL = 1e-9
MAX_ITER = 200
PRUNE = 1e-10
COALESCE = 1e-8
CLAMP = 1e-12
SEED_WEIGHT = 1e-3


class Parity(str, enum.Enum):
    EVEN = "even"
    ODD = "odd"


@dataclass(frozen=True)
class SupportTemplate:
    sense: Sense
    parity: Parity
    m: int
    total_points: int
    forced_endpoints: frozenset  # subset of {"a", "b"}
    free_node_count: int

    @property
    def unknowns(self) -> int:
        return self.total_points + self.free_node_count

    def to_record(self) -> dict:
        return {
            "sense": self.sense.value,
            "parity": self.parity.value,
            "m": self.m,
            "total_points": self.total_points,
            "forced_endpoints": sorted(self.forced_endpoints),
            "free_node_count": self.free_node_count,
        }


def make_template(n: int, sense) -> SupportTemplate:
    if n < 0:
        raise PreconditionError("n must be nonnegative")
    sense = Sense.parse(sense)
    m = (n + 1) // 2
    if n % 2 == 0:
        forced = frozenset({"b"} if sense is Sense.MAX else {"a"})
        total = m + 1
        parity = Parity.EVEN
    else:
        parity = Parity.ODD
        if sense is Sense.MAX:
            forced, total = frozenset({"a", "b"}), m + 1
        else:
            forced, total = frozenset(), m
    return SupportTemplate(sense, parity, m, total, forced, total - len(forced))


def moment_residuals(sys: FunctionSystem, c, nodes, weights) -> np.ndarray:
    """``r_i = sum_k w_k g_i(x_k) - c_i`` over the constrained functions."""
    c = np.asarray(c, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if nodes.shape != weights.shape:
        raise PreconditionError("nodes and weights differ in length")
    if nodes.size == 0:
        return -c
    return sys.values(nodes, len(c)) @ weights - c


def scaled_residual(sys, c, nodes, weights) -> float:
    c = np.asarray(c, dtype=float)
    r = moment_residuals(sys, c, nodes, weights)
    return float(np.max(np.abs(r) / (1.0 + np.abs(c)))) if r.size else 0.0


# ------------------------------------------------------------------ Newton

@dataclass
class NewtonResult:
    measure: AtomicMeasure
    iterations: int
    residual: float
    pruned: list[float] = field(default_factory=list)  # nodes of atoms dropped at zero weight
    merged: int = 0
    snapped: list[float] = field(default_factory=list)


@dataclass
class _State:
    nodes: np.ndarray
    weights: np.ndarray
    free: np.ndarray  # bool mask: node is an unknown

    def copy(self):
        return _State(self.nodes.copy(), self.weights.copy(), self.free.copy())


def _jacobian(sys, k, st: _State) -> np.ndarray:
    G = sys.values(st.nodes, k)
    if not np.any(st.free):
        return G
    dG = sys.derivative_values(st.nodes[st.free], 1, k)
    return np.hstack([G, dG * st.weights[st.free]])


def _damped_newton(sys, c, st: _State, eps: float, budget: int):
    """Run damped Gauss-Newton; returns (state, iterations, converged)."""
    k = len(c)
    scale = 1.0 + np.abs(c)
    lo, hi = sys.a + eps, sys.b - eps

    def resid(s):
        return moment_residuals(sys, c, s.nodes, s.weights) / scale

    r = resid(st)
    converged = False
    for it in range(budget + 1):
        if converged or np.max(np.abs(r), initial=0.0) <= NEWTON_TOL:
            if converged or it == budget:
                return st, it, True
            # One extra step takes a converged iterate down to roundoff.
            converged = True
        elif it == budget:
            break
        J = _jacobian(sys, k, st) / scale[:, None]
        step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        nw = st.weights.size
        dw, dx = step[:nw], step[nw:]
        norm0 = np.linalg.norm(r)
        alpha = 1.0
        for _ in range(60):
            trial = st.copy()
            trial.weights = np.maximum(st.weights + alpha * dw, 0.0)
            if dx.size:
                trial.nodes[trial.free] = np.clip(st.nodes[st.free] + alpha * dx, lo, hi)
            rt = resid(trial)
            if np.linalg.norm(rt) < norm0:
                st, r = trial, rt
                break
            alpha *= 0.5
        else:
            if converged:
                return st, it, True
            if np.linalg.matrix_rank(J) < J.shape[1]:
                raise SingularJacobianError("Jacobian is singular and no descent step exists")
            return st, it, False
    return st, budget, False


def _prune_and_merge(sys, st: _State, mass: float, result: NewtonResult) -> _State:
    span = sys.b - sys.a
    keep = st.weights > PRUNE * max(mass, 1e-300)
    if not np.all(keep):
        result.pruned.extend(float(x) for x in st.nodes[~keep])
        st = _State(st.nodes[keep], st.weights[keep], st.free[keep])
    order = np.argsort(st.nodes, kind="stable")
    st = _State(st.nodes[order], st.weights[order], st.free[order])
    i = 0
    while i + 1 < st.nodes.size:
        if st.nodes[i + 1] - st.nodes[i] < COALESCE * span:
            w = st.weights[i] + st.weights[i + 1]
            if not st.free[i]:
                x, free = st.nodes[i], False
            elif not st.free[i + 1]:
                x, free = st.nodes[i + 1], False
            else:
                x = (st.nodes[i] * st.weights[i] + st.nodes[i + 1] * st.weights[i + 1]) / w if w > 0 \
                    else st.nodes[i]
                free = True
            st = _State(
                np.concatenate([st.nodes[:i], [x], st.nodes[i + 2:]]),
                np.concatenate([st.weights[:i], [w], st.weights[i + 2:]]),
                np.concatenate([st.free[:i], [free], st.free[i + 2:]]),
            )
            result.merged += 1
        else:
            i += 1
    return st


def polish(sys: FunctionSystem, c, nodes, weights, free) -> NewtonResult:
    """Newton-polish an atomic measure; ``free`` marks nodes that may move.

    Handles weight pruning, node coalescence (restarting on the reduced
    system) and snapping of free nodes that converge onto an endpoint.
    Overdetermined systems are solved in the least-squares sense.
    """
    c = moment_vector(c)
    st = _State(np.asarray(nodes, float).copy(), np.asarray(weights, float).copy(),
                np.asarray(free, bool).copy())
    span = sys.b - sys.a
    eps = CLAMP * span
    mass = float(np.sum(st.weights))
    result = NewtonResult(AtomicMeasure.zero(), 0, np.inf)
    if st.nodes.size == 0:
        result.residual = scaled_residual(sys, c, [], [])
        if result.residual > NEWTON_TOL:
            raise NoConvergenceError("empty measure cannot match nonzero moments", result, result.residual)
        return result
    st.nodes[st.free] = np.clip(st.nodes[st.free], sys.a + eps, sys.b - eps)
    budget = MAX_ITER
    best = None
    while True:
        st, used, ok = _damped_newton(sys, c, st, eps, budget)
        result.iterations += used
        budget -= used
        res = scaled_residual(sys, c, st.nodes, st.weights)
        if best is None or res < best[0]:
            best = (res, st.copy())
        before = (st.nodes.size, int(np.sum(st.free)))
        st = _prune_and_merge(sys, st, mass, result)
        # Free nodes pinned at the clamp boundary belong on the endpoint.
        pinned = st.free & ((st.nodes <= sys.a + 2 * eps) | (st.nodes >= sys.b - 2 * eps))
        if np.any(pinned):
            st.nodes[pinned & (st.nodes <= sys.a + 2 * eps)] = sys.a
            st.nodes[pinned & (st.nodes >= sys.b - 2 * eps)] = sys.b
            result.snapped.extend(float(x) for x in st.nodes[pinned])
            st.free = st.free & ~pinned
            st = _prune_and_merge(sys, st, mass, result)
        changed = (st.nodes.size, int(np.sum(st.free))) != before or np.any(pinned)
        res = scaled_residual(sys, c, st.nodes, st.weights)
        if ok and not changed and res <= NEWTON_TOL:
            break
        if budget <= 0 or (not changed and not ok):
            bres, bst = best
            measure = AtomicMeasure.from_arrays(bst.nodes, bst.weights)
            raise NoConvergenceError(
                f"Newton did not reach residual {NEWTON_TOL:g} (best {bres:.3e})",
                NewtonResult(measure, result.iterations, bres), bres,
            )
    result.measure = AtomicMeasure.from_arrays(st.nodes, st.weights)
    result.residual = res
    return result


def init_from_oracle(template: SupportTemplate, oracle: AtomicMeasure, a: float, b: float):
    """Map grid-LP atoms onto the template: (nodes, weights, free mask)."""
    mass = oracle.mass if len(oracle) else 1.0
    forced = {"a": a, "b": b}
    fixed_nodes = {name: 0.0 for name in template.forced_endpoints}
    free_atoms: list[tuple[float, float]] = []
    for x, w in oracle.pairs():
        if x == a and "a" in fixed_nodes:
            fixed_nodes["a"] += w
        elif x == b and "b" in fixed_nodes:
            fixed_nodes["b"] += w
        else:
            free_atoms.append((x, w))
    free_atoms.sort()
    if template.free_node_count == 0 and fixed_nodes:
        # No interior freedom: fold stray atoms onto the nearest forced endpoint.
        for x, w in free_atoms:
            name = min(fixed_nodes, key=lambda k: abs(forced[k] - x))
            fixed_nodes[name] += w
        free_atoms = []
    while len(free_atoms) > template.free_node_count:
        gaps = [free_atoms[i + 1][0] - free_atoms[i][0] for i in range(len(free_atoms) - 1)]
        i = int(np.argmin(gaps))
        (x0, w0), (x1, w1) = free_atoms[i], free_atoms[i + 1]
        w = w0 + w1
        free_atoms[i:i + 2] = [((x0 * w0 + x1 * w1) / w if w > 0 else 0.5 * (x0 + x1), w)]
    seed = SEED_WEIGHT * mass
    while len(free_atoms) < template.free_node_count:
        pts = sorted({a, b, *(x for x, _ in free_atoms)})
        gaps = np.diff(pts)
        i = int(np.argmax(gaps))
        free_atoms.append((0.5 * (pts[i] + pts[i + 1]), seed))
        free_atoms.sort()
    for name, w in fixed_nodes.items():
        if w <= 0:
            fixed_nodes[name] = seed
    nodes = [forced[name] for name in fixed_nodes] + [x for x, _ in free_atoms]
    weights = np.array([fixed_nodes[name] for name in fixed_nodes] + [w for _, w in free_atoms])
    total = float(np.sum(weights))
    if total > 0 and len(oracle):
        weights *= mass / total
    free = [False] * len(fixed_nodes) + [True] * len(free_atoms)
    order = np.argsort(nodes, kind="stable")
    return (np.asarray(nodes, float)[order], weights[order], np.asarray(free, bool)[order])


def newton_solve(sys: FunctionSystem, c, template: SupportTemplate, init: AtomicMeasure) -> NewtonResult:
    """Solve the square moment system on ``template`` starting from ``init``."""
    c = moment_vector(c, sys)
    if template.unknowns != len(c):
        raise PreconditionError("template unknown count does not match the number of moments")
    nodes, weights, free = init_from_oracle(template, init, sys.a, sys.b)
    return polish(sys, c, nodes, weights, free)


# ------------------------------------------------------------ bound pipeline

@dataclass(frozen=True)
class BoundConfig:
    grid_size: int = DEFAULT_GRID
    seed: int = 0
    override: bool = False
    tol: float = ZERO_TOL


@dataclass
class BoundReport:
    sense: Sense
    value: float
    measure: AtomicMeasure
    cone: ConePosition
    moment_residual: float
    newton_iterations: int
    oracle_value: float
    oracle_gap: float
    template: SupportTemplate | None
    oracle: OracleResult | None = None
    hypothesis: list[Verdict] = field(default_factory=list)
    pruned: list[float] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.moment_residual <= REPORT_TOL

    def to_record(self) -> dict:
        return {
            "sense": self.sense.value,
            "value": self.value,
            "atoms": self.measure.to_record(),
            "cone": self.cone.to_record(),
            "template": self.template.to_record() if self.template else None,
            "moment_residual": self.moment_residual,
            "newton_iterations": self.newton_iterations,
            "oracle_value": self.oracle_value,
            "oracle_gap": self.oracle_gap,
            "oracle_grid_size": self.oracle.grid_size if self.oracle else None,
            "hypothesis": [v.to_record() for v in self.hypothesis],
            "pruned_nodes": list(self.pruned),
            "flags": list(self.flags),
        }


def verify_hypothesis(sys: FunctionSystem, seed: int = 0, tol: float = ZERO_TOL) -> list[Verdict]:
    """T+ sampling of ``(g_0..g_n)`` and ``(g_0..g_{n+1})``."""
    n = sys.size - 2
    return [check_tplus(sys, n, seed=seed, tol=tol), check_tplus(sys, n + 1, seed=seed, tol=tol)]


def template_flags(template: SupportTemplate, measure: AtomicMeasure, a: float, b: float) -> list[str]:
    """Deviations of ``measure`` from ``template`` that are allowed but worth reporting."""
    flags = []
    if len(measure) > template.total_points:
        flags.append(f"support has {len(measure)} atoms, template allows {template.total_points}")
    for name in sorted(template.forced_endpoints):
        x = a if name == "a" else b
        if x not in measure.nodes:
            flags.append(f"forced endpoint {name} carries zero weight (pruned)")
    if len(measure) < template.total_points and not flags:
        flags.append(f"support smaller than template ({len(measure)} < {template.total_points})")
    return flags


def bound(sys: FunctionSystem, c, sense="max", config: BoundConfig | None = None) -> BoundReport:
    """Sharp bound on ``int g_{n+1} dmu`` over nonnegative measures with moments ``c``."""
    config = config or BoundConfig()
    sense = Sense.parse(sense)
    if sys.size < 2:
        raise PreconditionError("need at least one constraint and an objective")
    c = moment_vector(c, sys)
    n = sys.size - 2
    flags: list[str] = []

    hypothesis = verify_hypothesis(sys, config.seed, config.tol)
    if not all(v.positive for v in hypothesis):
        if not config.override:
            raise HypothesisNotVerified(
                "T+ sampling did not verify the constraint and objective systems", hypothesis
            )
        flags.append("T+ hypothesis not verified; proceeding under override")

    grid = make_grid(sys.a, sys.b, config.grid_size)
    cone = classify_cone_position(sys, c, grid)
    if cone.classification is Classification.INFEASIBLE:
        raise InfeasibleError("no nonnegative measure matches the moments",
                              residual=cone.phase1_residual)

    if cone.singular:
        oracle = solve_grid_lp(sys, c, cone.grid, sense)
        ev = cone.measure
        free = [sys.a < x < sys.b for x in ev.nodes]
        polished = polish(sys, c, ev.nodes, ev.weights, free)
        template = None
        flags.append("singular moment vector: the representing measure is unique")
    else:
        oracle = solve_grid_lp(sys, c, grid, sense)
        template = make_template(n, sense)
        polished = newton_solve(sys, c, template, oracle.measure)
        flags.extend(template_flags(template, polished.measure, sys.a, sys.b))
    if polished.snapped:
        flags.append(f"free nodes snapped to endpoints: {polished.snapped}")

    measure = polished.measure
    value = measure.integrate(sys.objective)
    return BoundReport(
        sense=sense,
        value=value,
        measure=measure,
        cone=cone,
        moment_residual=scaled_residual(sys, c, measure.nodes, measure.weights),
        newton_iterations=polished.iterations,
        oracle_value=oracle.value,
        oracle_gap=value - oracle.value,
        template=template,
        oracle=oracle,
        hypothesis=hypothesis,
        pruned=polished.pruned,
        flags=flags,
    )


def support_distance(m1: AtomicMeasure, m2: AtomicMeasure) -> float:
    """Max over optimally matched atoms of ``|dx| + |dw|``; unmatched atoms cost their weight."""
    p1, p2 = m1.pairs(), m2.pairs()
    size = max(len(p1), len(p2))
    if size == 0:
        return 0.0
    cost = np.zeros((size, size))
    for i in range(size):
        for j in range(size):
            if i < len(p1) and j < len(p2):
                cost[i, j] = abs(p1[i][0] - p2[j][0]) + abs(p1[i][1] - p2[j][1])
            elif i < len(p1):
                cost[i, j] = p1[i][1]
            elif j < len(p2):
                cost[i, j] = p2[j][1]
    # Bottleneck matching: minimise the largest matched cost.
    thresholds = np.unique(cost)
    lo, hi = 0, thresholds.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        penal = np.where(cost <= thresholds[mid], 0.0, 1.0)
        rows, cols = linear_sum_assignment(penal)
        if penal[rows, cols].sum() == 0:
            hi = mid
        else:
            lo = mid + 1
    return float(thresholds[lo])


def objective_independence_check(sys: FunctionSystem, c, alt_objective, sense=None,
                                 config: BoundConfig | None = None) -> float:
    """Support distance between the extremal measures for two objectives.

    ``sense=None`` checks both senses and returns the larger distance.
    """
    senses = [Sense.MAX, Sense.MIN] if sense is None else [Sense.parse(sense)]
    alt = sys.with_objective(alt_objective)
    worst = 0.0
    for s in senses:
        r1 = bound(sys, c, s, config)
        r2 = bound(alt, c, s, config)
        worst = max(worst, support_distance(r1.measure, r2.measure))
    return worst


def measure_for_original(measure: AtomicMeasure, h) -> AtomicMeasure:
    """Map a solution ``nu`` of the problem rescaled by ``h`` back to ``mu`` (``d nu = h d mu``)."""
    from .expr import as_expression, evaluate

    if not len(measure):
        return measure
    hv = evaluate(as_expression(h), np.asarray(measure.nodes))
    return AtomicMeasure(measure.nodes, tuple(np.asarray(measure.weights) / hv))


def touching_gap(sys: FunctionSystem, duals, x) -> np.ndarray:
    """``sum lambda_i g_i(x) - g_{n+1}(x)`` for the dual coefficients of a grid LP."""
    lam = np.asarray(duals, dtype=float)
    V = sys.values(x)
    return lam @ V[:-1] - V[-1]
