"""Sampling checks of the T+/M+ property.

Two independent routes: signs of generalized Vandermonde determinants
``det(g_i(x_j))`` over node tuples ``x_0 < ... < x_k`` in ``[a, b]``, and
signs of the Wronskians ``W_0^k(x) = det(g_i^{(j)}(x))``. Both are
sampling-based. A ``VerifiedPlus`` verdict means the sample is consistent
with the property, never that it is proved.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.stats import qmc

from .errors import NoCertificateError, NotMSystemError, PreconditionError
from .funcsys import FunctionSystem
from .simplex import OPTIMAL, simplex

ZERO_TOL = 1e-9
STRATIFIED = 512
RANDOM = 512
COARSE_POINTS = 12
COARSE_LIMIT = 4096
WRONSKIAN_POINTS = 513


class Status(str, enum.Enum):
    VERIFIED_PLUS = "VerifiedPlus"
    VERIFIED_MINUS = "VerifiedMinus"
    REFUTED = "Refuted"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class SimplexSample:
    tuples: np.ndarray  # (count, k + 1), each row strictly increasing
    strategy: str
    seed: int | None = None

    def __post_init__(self):
        t = np.atleast_2d(np.asarray(self.tuples, dtype=float))
        if t.shape[0] == 0:
            raise PreconditionError("empty simplex sample")
        if t.shape[1] > 1 and not np.all(np.diff(t, axis=1) > 0):
            raise PreconditionError("sample tuples must be strictly increasing")
        object.__setattr__(self, "tuples", t)

    def __len__(self) -> int:
        return self.tuples.shape[0]


@dataclass(frozen=True)
class Verdict:
    status: Status
    level: int
    method: str  # "determinant-sampling" | "wronskian"
    witness: tuple[float, ...] | None = None
    value: float | None = None
    sample_size: int = 0
    seed: int | None = None
    note: str = ""

    @property
    def positive(self) -> bool:
        return self.status is Status.VERIFIED_PLUS

    def to_record(self) -> dict:
        return {
            "level": self.level,
            "status": self.status.value,
            "witness": list(self.witness) if self.witness is not None else None,
            "determinant": self.value,
            "method": self.method,
            "sample_size": self.sample_size,
            "seed": self.seed,
            "note": self.note,
        }


@dataclass(frozen=True)
class PositivityCertificate:
    coefficients: tuple[float, ...]
    margin: float


# ------------------------------------------------------------- samples

def _strictly_increasing(rows: np.ndarray) -> np.ndarray:
    if rows.shape[1] < 2:
        return rows
    return rows[np.all(np.diff(rows, axis=1) > 0, axis=1)]


def stratified_sample(a: float, b: float, k: int, count: int = STRATIFIED) -> np.ndarray:
    """Sorted Halton points (quasi-uniform over the ordered simplex)."""
    d = k + 1
    pts = qmc.Halton(d=d, scramble=False).random(2 * count + 1)[1:]
    rows = _strictly_increasing(np.clip(a + (b - a) * np.sort(pts, axis=1), a, b))
    return rows[:count]


def random_sample(a: float, b: float, k: int, seed: int, count: int = RANDOM) -> np.ndarray:
    rng = np.random.default_rng(seed)
    rows = np.sort(rng.uniform(a, b, size=(count, k + 1)), axis=1)
    return _strictly_increasing(rows)


def coarse_sample(a: float, b: float, k: int) -> np.ndarray | None:
    if k + 1 > COARSE_POINTS or math.comb(COARSE_POINTS, k + 1) > COARSE_LIMIT:
        return None
    grid = a + (b - a) * np.arange(COARSE_POINTS) / (COARSE_POINTS - 1)
    grid[-1] = b
    return np.array(list(combinations(grid, k + 1)))


def default_sample(sys: FunctionSystem, k: int, seed: int = 0) -> SimplexSample:
    parts = [stratified_sample(sys.a, sys.b, k), random_sample(sys.a, sys.b, k, seed)]
    coarse = coarse_sample(sys.a, sys.b, k)
    if coarse is not None:
        parts.append(coarse)
    return SimplexSample(np.vstack(parts), "stratified+random+coarse", seed)


# -------------------------------------------------------- determinants

def _check_nodes(sys: FunctionSystem, k: int, nodes: np.ndarray):
    if k + 1 > sys.size:
        raise PreconditionError(f"level {k} needs {k + 1} functions, system has {sys.size}")
    if nodes.shape[-1] != k + 1:
        raise PreconditionError(f"need {k + 1} nodes for level {k}")
    if np.any(nodes < sys.a) or np.any(nodes > sys.b):
        raise PreconditionError("nodes must lie in [a, b]")
    if k > 0 and not np.all(np.diff(nodes, axis=-1) > 0):
        raise PreconditionError("nodes must be strictly increasing")


def _matrices(sys: FunctionSystem, k: int, tuples: np.ndarray) -> np.ndarray:
    """Stack of matrices ``M[t, i, j] = g_i(tuples[t, j])``."""
    flat = tuples.reshape(-1)
    vals = sys.values(flat, k + 1)  # (k+1, T*(k+1))
    return vals.reshape(k + 1, tuples.shape[0], k + 1).transpose(1, 0, 2)


def system_determinant(sys: FunctionSystem, k: int, nodes) -> float:
    """``det(g_i(x_j))`` for ``i, j = 0..k`` via LU with partial pivoting."""
    x = np.asarray(nodes, dtype=float).reshape(-1)
    _check_nodes(sys, k, x)
    return float(np.linalg.det(_matrices(sys, k, x[None, :])[0]))


def _determinants(sys, k, tuples, zero_tol=ZERO_TOL):
    mats = _matrices(sys, k, tuples)
    dets = np.linalg.det(mats)
    # Vanishing threshold: row-magnitude product times the normalised node
    # gap product, so coalescing nodes of a genuine T-system do not count.
    rows = np.prod(np.max(np.abs(mats), axis=2), axis=1)
    gaps = np.ones(tuples.shape[0])
    span = sys.b - sys.a
    for i in range(k + 1):
        for j in range(i + 1, k + 1):
            gaps *= (tuples[:, j] - tuples[:, i]) / span
    return dets, zero_tol * rows * gaps


def _bisect_sign_change(sys, k, p, q, steps: int = 60):
    """Locate a vanishing determinant on the segment between tuples of opposite sign."""
    fp = system_determinant(sys, k, p)
    lo, hi = 0.0, 1.0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        x = p + mid * (q - p)
        fm = system_determinant(sys, k, x)
        if fm == 0:
            return x, fm
        if (fm > 0) == (fp > 0):
            lo = mid
        else:
            hi = mid
    x = p + 0.5 * (lo + hi) * (q - p)
    return x, system_determinant(sys, k, x)


def check_tplus(sys: FunctionSystem, k: int, sample: SimplexSample | None = None,
                seed: int = 0, tol: float = ZERO_TOL) -> Verdict:
    """Sign of ``det(g_i(x_j))_0^k`` over a sample of the ordered simplex.

    ``VerifiedMinus`` means the determinants are uniformly negative, i.e.
    flipping the sign of ``g_k`` gives a sample consistent with T+.
    """
    if sample is None:
        sample = default_sample(sys, k, seed)
    tuples = sample.tuples
    _check_nodes(sys, k, tuples)
    dets, tol = _determinants(sys, k, tuples, tol)
    size = len(sample)
    method = "determinant-sampling"
    vanishing = np.flatnonzero(np.abs(dets) <= tol)
    if vanishing.size:
        t = vanishing[np.argmin(np.abs(dets[vanishing]) / np.maximum(tol[vanishing], 1e-300))]
        return Verdict(Status.REFUTED, k, method, tuple(map(float, tuples[t])), float(dets[t]),
                       size, sample.seed, "determinant vanishes")
    pos, neg = np.flatnonzero(dets > 0), np.flatnonzero(dets < 0)
    if pos.size and neg.size:
        x, val = _bisect_sign_change(sys, k, tuples[pos[0]], tuples[neg[0]])
        return Verdict(Status.REFUTED, k, method, tuple(map(float, x)), float(val), size,
                       sample.seed, "determinant changes sign")
    if pos.size:
        t = int(np.argmin(dets))
        return Verdict(Status.VERIFIED_PLUS, k, method, None, float(dets[t]), size, sample.seed)
    t = int(np.argmax(dets))
    return Verdict(Status.VERIFIED_MINUS, k, method, None, float(dets[t]), size, sample.seed)


def check_tplus_ladder(sys: FunctionSystem, levels=None, seed: int = 0,
                       tol: float = ZERO_TOL) -> list[Verdict]:
    levels = range(sys.size) if levels is None else levels
    return [check_tplus(sys, k, seed=seed, tol=tol) for k in levels]


# ------------------------------------------------------------ Wronskians

def wronskian_matrix(sys: FunctionSystem, k: int, x) -> np.ndarray:
    """``M[..., i, j] = g_i^{(j)}(x)`` for ``i, j = 0..k``."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    cols = [sys.derivative_values(xs, j, k + 1) for j in range(k + 1)]  # each (k+1, P)
    return np.stack(cols, axis=-1).transpose(1, 0, 2)


def wronskian(sys: FunctionSystem, k: int, x: float) -> float:
    if k + 1 > sys.size:
        raise PreconditionError(f"level {k} needs {k + 1} functions")
    if k == 0:
        return float(sys.values([x], 1)[0, 0])
    return float(np.linalg.det(wronskian_matrix(sys, k, x)[0]))


def default_wronskian_grid(sys: FunctionSystem, count: int = WRONSKIAN_POINTS) -> np.ndarray:
    eps = 1e-6 * (sys.b - sys.a)
    return np.linspace(sys.a + eps, sys.b - eps, count)


def check_mplus_wronskian(sys: FunctionSystem, n: int | None = None, grid=None,
                          tol: float = ZERO_TOL) -> Verdict:
    """Differential criterion for M+ over interior sample points.

    Positive ``g_0`` on ``[a, b]`` and positive ``W_0^k`` (``k = 1..n``) on
    the interior is sufficient; a negative ``W_0^k`` at an interior point
    violates a necessary condition. Near-zero values leave the question
    open.
    """
    n = sys.size - 1 if n is None else n
    if n + 1 > sys.size:
        raise PreconditionError(f"level {n} needs {n + 1} functions")
    if n > sys.max_derivative_order:
        raise PreconditionError("not enough derivatives configured for the Wronskian check")
    method = "wronskian"
    interior = default_wronskian_grid(sys) if grid is None else np.asarray(grid, dtype=float)
    if np.any(interior <= sys.a) or np.any(interior >= sys.b):
        raise PreconditionError("Wronskian grid points must be interior")
    size = interior.size

    closed = np.concatenate([[sys.a], interior, [sys.b]])
    g0 = sys.values(closed, 1)[0]
    g0_tol = tol * max(1.0, float(np.max(np.abs(g0))))
    inner = g0[1:-1]
    if np.any(inner < -g0_tol):
        t = int(np.argmin(inner))
        return Verdict(Status.REFUTED, 0, method, (float(interior[t]),), float(inner[t]), size,
                       note="g_0 negative in the interior")
    undecided = None
    if np.any(g0 <= g0_tol):
        t = int(np.argmin(g0))
        undecided = Verdict(Status.INCONCLUSIVE, 0, method, (float(closed[t]),), float(g0[t]),
                            size, note="g_0 not bounded away from zero")

    for k in range(1, n + 1):
        mats = wronskian_matrix(sys, k, interior)
        w = np.linalg.det(mats)
        scale = np.prod(np.max(np.abs(mats), axis=2), axis=1)
        wtol = tol * scale
        bad = np.flatnonzero(w < -wtol)
        if bad.size:
            t = bad[np.argmin(w[bad] / np.maximum(scale[bad], 1e-300))]
            return Verdict(Status.REFUTED, k, method, (float(interior[t]),), float(w[t]), size,
                           note=f"W_0^{k} negative at an interior point")
        flat = np.flatnonzero(np.abs(w) <= wtol)
        if flat.size and undecided is None:
            t = int(flat[0])
            undecided = Verdict(Status.INCONCLUSIVE, k, method, (float(interior[t]),), float(w[t]),
                                size, note=f"W_0^{k} vanishes within tolerance")
    if undecided is not None:
        return undecided
    return Verdict(Status.VERIFIED_PLUS, n, method, None, None, size)


# ------------------------------------------------------ sign normalisation

@dataclass(frozen=True)
class SignVector:
    signs: tuple[int, ...]

    def __post_init__(self):
        if any(s not in (-1, 1) for s in self.signs):
            raise PreconditionError("signs must be exactly +-1")

    def __iter__(self):
        return iter(self.signs)

    def __len__(self):
        return len(self.signs)

    @property
    def trivial(self) -> bool:
        return all(s == 1 for s in self.signs)


def normalize_signs(sys: FunctionSystem, n: int | None = None, seed: int = 0,
                    tol: float = ZERO_TOL) -> SignVector:
    """Signs ``s`` making ``(s_0 g_0, ..., s_n g_n)`` sample as an M+-system.

    Level ``k`` is decided after the signs of levels ``< k`` are applied.
    Raises :class:`NotMSystemError` with the failing level.
    """
    n = sys.size - 1 if n is None else n
    signs: list[int] = []
    for k in range(n + 1):
        current = sys.with_signs(signs)
        v = check_tplus(current, k, seed=seed, tol=tol)
        if v.status is Status.VERIFIED_PLUS:
            signs.append(1)
        elif v.status is Status.VERIFIED_MINUS:
            signs.append(-1)
        else:
            raise NotMSystemError(f"level {k} is not a T-system on the sample ({v.note})", k, v)
    return SignVector(tuple(signs))


# --------------------------------------------------- positivity certificate

def positivity_certificate(sys: FunctionSystem, n: int | None = None, grid=None) -> PositivityCertificate:
    """Coefficients ``lambda`` (``|lambda_i| <= 1``) maximising ``min_j sum lambda_i g_i(x_j)``.

    Solved as the LP dual ``min sum(u + v)`` s.t. ``sum_j w_j = 1``,
    ``u - v = G w``, so ``lambda`` and the margin come out as the dual
    variables of the equality rows.
    """
    n = sys.size - 1 if n is None else n
    if grid is None:
        grid = np.linspace(sys.a, sys.b, 1025)
    x = np.asarray(grid, dtype=float)
    if x.size == 0:
        raise PreconditionError("empty grid")
    G = sys.values(x, n + 1)  # (n+1, N)
    m, N = G.shape
    top = np.concatenate([np.ones(N), np.zeros(2 * m)])
    body = np.hstack([-G, np.eye(m), -np.eye(m)])
    A = np.vstack([top, body])
    b = np.zeros(m + 1)
    b[0] = 1.0
    cost = np.concatenate([np.zeros(N), np.ones(2 * m)])
    res = simplex(A, b, cost)
    if res.status != OPTIMAL:
        raise NoCertificateError(f"certificate LP ended {res.status}")
    lam = np.clip(res.duals[1:], -1.0, 1.0)
    margin = float(np.min(lam @ G))
    tol = ZERO_TOL * max(1.0, float(np.max(np.abs(G))))
    if margin <= tol:
        raise NoCertificateError("no strictly positive combination on this grid", margin)
    return PositivityCertificate(tuple(float(v) for v in lam), margin)
