"""Dense two-phase revised simplex for ``min c.x  s.t.  A x = b, x >= 0``.

Problems here are short and wide (a handful of moment rows, thousands of
grid columns), so the basis matrix is refactored from scratch every
iteration with a dense solve; pricing is a single matrix-vector product
over all columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class LPResult:
    status: str
    x: np.ndarray
    value: float
    duals: np.ndarray  # y with A^T y <= cost at an optimum
    basis: np.ndarray
    iterations: int
    phase1_residual: float
    redundant_rows: list[int] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class SimplexIterationLimit(RuntimeError):
    pass


def _run(A, b, cost, basis, *, opt_tol, bland_after, max_iter):
    """Primal simplex iterations from a feasible basis.

    Returns (basis, iterations, status). Dantzig pricing switches to Bland's
    rule after ``bland_after`` pivots in a phase; ratio-test ties go to the smallest
    basic variable index.
    """
    N = A.shape[1]
    basis = list(basis)
    cscale = max(1.0, float(np.max(np.abs(cost)))) if cost.size else 1.0
    dtol = opt_tol * cscale
    it = 0
    while True:
        B = A[:, basis]
        xB = np.linalg.solve(B, b)
        y = np.linalg.solve(B.T, cost[basis])
        d = cost - y @ A
        d[basis] = 0.0
        if it >= bland_after:
            cand = np.flatnonzero(d < -dtol)
            if cand.size == 0:
                return basis, it, OPTIMAL
            j = int(cand[0])
        else:
            j = int(np.argmin(d))
            if d[j] >= -dtol:
                return basis, it, OPTIMAL
        u = np.linalg.solve(B, A[:, j])
        ptol = 1e-11 * max(1.0, float(np.max(np.abs(u))))
        pos = np.flatnonzero(u > ptol)
        if pos.size == 0:
            return basis, it, UNBOUNDED
        ratios = np.maximum(xB[pos], 0.0) / u[pos]
        rmin = float(ratios.min())
        ties = pos[ratios <= rmin + 1e-12 * (1.0 + rmin)]
        r = int(min(ties, key=lambda i: basis[i]))
        basis[r] = j
        it += 1
        if it > max_iter:
            raise SimplexIterationLimit(f"simplex exceeded {max_iter} iterations")
        if N == 0:
            return basis, it, OPTIMAL


def simplex(
    A,
    b,
    cost,
    *,
    feas_tol: float = 1e-9,
    opt_tol: float = 1e-10,
    bland_after: int | None = None,
    max_iter: int = 200_000,
) -> LPResult:
    """Solve ``min cost.x`` over ``A x = b, x >= 0``.

    Phase 1 minimises the sum of artificial variables; the problem is
    declared feasible when that sum is at most ``feas_tol * ||b||_1`` after
    row equilibration. Zero-level artificials are pivoted out, and rows
    for which that is impossible are dropped as redundant.
    """
    A = np.array(A, dtype=float, copy=True)
    b = np.array(b, dtype=float, copy=True).ravel()
    cost = np.array(cost, dtype=float).ravel()
    m, N = A.shape
    if b.size != m or cost.size != N:
        raise ValueError("inconsistent LP dimensions")
    if bland_after is None:
        bland_after = 50 * (m + 1)

    rowmax = np.max(np.abs(A), axis=1) if N else np.zeros(m)
    zero_rows = rowmax == 0
    if np.any(zero_rows & (b != 0)):
        return LPResult(INFEASIBLE, np.zeros(N), np.nan, np.zeros(m), np.array([], int), 0,
                        float(np.sum(np.abs(b[zero_rows]))))
    rowmax[zero_rows] = 1.0
    D = np.where(b < 0, -1.0, 1.0) / rowmax
    As = A * D[:, None]
    bs = b * D

    # Phase 1.
    A1 = np.hstack([As, np.eye(m)])
    c1 = np.concatenate([np.zeros(N), np.ones(m)])
    basis, it1, status = _run(A1, bs, c1, list(range(N, N + m)), opt_tol=opt_tol,
                              bland_after=bland_after, max_iter=max_iter)
    xB = np.linalg.solve(A1[:, basis], bs)
    x1 = np.zeros(N + m)
    x1[basis] = np.maximum(xB, 0.0)
    residual = float(np.sum(x1[N:]))
    threshold = feas_tol * max(float(np.sum(np.abs(bs))), 1e-300)
    if residual > threshold:
        return LPResult(INFEASIBLE, x1[:N], np.nan, np.zeros(m), np.asarray(basis), it1, residual)

    # Drive zero-level artificials out of the basis.
    rows = list(range(m))
    redundant: list[int] = []
    while True:
        art = [p for p, v in enumerate(basis) if v >= N]
        if not art:
            break
        p = art[0]
        B = A1[np.ix_(rows, basis)]
        z = np.linalg.solve(B.T, np.eye(len(rows))[p])
        row = z @ As[rows]
        row[[v for v in basis if v < N]] = 0.0
        j = int(np.argmax(np.abs(row))) if N else -1
        if N and abs(row[j]) > 1e-9:
            basis[p] = j
        else:
            orig = basis[p] - N
            redundant.append(orig)
            del rows[rows.index(orig)]
            del basis[p]

    A2 = As[rows]
    b2 = bs[rows]
    if rows:
        basis, it2, status = _run(A2, b2, cost, basis, opt_tol=opt_tol,
                                  bland_after=bland_after, max_iter=max_iter)
        B = A2[:, basis]
        xB = np.linalg.solve(B, b2)
        ys = np.linalg.solve(B.T, cost[basis])
    else:
        it2, status = 0, OPTIMAL
        if np.any(cost < 0):
            status = UNBOUNDED
        xB = np.zeros(0)
        ys = np.zeros(0)
    x = np.zeros(N)
    x[basis] = np.maximum(xB, 0.0)
    y_full = np.zeros(m)
    y_full[rows] = ys
    duals = y_full * D
    value = float(cost @ x) if status == OPTIMAL else (-np.inf if status == UNBOUNDED else np.nan)
    return LPResult(status, x, value, duals, np.asarray(basis), it1 + it2, residual, sorted(redundant))
