from itertools import combinations

import numpy as np
import pytest

from tsysmoment.simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, simplex


def brute_force(A, b, c):
    """Best basic feasible solution by enumerating every column basis."""
    m, N = A.shape
    best = None
    rank = np.linalg.matrix_rank(A)
    for cols in combinations(range(N), rank):
        B = A[:, cols]
        if np.linalg.matrix_rank(B) < rank:
            continue
        xB, *_ = np.linalg.lstsq(B, b, rcond=None)
        if np.linalg.norm(B @ xB - b) > 1e-9 * (1 + np.linalg.norm(b)) or np.any(xB < -1e-10):
            continue
        val = float(c[list(cols)] @ xB)
        if best is None or val < best:
            best = val
    return best


@pytest.mark.parametrize("seed", range(60))
def test_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 4))
    N = int(rng.integers(m, 9))
    A = rng.normal(size=(m, N))
    x0 = rng.uniform(0, 1, N) * (rng.uniform(size=N) < 0.6)
    if seed % 4 == 0:
        A = np.vstack([A, A[0] - A[-1]])  # redundant row
    b = A @ x0
    c = rng.uniform(0.1, 2.0, N) * (1 if seed % 3 else -1)
    if seed % 3 == 0:
        c = rng.uniform(0.1, 2.0, N)  # bounded below
    res = simplex(A, b, c)
    expected = brute_force(A, b, c)
    if np.all(c > 0):
        assert res.status == OPTIMAL
        assert res.value == pytest.approx(expected, rel=1e-9, abs=1e-9)
        assert np.all(res.x >= 0)
        np.testing.assert_allclose(A @ res.x, b, atol=1e-9 * (1 + np.abs(b).max()))
        assert np.all(A.T @ res.duals <= c + 1e-9)
        assert np.count_nonzero(res.x) <= m + (seed % 4 == 0)


def test_infeasible_and_unbounded():
    A = np.array([[1.0, 1.0]])
    assert simplex(A, [-1.0], [1.0, 1.0]).status == INFEASIBLE
    assert simplex(A, [1.0], [-1.0, 0.0]).status == OPTIMAL
    A2 = np.array([[1.0, -1.0]])
    assert simplex(A2, [1.0], [-1.0, 0.0]).status == UNBOUNDED


def test_zero_rhs_is_degenerate_but_optimal():
    A = np.array([[1.0, 1.0, 1.0], [0.0, 0.5, 1.0]])
    res = simplex(A, [0.0, 0.0], [0.0, -0.25, -1.0])
    assert res.status == OPTIMAL
    assert res.value == 0.0
    assert not np.any(res.x)


def test_bland_fallback_terminates():
    rng = np.random.default_rng(7)
    A = rng.normal(size=(3, 40))
    b = A @ np.abs(rng.normal(size=40))
    c = rng.uniform(0.5, 1, 40)
    r1 = simplex(A, b, c)
    r2 = simplex(A, b, c, bland_after=0)
    assert r1.value == pytest.approx(r2.value, rel=1e-10)


def test_highs_cross_check():
    linprog = pytest.importorskip("scipy.optimize").linprog
    rng = np.random.default_rng(3)
    for _ in range(30):
        A = rng.normal(size=(4, 60))
        b = A @ rng.uniform(0, 1, 60)
        c = rng.normal(size=60) + 2.5
        ours = simplex(A, b, c)
        ref = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
        assert ours.value == pytest.approx(ref.fun, rel=1e-8, abs=1e-9)
