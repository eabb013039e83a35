import numpy as np
import pytest

from tsysmoment.errors import InfeasibleError, PreconditionError, UnboundedError
from tsysmoment.lp_oracle import (
    AtomicMeasure,
    Classification,
    Grid,
    Sense,
    classify_cone_position,
    make_grid,
    oracle_ladder,
    solve_grid_lp,
    support_index,
)

from conftest import monomials, random_instance, system

UNIFORM = (1.0, 1 / 2, 1 / 3, 1 / 4)


def test_make_grid():
    g = make_grid(0, 1, 5)
    assert g.nodes.tolist() == [0, 0.25, 0.5, 0.75, 1]
    assert g.nodes[-1] == 1.0
    assert set(make_grid(-1, 2, 1025).nodes) <= set(make_grid(-1, 2, 4097).nodes)
    assert set(make_grid(-1, 2, 4097).nodes) <= set(make_grid(-1, 2, 16385).nodes)
    with pytest.raises(PreconditionError):
        make_grid(0, 1, 1)
    with pytest.raises(PreconditionError):
        make_grid(1, 1, 5)
    with pytest.raises(PreconditionError):
        Grid([0.0, 0.5, 0.5])


def test_atomic_measure():
    m = AtomicMeasure.from_arrays([0.5, 0.0, 0.5, 1.0], [0.25, 0.0, 0.25, 1.0])
    assert m.pairs() == [(0.5, 0.5), (1.0, 1.0)]
    assert m.mass == 1.5
    with pytest.raises(PreconditionError):
        AtomicMeasure((0.0, 1.0), (1.0, -1.0))
    assert len(AtomicMeasure.zero()) == 0


def test_example_i_grid():
    s = system(0, 1, "1", "x")
    v, m = solve_grid_lp(s, [1], make_grid(0, 1, 33), "max")
    assert v == 1.0 and m.pairs() == [(1.0, 1.0)]
    v, m = solve_grid_lp(s, [1], make_grid(0, 1, 33), "min")
    assert v == 0.0 and m.pairs() == [(0.0, 1.0)]


def test_example_ii_grid():
    s = system(0, 1, "1", "x", "x^2")
    r = solve_grid_lp(s, [1, 0.5], make_grid(0, 1, 1025), Sense.MAX)
    assert r.value == pytest.approx(0.5, abs=1e-14)
    assert r.measure.nodes == (0.0, 1.0)
    assert r.measure.weights == pytest.approx((0.5, 0.5), abs=1e-14)
    r = solve_grid_lp(s, [1, 0.5], make_grid(0, 1, 1025), Sense.MIN)
    assert r.value == pytest.approx(0.25, abs=1e-14)
    assert r.measure.nodes == (0.5,)
    assert r.measure.weights == pytest.approx((1.0,), abs=1e-14)


def test_infeasible_and_unbounded():
    s = system(0, 1, "1", "x", "x^2")
    with pytest.raises(InfeasibleError) as info:
        solve_grid_lp(s, [1, 2], make_grid(0, 1, 65))
    assert info.value.residual > 0
    with pytest.raises(UnboundedError):
        solve_grid_lp(system(-1, 1, "x", "1"), [0.0], make_grid(-1, 1, 65))


def test_grid_outside_interval_rejected():
    with pytest.raises(PreconditionError):
        solve_grid_lp(monomials(1, objective="x^2"), [1, 0.5], make_grid(0, 2, 9))


@pytest.mark.parametrize("sense", ["max", "min"])
def test_ladder_monotone_on_nested_grids(sense):
    s = monomials(3, objective="x^4")
    ladder = oracle_ladder(s, UNIFORM, sense)
    vals = [r.value for r in ladder]
    sign = 1 if sense == "max" else -1
    assert all(sign * (q - p) >= -1e-13 for p, q in zip(vals, vals[1:]))
    for r in ladder:
        assert len(r.measure) <= 4


def test_random_oracle_invariants(rng):
    for _ in range(20):
        n = int(rng.integers(1, 5))
        s, c = random_instance(rng, n)
        grid = make_grid(0, 1, 513)
        for sense in ("max", "min"):
            r = solve_grid_lp(s, c, grid, sense)
            assert len(r.measure) <= n + 1
            np.testing.assert_allclose(r.measure.moments(s, n + 1), c, rtol=1e-9, atol=1e-9)
            # complementary slackness: touching gap has a fixed sign on the grid and vanishes on the support
            gap = np.asarray(r.duals) @ s.values(grid.nodes, n + 1) - s.values(grid.nodes)[-1]
            sign = 1 if sense == "max" else -1
            assert np.all(sign * gap >= -1e-9)
            on = np.isin(grid.nodes, r.measure.nodes)
            assert np.all(np.abs(gap[on]) <= 1e-9)
            # strong duality
            assert np.asarray(r.duals) @ c == pytest.approx(r.value, rel=1e-8, abs=1e-10)
        assert solve_grid_lp(s, c, grid, "min").value <= solve_grid_lp(s, c, grid, "max").value


def test_support_index():
    m = AtomicMeasure((0.0, 0.5, 1.0), (1.0, 1.0, 1.0))
    idx = support_index(m, 0, 1)
    assert (idx.ell_minus, idx.ell, idx.ell_plus, idx.index) == (1, 1, 1, 4)
    assert support_index(AtomicMeasure((0.3,), (1.0,)), 0, 1).index == 2
    assert support_index(AtomicMeasure.zero(), 0, 1).index == 0
    with pytest.raises(PreconditionError):
        support_index(AtomicMeasure((2.0,), (1.0,)), 0, 1)


def test_classify_strict():
    pos = classify_cone_position(system(0, 1, "1", "x", "x^2"), [1, 0.5], make_grid(0, 1, 1025))
    assert pos.classification is Classification.STRICT
    assert pos.margin > pos.tolerance


def test_classify_singular():
    s = system(0, 1, "1", "x", "x^2", "x^3")
    pos = classify_cone_position(s, [1, 0.3, 0.09], make_grid(0, 1, 4097))
    assert pos.classification is Classification.SINGULAR
    assert len(pos.measure) == 1
    assert pos.measure.nodes[0] == pytest.approx(0.3, abs=1e-9)
    assert pos.measure.weights[0] == pytest.approx(1.0, abs=1e-9)
    assert pos.index.index == 2 <= 2
    # max and min on the refined grid coincide: the representing measure is unique
    hi = solve_grid_lp(s, [1, 0.3, 0.09], pos.grid, "max").value
    lo = solve_grid_lp(s, [1, 0.3, 0.09], pos.grid, "min").value
    assert hi == pytest.approx(lo, abs=1e-6)


def test_classify_endpoint_singular_and_zero():
    s = system(0, 1, "1", "x", "x^2")
    pos = classify_cone_position(s, [1, 1], make_grid(0, 1, 129))
    assert pos.singular and pos.index.index == 1
    pos = classify_cone_position(s, [0, 0], make_grid(0, 1, 129))
    assert pos.singular and len(pos.measure) == 0


def test_classify_infeasible():
    pos = classify_cone_position(system(0, 1, "1", "x", "x^2"), [1, 2], make_grid(0, 1, 1025))
    assert pos.classification is Classification.INFEASIBLE
