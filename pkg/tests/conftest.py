import numpy as np
import pytest

from tsysmoment.funcsys import FunctionSystem


def system(a, b, *sources):
    return FunctionSystem.from_strings(a, b, sources)


def monomials(k, a=0.0, b=1.0, objective=None):
    src = ["1", "x"] + [f"x^{j}" for j in range(2, k + 1)]
    src = src[: k + 1]
    if objective is not None:
        src.append(objective)
    return system(a, b, *src)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_instance(rng, n, atoms=10):
    """Monomial constraints up to x^n, objective x^(n+1), c from a random atomic measure."""
    sys = monomials(n, objective=f"x^{n + 1}")
    nodes = rng.uniform(0, 1, atoms)
    weights = rng.uniform(0.05, 1, atoms)
    c = sys.values(nodes, n + 1) @ weights
    return sys, c


def random_system(draw_seed):
    """Mixed suite: monomials, exponentials, sparse powers, and two families that fail M+."""
    rng = np.random.default_rng(draw_seed)
    kind = draw_seed % 5
    if kind == 0:
        k = int(rng.integers(1, 6))
        a = float(rng.uniform(-2, 1))
        return monomials(k, a, a + float(rng.uniform(0.5, 3)))
    if kind == 1:
        rates = [round(float(r), 4) for r in np.sort(rng.uniform(-2, 2, int(rng.integers(2, 5))))]
        return system(0, 1, *[f"exp({r!r}*x)" if r >= 0 else f"exp(-{-r!r}*x)" for r in rates])
    if kind == 2:
        powers = sorted(rng.choice(np.arange(0, 7), size=int(rng.integers(2, 5)), replace=False))
        a = float(rng.uniform(0.2, 1))
        return system(a, a + float(rng.uniform(0.5, 2)), *[f"x^{p}" for p in powers])
    if kind == 3:
        lo = float(rng.uniform(0.2, 1.5))
        return system(-lo, float(rng.uniform(0.2, 1.5)), "1", "x", "x^3")
    lo = float(rng.uniform(0.2, 1.5))
    return system(-lo, float(rng.uniform(0.2, 1.5)), "1", "x^2")
