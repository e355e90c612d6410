import numpy as np
import pytest

from polint.density import DensityPoly, Monomial, indet
from polint.grid import Grid1D, GridFunction, default_realisation, make_standard_ops
from polint.integrators import SkewOp


@pytest.fixture
def grid():
    return Grid1D(32, 10.0 / 32)


@pytest.fixture
def ops(grid):
    return make_standard_ops(grid)


@pytest.fixture
def real(grid):
    return default_realisation(grid)


@pytest.fixture
def real_fwd(grid):
    return default_realisation(grid, "forward")


@pytest.fixture
def d_op(ops):
    return SkewOp(ops["d1"])


def random_density(rng, max_degree=4, max_order=2, n_terms=3) -> DensityPoly:
    """Random polynomial density with bounded degree and derivative order."""
    monos = []
    for _ in range(rng.integers(1, n_terms + 1)):
        degree = int(rng.integers(1, max_degree + 1))
        orders = rng.integers(0, max_order + 1, size=degree)
        coeff = float(rng.uniform(-2.0, 2.0))
        monos.append(Monomial.make(coeff, [(indet(int(o)), 1) for o in orders]))
    density = DensityPoly.from_terms(monos)
    if density.is_zero:
        density = DensityPoly.variable(0)
    return density


def random_gridfunction(rng, grid, scale=1.0) -> GridFunction:
    return GridFunction(grid, scale * rng.uniform(-1.0, 1.0, size=grid.n_points))
