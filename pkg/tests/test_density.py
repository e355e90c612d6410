import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polint.density import (
    DensityPoly,
    DensityParseError,
    Monomial,
    euler_operator,
    eval_density,
    eval_var_deriv,
    gkdv_density,
    hamiltonian_d,
    indet,
    kdv_density,
    parse_density,
    partial,
)
from polint.grid import Grid1D, GridFunction, inner

from conftest import random_density, random_gridfunction


def mono(coeff, *orders):
    return Monomial.make(coeff, [(indet(o), 1) for o in orders])


class TestParser:
    def test_kdv_density(self):
        g = parse_density("0.5*u_x^2 - (1/3)*u^3")
        assert g == kdv_density()

    def test_rational_literals_and_unary_minus(self):
        g = parse_density("-(1/3)*u^3 + 0.5*u_x^2")
        assert g == kdv_density()

    def test_products_and_parentheses(self):
        g = parse_density("u*(u + u_x)^2")
        expected = (
            DensityPoly.variable(0)
            * (DensityPoly.variable(0) + DensityPoly.variable(1)) ** 2
        )
        assert g == expected

    def test_all_identifiers(self):
        g = parse_density("u + u_x + u_xx + u_xxx + u_xxxx")
        assert {z.deriv_order for z in g.indeterminates()} == {0, 1, 2, 3, 4}

    def test_errors(self):
        with pytest.raises(DensityParseError):
            parse_density("u + $")
        with pytest.raises(DensityParseError):
            parse_density("u / u")
        with pytest.raises(DensityParseError):
            parse_density("u ^ 1.5")
        with pytest.raises(DensityParseError):
            parse_density("u u")
        with pytest.raises(DensityParseError):
            parse_density("u_xxxxx")


@settings(max_examples=50, deadline=None)
@given(st.permutations(range(4)))
def test_canonical_form_is_order_independent(order):
    monos = [mono(1.5, 0, 0), mono(-0.25, 1, 1), mono(2.0, 0, 1), mono(0.125, 2)]
    shuffled = [monos[i] for i in order]
    assert DensityPoly.from_terms(shuffled) == DensityPoly.from_terms(monos)


class TestPartial:
    def test_kdv_partial_wrt_u(self):
        g = kdv_density()
        expected = DensityPoly.from_terms([mono(-1.0, 0, 0)])
        assert partial(g, indet(0)) == expected

    def test_partial_wrt_ux(self):
        g = parse_density("0.5*u_x^2")
        assert partial(g, indet(1)) == DensityPoly.variable(1)

    def test_power_rule(self):
        g = parse_density("u^2*u_x")
        assert partial(g, indet(0)) == parse_density("2*u*u_x")

    def test_absent_indeterminate(self):
        assert partial(kdv_density(), indet(3)).is_zero


class TestEulerOperator:
    def test_kdv_symbolic(self):
        # dH/du of 1/2 u_x^2 - 1/3 u^3 is -u^2 - u_xx: outer orders 0 and 1,
        # inner polynomials -u^2 and u_x (the transpose carries the sign)
        expr = euler_operator(kdv_density())
        assert [j for j, _ in expr.terms] == [0, 1]
        inner_polys = dict(expr.terms)
        assert inner_polys[0] == DensityPoly.from_terms([mono(-1.0, 0, 0)])
        assert inner_polys[1] == DensityPoly.variable(1)

    def test_kdv_discrete_eval(self, grid, real):
        rng = np.random.default_rng(0)
        u = random_gridfunction(rng, grid)
        out = eval_var_deriv(euler_operator(kdv_density()), u, real)
        d1 = real[1]
        expected = -u.values**2 - d1.apply_values(d1.apply_values(u.values))
        assert np.max(np.abs(out.values - expected)) < 1e-12

    def test_quadratic_density(self, grid, real):
        rng = np.random.default_rng(1)
        u = random_gridfunction(rng, grid)
        out = eval_var_deriv(euler_operator(parse_density("0.5*u^2")), u, real)
        assert np.allclose(out.values, u.values)

    def test_defining_relation_u_ux2(self, grid, real):
        # G = u u_x^2 checked through the variational defining relation with
        # finite-epsilon differencing of H[u + eps*phi]
        self._check_defining_relation(parse_density("u*u_x^2"), grid, real)

    def _check_defining_relation(self, density, grid, real, seed=2):
        rng = np.random.default_rng(seed)
        u = random_gridfunction(rng, grid)
        phi = random_gridfunction(rng, grid)
        eps = 1e-6
        lhs = (
            hamiltonian_d(density, u + eps * phi, real)
            - hamiltonian_d(density, u + (-eps) * phi, real)
        ) / (2.0 * eps)
        rhs = inner(eval_var_deriv(euler_operator(density), u, real), phi) * grid.dx
        assert abs(lhs - rhs) <= 1e-6 * (1.0 + abs(rhs))

    def test_defining_relation_random_densities(self, grid, real):
        rng = np.random.default_rng(42)
        for seed in range(25):
            density = random_density(rng)
            self._check_defining_relation(density, grid, real, seed=seed)

    def test_linearity(self, grid, real):
        rng = np.random.default_rng(9)
        g1 = random_density(rng)
        g2 = random_density(rng)
        u = random_gridfunction(rng, grid)
        combined = eval_var_deriv(
            euler_operator(2.0 * g1 + (-0.5) * g2), u, real
        ).values
        split = (
            2.0 * eval_var_deriv(euler_operator(g1), u, real).values
            - 0.5 * eval_var_deriv(euler_operator(g2), u, real).values
        )
        assert np.max(np.abs(combined - split)) < 1e-10


class TestEvalDensity:
    def test_constant_state(self):
        from polint.grid import default_realisation

        grid = Grid1D(10, 0.1)  # length-1 grid
        u = GridFunction(grid, 2.0 * np.ones(10))
        real = default_realisation(grid)
        assert np.isclose(hamiltonian_d(parse_density("0.5*u^2"), u, real), 2.0)

    def test_zero_state(self, grid, real):
        u = GridFunction(grid, np.zeros(grid.n_points))
        assert hamiltonian_d(kdv_density(), u, real) == 0.0

    def test_against_rectangle_rule_script(self, grid, real):
        # independent brute-force evaluation: loop over points, apply the
        # stencils by hand, sum the density
        from polint.analysis import soliton_values

        u = GridFunction(grid, soliton_values(grid, -5.0, 1.0, 0.0))
        n, dx = grid.n_points, grid.dx
        total = 0.0
        for i in range(n):
            ux = (u.values[(i + 1) % n] - u.values[i - 1]) / (2.0 * dx)
            total += (0.5 * ux**2 - u.values[i] ** 3 / 3.0) * dx
        assert np.isclose(hamiltonian_d(kdv_density(), u, real), total, rtol=1e-13)

    def test_missing_realisation(self, grid):
        from polint.grid import make_standard_ops

        u = GridFunction(grid, np.zeros(grid.n_points))
        only_identity = {0: make_standard_ops(grid)["identity"]}
        with pytest.raises(KeyError):
            eval_density(parse_density("u_xxx^2"), u, only_identity)


def test_gkdv_density_values():
    g = gkdv_density(5)
    coeffs = {m.powers: m.coeff for m in g.terms}
    assert coeffs[((indet(0), 5),)] == -1.0 / 5
    assert coeffs[((indet(1), 2),)] == 0.5
    with pytest.raises(ValueError):
        gkdv_density(2)
