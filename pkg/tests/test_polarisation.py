import numpy as np
import pytest

from polint.density import DensityPoly, Monomial, gkdv_density, hamiltonian_d, indet, kdv_density, parse_density
from polint.grid import GridFunction
from polint.polarisation import (
    PolarisedDensity,
    PolarisedMonomial,
    collapse,
    eval_polarised,
    polarisation_json,
    polarise,
    polarise_gkdv,
)

from conftest import random_density, random_gridfunction


def slot_map(pd):
    """{slots-as-order-tuples: coeff} for readable pattern assertions."""
    out = {}
    for t in pd.terms:
        key = tuple(tuple((z.deriv_order, e) for z, e in slot) for slot in t.slots)
        out[key] = out.get(key, 0.0) + t.coeff
    return out


class TestMonomialPatterns:
    def test_cubic_k2(self):
        # u^3 -> u v (u + v)/2, i.e. 1/2 u^2 v + 1/2 u v^2
        pd = polarise(DensityPoly.variable(0) ** 3, 2, 0.5)
        patterns = slot_map(pd)
        assert patterns == {
            (((0, 2),), ((0, 1),)): 0.5,
            (((0, 1),), ((0, 2),)): 0.5,
        }

    def test_quartic_k2(self):
        pd = polarise(DensityPoly.variable(0) ** 4, 2, 0.5)
        assert slot_map(pd) == {(((0, 2),), ((0, 2),)): 1.0}

    def test_quadratic_theta_blend(self):
        theta = 0.3
        pd = polarise(DensityPoly.variable(1) ** 2, 2, theta)
        patterns = slot_map(pd)
        assert patterns[(((1, 2),), ())] == pytest.approx(theta / 2)
        assert patterns[((), ((1, 2),))] == pytest.approx(theta / 2)
        assert patterns[(((1, 1),), ((1, 1),))] == pytest.approx(1.0 - theta)

    def test_cubic_and_quartic_do_not_depend_on_theta(self):
        for power in (3, 4):
            g = DensityPoly.variable(0) ** power
            assert polarise(g, 2, 0.2).terms == polarise(g, 2, 0.9).terms

    def test_preconditions(self):
        g = DensityPoly.variable(0) ** 5
        with pytest.raises(ValueError):
            polarise(g, 2, 0.5)  # k too small for degree 5
        with pytest.raises(ValueError):
            polarise(g, 3, 1.5)
        with pytest.raises(ValueError):
            polarise(g, 1, 0.5)

    def test_permutation_argument(self):
        g = parse_density("u*u_x^2")
        default = polarise(g, 2, 0.5)
        permuted = polarise(g, 2, 0.5, permutation=[1, 2, 0])
        assert default != permuted
        assert collapse(permuted) == g
        with pytest.raises(ValueError):
            polarise(g, 2, 0.5, permutation=[0, 1])


class TestConsistencyAndCyclicity:
    @pytest.mark.parametrize("theta", [0.0, 0.5, 1.0])
    def test_collapse_exact_at_exact_thetas(self, theta):
        rng = np.random.default_rng(13)
        for _ in range(10):
            g = random_density(rng, max_degree=4, max_order=2)
            k = max(2, (g.degree + 1) // 2)
            assert collapse(polarise(g, k, theta)) == g

    def test_collapse_near_exact_at_generic_theta(self):
        rng = np.random.default_rng(14)
        for _ in range(10):
            g = random_density(rng)
            pd = polarise(g, 3, float(rng.uniform(0, 1)))
            back = collapse(pd)
            assert len(back.terms) == len(g.terms)
            for a, b in zip(back.terms, g.terms):
                assert a.powers == b.powers
                assert a.coeff == pytest.approx(b.coeff, rel=1e-14)

    def test_cyclic_shift_invariance(self):
        rng = np.random.default_rng(15)
        for k in (2, 3, 4):
            g = random_density(rng)
            pd = polarise(g, k, 0.5)
            shifted = {(t.weight, t.mult, t.div, t.shifted().slots) for t in pd.terms}
            original = {(t.weight, t.mult, t.div, t.slots) for t in pd.terms}
            assert shifted == original

    def test_slots_at_most_quadratic(self):
        rng = np.random.default_rng(16)
        for _ in range(10):
            g = random_density(rng, max_degree=6)
            k = max(2, (g.degree + 1) // 2)
            assert polarise(g, k, 0.5).max_slot_degree() <= 2

    def test_linearity_in_the_density(self):
        g1 = parse_density("u^3")
        g2 = parse_density("u_x^2")
        joint = polarise(g1 + g2, 2, 0.5)
        merged = slot_map(joint)
        split = slot_map(polarise(g1, 2, 0.5))
        for key, coeff in slot_map(polarise(g2, 2, 0.5)).items():
            split[key] = split.get(key, 0.0) + coeff
        assert set(merged) == set(split)
        for key in merged:
            assert merged[key] == pytest.approx(split[key])

    def test_trivial_polarisation_collapses(self):
        # the averaging construction (1/k) sum_i H[w_i] is itself a valid
        # polarisation; its collapse returns H
        g = kdv_density()
        k = 3
        terms = []
        for mono in g.terms:
            for slot in range(k):
                slots = tuple(
                    mono.powers if j == slot else () for j in range(k)
                )
                terms.append(PolarisedMonomial(mono.coeff, 1, k, slots))
        pd = PolarisedDensity(k, 1.0, tuple(terms))
        assert collapse(pd) == g


class TestEvalPolarised:
    def test_polarised_kdv_hamiltonian_display(self, grid, real):
        # at theta = 1 the two-slot Hamiltonian of the cubic problem is
        # int 1/4 (U_x^2 + V_x^2) - 1/6 (U^2 V + V^2 U) dx
        rng = np.random.default_rng(17)
        pd = polarise_gkdv(3, 1.0)
        u = random_gridfunction(rng, grid)
        v = random_gridfunction(rng, grid)
        ux = real[1].apply_values(u.values)
        vx = real[1].apply_values(v.values)
        manual = np.sum(
            0.25 * (ux**2 + vx**2)
            - (u.values**2 * v.values + v.values**2 * u.values) / 6.0
        ) * grid.dx
        assert np.isclose(eval_polarised(pd, [u, v], real), manual, rtol=1e-13)

    def test_consistency_with_hamiltonian(self, grid, real):
        rng = np.random.default_rng(18)
        u = random_gridfunction(rng, grid)
        pd = polarise_gkdv(3, 0.5)
        assert np.isclose(
            eval_polarised(pd, [u, u], real),
            hamiltonian_d(kdv_density(), u, real),
            rtol=1e-13,
        )

    def test_cyclic_argument_shift(self, grid, real):
        rng = np.random.default_rng(19)
        pd = polarise_gkdv(6, 0.5)
        ws = [random_gridfunction(rng, grid) for _ in range(3)]
        a = eval_polarised(pd, ws, real)
        b = eval_polarised(pd, ws[1:] + ws[:1], real)
        assert np.isclose(a, b, rtol=1e-13)

    def test_argument_validation(self, grid, real):
        rng = np.random.default_rng(20)
        pd = polarise_gkdv(3, 0.5)
        u = random_gridfunction(rng, grid)
        with pytest.raises(ValueError):
            eval_polarised(pd, [u], real)
        from polint.grid import Grid1D

        other = GridFunction(Grid1D(16, 0.5), np.zeros(16))
        with pytest.raises(ValueError):
            eval_polarised(pd, [u, other], real)


class TestGkdvPolarisation:
    def test_collapse_is_exact(self):
        for p in (3, 4, 5, 6, 7, 8):
            assert collapse(polarise_gkdv(p, 0.5)) == gkdv_density(p)

    def test_p3_theta1_matches_two_slot_display(self):
        pd = polarise_gkdv(3, 1.0)
        patterns = slot_map(pd)
        assert patterns[(((1, 2),), ())] == pytest.approx(0.25)
        assert patterns[((), ((1, 2),))] == pytest.approx(0.25)
        assert patterns[(((0, 2),), ((0, 1),))] == pytest.approx(-1.0 / 6)
        assert patterns[(((0, 1),), ((0, 2),))] == pytest.approx(-1.0 / 6)

    def test_odd_p_expands_product_patterns(self):
        # p = 5, k = 3: the nonlinear part is -(1/(pk)) sum_i w_i prod_{j!=i} w_j^2
        pd = polarise_gkdv(5, 0.5)
        patterns = slot_map(pd)
        nonlinear = {
            key: c for key, c in patterns.items() if any((0, 2) in s or (0, 1) in s for s in key)
        }
        expected_coeff = -1.0 / 15
        assert len(nonlinear) == 3
        for coeff in nonlinear.values():
            assert coeff == pytest.approx(expected_coeff)

    def test_quadratic_blend_only_for_two_slots(self):
        # k >= 3 keeps the plain per-slot average of the derivative term
        pd = polarise_gkdv(6, 0.3)
        patterns = slot_map(pd)
        cross = [
            key
            for key in patterns
            if sum(1 for s in key if s == ((1, 1),)) == 2
        ]
        assert cross == []
        assert patterns[(((1, 2),), (), ())] == pytest.approx(1.0 / 6)

    def test_p_validation(self):
        with pytest.raises(ValueError):
            polarise_gkdv(2, 0.5)


def test_polarisation_json_roundtrippable():
    pd = polarise_gkdv(4, 0.5)
    payload = polarisation_json(pd)
    assert payload["k"] == 2
    assert payload["theta"] == 0.5
    total_degree = {
        (tuple(tuple((f["order"], f["exp"]) for f in slot) for slot in t["slots"]))
        for t in payload["terms"]
    }
    assert len(total_degree) == len(payload["terms"])
    import json

    json.dumps(payload)  # serialisable
