"""Discrete variational derivatives.

The AVF discrete variational derivative averages the variational
derivative along the straight segment between two states, with the
segment integral done by Gauss-Legendre quadrature that is exact for
polynomial densities. The polarised variant averages over the first slot
only, which leaves the new state appearing linearly and admits an
affine decomposition solved in one linear system per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .density import (
    DensityPoly,
    Powers,
    euler_operator,
    eval_poly_on_stack,
    partial,
)
from .grid import DiffOp, Grid1D, GridFunction
from .polarisation import PolarisedDensity


@lru_cache(maxsize=None)
def _gl_nodes(n: int):
    """Gauss-Legendre nodes/weights on [0, 1]; exact for degree 2n-1."""
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


def _nodes_for_degree(deg: int) -> int:
    return max(1, math.ceil((deg + 1) / 2))


@dataclass(frozen=True, eq=False)
class AffineOperator:
    """w -> matrix @ w + offset on one grid."""

    grid: Grid1D
    matrix: np.ndarray
    offset: np.ndarray

    def apply_values(self, w: np.ndarray) -> np.ndarray:
        return self.matrix @ w + self.offset

    def apply(self, w: GridFunction) -> GridFunction:
        if w.grid != self.grid:
            raise ValueError("grid mismatch")
        return GridFunction(self.grid, self.apply_values(w.values))


# ---------------------------------------------------------------------------
# AVF discrete variational derivative (one-step)


@lru_cache(maxsize=None)
def _euler_partials(density: DensityPoly):
    return euler_operator(density).terms


@lru_cache(maxsize=None)
def _second_partials(density: DensityPoly):
    out = []
    for j_order, pj in _euler_partials(density):
        for z in sorted(pj.indeterminates()):
            pjk = partial(pj, z)
            if not pjk.is_zero:
                out.append((j_order, z.deriv_order, pjk))
    return tuple(out)


def _order_stack(values: np.ndarray, orders, real) -> np.ndarray:
    n = values.shape[0]
    if not orders:
        return np.zeros((1, n))
    return np.stack([real[o].apply_values(values) for o in orders])


def avf_dvd(
    density: DensityPoly,
    v: GridFunction,
    u: GridFunction,
    real: dict[int, DiffOp],
) -> GridFunction:
    """AVF discrete variational derivative between states v and u.

    Satisfies H_d(u) - H_d(v) = <dvd, u - v> dx and reduces to the
    variational derivative at u = v.
    """
    if u.grid != v.grid:
        raise ValueError("grid mismatch")
    out = avf_dvd_values(density, v.values, u.values, real)
    return GridFunction(u.grid, out)


def avf_dvd_values(density, v_values, u_values, real) -> np.ndarray:
    partials = _euler_partials(density)
    orders = tuple(sorted({z.deriv_order for _, p in partials for z in p.indeterminates()}))
    a = _order_stack(u_values, orders, real)
    b = _order_stack(v_values, orders, real)
    n = u_values.shape[0]
    deg = max((p.degree for _, p in partials), default=0)
    nodes, weights = _gl_nodes(_nodes_for_degree(deg))
    out = np.zeros(n)
    for j_order, pj in partials:
        acc = np.zeros(n)
        for xi, w in zip(nodes, weights):
            blend = xi * a + (1.0 - xi) * b
            acc += w * eval_poly_on_stack(pj, blend, orders, n)
        out += real[j_order].transpose().apply_values(acc)
    return out


def avf_jacobian_values(density, v_values, u_values, real, dense) -> np.ndarray:
    """d/du of avf_dvd_values, assembled dense. ``dense`` maps order -> (T, T^t)."""
    seconds = _second_partials(density)
    orders = tuple(
        sorted({z.deriv_order for _, _, p in seconds for z in p.indeterminates()})
    )
    a = _order_stack(u_values, orders, real)
    b = _order_stack(v_values, orders, real)
    n = u_values.shape[0]
    deg = max((p.degree for _, _, p in seconds), default=0) + 1
    nodes, weights = _gl_nodes(_nodes_for_degree(deg))
    jac = np.zeros((n, n))
    for j_order, k_order, pjk in seconds:
        m = np.zeros(n)
        for xi, w in zip(nodes, weights):
            blend = xi * a + (1.0 - xi) * b
            m += w * xi * eval_poly_on_stack(pjk, blend, orders, n)
        _, tj_t = dense[j_order]
        tk, _ = dense[k_order]
        jac += tj_t @ (m[:, None] * tk)
    return jac


def euler_jacobian_values(density, w_values, real, dense) -> np.ndarray:
    """Jacobian of the plain variational-derivative evaluation at w."""
    seconds = _second_partials(density)
    orders = tuple(
        sorted({z.deriv_order for _, _, p in seconds for z in p.indeterminates()})
    )
    stack = _order_stack(w_values, orders, real)
    n = w_values.shape[0]
    jac = np.zeros((n, n))
    for j_order, k_order, pjk in seconds:
        m = eval_poly_on_stack(pjk, stack, orders, n)
        _, tj_t = dense[j_order]
        tk, _ = dense[k_order]
        jac += tj_t @ (m[:, None] * tk)
    return jac


def dense_ops(real: dict[int, DiffOp]) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Dense (T, T^t) pairs for each realised derivative order."""
    return {
        o: (op.to_dense(), op.transpose().to_dense()) for o, op in real.items()
    }


# ---------------------------------------------------------------------------
# Furihata closed forms (the two density classes with a closed-form DVD)


def furihata_dvd_type1(
    j_order: int,
    k_order: int,
    v: GridFunction,
    u: GridFunction,
    real: dict[int, DiffOp],
    coeff: float = 1.0,
) -> GridFunction:
    """Closed-form DVD of coeff * (d_J u)(d_K u).

    Equals (delta_J^T delta_K + delta_K^T delta_J)((u+v)/2), the discrete
    realisation of ((-1)^|J| + (-1)^|K|) d_{J+K} (u+v)/2.
    """
    if u.grid != v.grid:
        raise ValueError("grid mismatch")
    avg = 0.5 * (u.values + v.values)
    op_j, op_k = real[j_order], real[k_order]
    out = op_j.transpose().apply_values(op_k.apply_values(avg))
    out += op_k.transpose().apply_values(op_j.apply_values(avg))
    return GridFunction(u.grid, coeff * out)


def furihata_dvd_type2(
    g,
    g_prime,
    j_order: int,
    v: GridFunction,
    u: GridFunction,
    real: dict[int, DiffOp],
    tol_factor: float = 1e-8,
) -> GridFunction:
    """Closed-form DVD of g(d_J u) via the divided-difference quotient.

    Where |d_J u - d_J v| is below tol_factor * (1 + |d_J u| + |d_J v|)
    the removable singularity is filled with g'(midpoint).
    """
    if u.grid != v.grid:
        raise ValueError("grid mismatch")
    op = real[j_order]
    a = op.apply_values(u.values)
    b = op.apply_values(v.values)
    diff = a - b
    small = np.abs(diff) < tol_factor * (1.0 + np.abs(a) + np.abs(b))
    safe = np.where(small, 1.0, diff)
    quotient = np.where(small, g_prime(0.5 * (a + b)), (g(a) - g(b)) / safe)
    return GridFunction(u.grid, op.transpose().apply_values(quotient))


# ---------------------------------------------------------------------------
# PAVF discrete variational derivative (k+1 arguments)


@dataclass(frozen=True)
class _GradTerm:
    coeff: float
    slot1_rest: Powers            # remaining first-slot factors (xi-blended)
    known: tuple[Powers, ...]     # slots 2..k, held fixed


@lru_cache(maxsize=None)
def _slot1_gradient(pd: PolarisedDensity):
    """dG/d(slot-1 indeterminate), grouped by the outer derivative order."""
    grouped: dict[int, list[_GradTerm]] = {}
    for t in pd.terms:
        slot1 = t.slots[0]
        for i, (z, e) in enumerate(slot1):
            rest = slot1[:i] + ((z, e - 1),) + slot1[i + 1 :]
            rest = tuple((zz, ee) for zz, ee in rest if ee > 0)
            grouped.setdefault(z.deriv_order, []).append(
                _GradTerm(t.coeff * e, rest, t.slots[1:])
            )
    return tuple(sorted((j, tuple(terms)) for j, terms in grouped.items()))


def _needed_orders(pd: PolarisedDensity) -> tuple[int, ...]:
    orders = set()
    for _, terms in _slot1_gradient(pd):
        for term in terms:
            orders.update(z.deriv_order for z, _ in term.slot1_rest)
            for slot in term.known:
                orders.update(z.deriv_order for z, _ in slot)
    return tuple(sorted(orders))


def _powers_product(powers: Powers, values: dict[int, np.ndarray], n: int) -> np.ndarray:
    out = np.ones(n)
    for z, e in powers:
        out *= values[z.deriv_order] ** e
    return out


def pavf_dvd(
    pd: PolarisedDensity,
    ws: Sequence[GridFunction],
    real: dict[int, DiffOp],
) -> GridFunction:
    """Polarised AVF DVD of k+1 states: the first-slot segment average.

    Satisfies the telescoping identity
    H_d[w_2..w_{k+1}] - H_d[w_1..w_k] = <dvd, w_{k+1} - w_1> dx.
    """
    if len(ws) != pd.k + 1:
        raise ValueError(f"expected {pd.k + 1} arguments, got {len(ws)}")
    grid = ws[0].grid
    if any(w.grid != grid for w in ws):
        raise ValueError("grid mismatch among arguments")
    out = pavf_dvd_values(pd, [w.values for w in ws], real)
    return GridFunction(grid, out)


def pavf_dvd_values(pd, ws_values, real) -> np.ndarray:
    n = ws_values[0].shape[0]
    orders = _needed_orders(pd)
    first = {o: real[o].apply_values(ws_values[0]) for o in orders}
    last = {o: real[o].apply_values(ws_values[-1]) for o in orders}
    knowns = [
        {o: real[o].apply_values(w) for o in orders} for w in ws_values[1:-1]
    ]
    deg = max(
        (
            sum(e for _, e in term.slot1_rest)
            for _, terms in _slot1_gradient(pd)
            for term in terms
        ),
        default=0,
    )
    nodes, weights = _gl_nodes(max(2, _nodes_for_degree(deg)))
    out = np.zeros(n)
    for j_order, terms in _slot1_gradient(pd):
        acc = np.zeros(n)
        for term in terms:
            base = np.full(n, term.coeff)
            for j, slot in enumerate(term.known):
                base *= _powers_product(slot, knowns[j], n)
            if term.slot1_rest:
                blended = np.zeros(n)
                for xi, w in zip(nodes, weights):
                    vals = {
                        o: xi * last[o] + (1.0 - xi) * first[o] for o in orders
                    }
                    blended += w * _powers_product(term.slot1_rest, vals, n)
                acc += base * blended
            else:
                acc += base
        out += real[j_order].transpose().apply_values(acc)
    return out


def split_matrix_is_constant(pd: PolarisedDensity) -> bool:
    """True when the affine split's matrix does not depend on the history."""
    for _, terms in _slot1_gradient(pd):
        for term in terms:
            if term.slot1_rest and any(slot for slot in term.known):
                return False
    return True


def affine_split_arrays(
    pd: PolarisedDensity,
    ws_values: Sequence[np.ndarray],
    real: dict[int, DiffOp],
    dense: dict[int, tuple[np.ndarray, np.ndarray]],
    compute_matrix: bool = True,
):
    """Assemble (matrix, offset) of w -> pavf_dvd(pd, [*ws, w]) on raw arrays."""
    n = ws_values[0].shape[0]
    if pd.max_slot_degree() > 2:
        raise ValueError("polarisation is not quadratic per slot")
    orders = _needed_orders(pd)
    first = {o: real[o].apply_values(ws_values[0]) for o in orders}
    knowns = [
        {o: real[o].apply_values(w) for o in orders} for w in ws_values[1:]
    ]
    matrix = np.zeros((n, n)) if compute_matrix else None
    offset = np.zeros(n)
    for j_order, terms in _slot1_gradient(pd):
        off_j = np.zeros(n)
        lin_j: dict[int, np.ndarray] = {}
        for term in terms:
            base = np.full(n, term.coeff)
            for j, slot in enumerate(term.known):
                base *= _powers_product(slot, knowns[j], n)
            if not term.slot1_rest:
                off_j += base
                continue
            (z, e), = term.slot1_rest
            if e != 1:
                raise ValueError("polarisation is not quadratic per slot")
            k_order = z.deriv_order
            half = 0.5 * base
            off_j += half * first[k_order]
            if k_order in lin_j:
                lin_j[k_order] += half
            else:
                lin_j[k_order] = half.copy()
        op_t = real[j_order].transpose()
        offset += op_t.apply_values(off_j)
        if compute_matrix:
            _, tj_t = dense[j_order]
            for k_order, q in lin_j.items():
                tk, _ = dense[k_order]
                matrix += tj_t @ (q[:, None] * tk)
    return matrix, offset


def pavf_affine_split(
    pd: PolarisedDensity,
    ws: Sequence[GridFunction],
    real: dict[int, DiffOp],
) -> AffineOperator:
    """Decompose w -> pavf_dvd(pd, [*ws, w]) into matrix action plus offset."""
    if len(ws) != pd.k:
        raise ValueError(f"expected {pd.k} known arguments, got {len(ws)}")
    grid = ws[0].grid
    if any(w.grid != grid for w in ws):
        raise ValueError("grid mismatch among arguments")
    dense = dense_ops(real)
    matrix, offset = affine_split_arrays(
        pd, [w.values for w in ws], real, dense, compute_matrix=True
    )
    return AffineOperator(grid, matrix, offset)
