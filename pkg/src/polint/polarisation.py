"""Polarised densities: k-argument, cyclically invariant, per-slot quadratic.

A degree-p monomial is pair-grouped in canonical factor order into at most
ceil(p/2) pair factors, placed in slots and averaged over the k cyclic
shifts. Quadratic monomials additionally carry the one-parameter blend

    theta * (same-slot pair) + (1 - theta) * (split over adjacent slots),

applied uniformly to every degree-2 monomial, including cross terms.

Coefficients are kept as ``weight * (mult / div)`` with the cyclic
multiplicity ``mult`` and ``div = k`` as exact integers, so collapsing all
slots back to one argument reproduces the source coefficients without
rounding whenever the blend weights are exact (theta in {0, 1/2, 1}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from ._kernels import power_product_accum
from .density import (
    DensityPoly,
    Indeterminate,
    Monomial,
    Powers,
    _canonical_powers,
)
from .grid import DiffOp, GridFunction

Slots = tuple[Powers, ...]


@dataclass(frozen=True)
class PolarisedMonomial:
    """One slot-tagged monomial with coefficient weight * (mult / div)."""

    weight: float
    mult: int
    div: int
    slots: Slots

    @property
    def coeff(self) -> float:
        return self.weight * (self.mult / self.div)

    def slot_degree(self, i: int) -> int:
        return sum(e for _, e in self.slots[i])

    def max_slot_degree(self) -> int:
        return max(self.slot_degree(i) for i in range(len(self.slots)))

    def shifted(self) -> "PolarisedMonomial":
        return PolarisedMonomial(
            self.weight, self.mult, self.div, self.slots[1:] + self.slots[:1]
        )


@dataclass(frozen=True)
class PolarisedDensity:
    k: int
    theta: float
    terms: tuple[PolarisedMonomial, ...]

    def max_slot_degree(self) -> int:
        return max((t.max_slot_degree() for t in self.terms), default=0)

    def deriv_orders(self) -> set[int]:
        return {
            z.deriv_order for t in self.terms for slot in t.slots for z, _ in slot
        }


def _merge_patterns(raw: list[PolarisedMonomial]) -> tuple[PolarisedMonomial, ...]:
    """Merge identical (weight, slots) patterns by integer multiplicity."""
    acc: dict[tuple[float, int, Slots], int] = {}
    order: list[tuple[float, int, Slots]] = []
    for t in raw:
        key = (t.weight, t.div, t.slots)
        if key not in acc:
            order.append(key)
            acc[key] = 0
        acc[key] += t.mult
    return tuple(
        PolarisedMonomial(w, acc[(w, d, s)], d, s)
        for (w, d, s) in order
        if w != 0.0
    )


def _empty_slots(k: int) -> list[Powers]:
    return [() for _ in range(k)]


def _cyclic_patterns(weight: float, k: int, slots: Slots) -> list[PolarisedMonomial]:
    out = []
    current = slots
    for _ in range(k):
        out.append(PolarisedMonomial(weight, 1, k, current))
        current = current[1:] + current[:1]
    return out


def polarise(
    density: DensityPoly,
    k: int,
    theta: float = 0.5,
    permutation: Sequence[int] | None = None,
) -> PolarisedDensity:
    """Quadratic polarisation of a polynomial density over k slots.

    Requires k >= ceil(p/2) for the density degree p. ``permutation``
    optionally reorders each monomial's flat factor list before pair
    grouping (all monomials must then have matching degree).
    """
    if k < 2:
        raise ValueError(f"polarisation needs k >= 2, got {k}")
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    p = density.degree
    if k < math.ceil(p / 2):
        raise ValueError(
            f"k = {k} is too small for degree {p}; need k >= {math.ceil(p / 2)}"
        )

    raw: list[PolarisedMonomial] = []
    for mono in density.terms:
        flat: list[Indeterminate] = []
        for z, e in mono.powers:
            flat.extend([z] * e)
        if permutation is not None:
            if sorted(permutation) != list(range(len(flat))):
                raise ValueError(
                    f"permutation {permutation!r} does not match degree {len(flat)}"
                )
            flat = [flat[i] for i in permutation]

        if len(flat) == 2:
            zj, zk = flat
            if theta != 0.0:
                slots = _empty_slots(k)
                slots[0] = _canonical_powers([(zj, 1), (zk, 1)])
                raw.extend(_cyclic_patterns(mono.coeff * theta, k, tuple(slots)))
            if theta != 1.0:
                slots = _empty_slots(k)
                slots[0] = _canonical_powers([(zj, 1)])
                slots[1 % k] = _canonical_powers([(zk, 1)])
                raw.extend(_cyclic_patterns(mono.coeff * (1.0 - theta), k, tuple(slots)))
            continue

        slots = _empty_slots(k)
        n_pairs = len(flat) // 2
        for r in range(n_pairs):
            slots[r] = _canonical_powers([(flat[2 * r], 1), (flat[2 * r + 1], 1)])
        if len(flat) % 2 == 1:
            slots[n_pairs] = _canonical_powers([(flat[-1], 1)])
        raw.extend(_cyclic_patterns(mono.coeff, k, tuple(slots)))

    return PolarisedDensity(k, theta, _merge_patterns(raw))


def collapse(pd: PolarisedDensity) -> DensityPoly:
    """Substitute one argument into every slot and merge.

    Multiplicities of terms sharing a weight are summed as integers before
    any float multiplication, so a full cyclic orbit contributes
    weight * (k/k) = weight exactly.
    """
    groups: dict[Powers, dict[tuple[float, int], int]] = {}
    order: list[Powers] = []
    for t in pd.terms:
        merged: list[tuple[Indeterminate, int]] = []
        for slot in t.slots:
            merged.extend(slot)
        key = _canonical_powers(merged)
        if key not in groups:
            groups[key] = {}
            order.append(key)
        sub = groups[key]
        wkey = (t.weight, t.div)
        sub[wkey] = sub.get(wkey, 0) + t.mult
    monos = []
    for key in order:
        coeff = 0.0
        for (w, d), m in sorted(groups[key].items()):
            coeff += w * (m / d)
        if coeff != 0.0:
            monos.append(Monomial(coeff, key))
    return DensityPoly.from_terms(monos)


@lru_cache(maxsize=None)
def _polarised_eval_plan(pd: PolarisedDensity):
    """Rows/exponent arrays per term against a (slot, order) value stack."""
    orders = tuple(sorted(pd.deriv_orders()))
    row_of = {
        (j, o): j * len(orders) + i
        for j in range(pd.k)
        for i, o in enumerate(orders)
    }
    plan = []
    for t in pd.terms:
        rows = []
        exps = []
        for j, slot in enumerate(t.slots):
            for z, e in slot:
                rows.append(row_of[(j, z.deriv_order)])
                exps.append(e)
        plan.append(
            (
                np.array(rows, dtype=np.int64),
                np.array(exps, dtype=np.int64),
                t.coeff,
            )
        )
    return orders, plan


def eval_polarised(
    pd: PolarisedDensity, ws: Sequence[GridFunction], real: dict[int, DiffOp]
) -> float:
    """Discrete polarised Hamiltonian H_d[w_1, ..., w_k]."""
    if len(ws) != pd.k:
        raise ValueError(f"expected {pd.k} arguments, got {len(ws)}")
    grid = ws[0].grid
    if any(w.grid != grid for w in ws):
        raise ValueError("grid mismatch among arguments")
    orders, plan = _polarised_eval_plan(pd)
    n = grid.n_points
    if orders:
        stack = np.empty((pd.k * len(orders), n))
        for j, w in enumerate(ws):
            for i, o in enumerate(orders):
                stack[j * len(orders) + i] = real[o].apply_values(w.values)
    else:
        stack = np.zeros((1, n))
    out = np.zeros(n)
    for rows, exps, coeff in plan:
        power_product_accum(out, stack, rows, exps, coeff)
    return float(np.sum(out) * grid.dx)


def polarise_gkdv(p: int, theta: float = 0.5) -> PolarisedDensity:
    """Polarisation of the gKdV density over k = ceil(p/2) slots.

    The nonlinear part pairs into the product-type slot patterns; the
    quadratic derivative term carries the theta blend for k = 2 and the
    plain per-slot average (1/2k) sum_i (w_i)_x^2 for k >= 3.
    """
    if p < 3:
        raise ValueError(f"gKdV requires p >= 3, got {p}")
    from .density import gkdv_density

    k = math.ceil(p / 2)
    return polarise(gkdv_density(p), k, theta if k == 2 else 1.0)


def polarisation_json(pd: PolarisedDensity) -> dict:
    """Slot-tagged monomial list for inspection dumps."""
    return {
        "k": pd.k,
        "theta": pd.theta,
        "terms": [
            {
                "coeff": t.coeff,
                "slots": [
                    [{"order": z.deriv_order, "exp": e} for z, e in slot]
                    for slot in t.slots
                ],
            }
            for t in pd.terms
        ],
    }
