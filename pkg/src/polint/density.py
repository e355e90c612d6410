"""Polynomial densities in derivative indeterminates and their calculus.

A density is a polynomial in the indeterminates u, u_x, u_xx, ... (scalar
u, one space dimension). The module provides formal partial derivatives,
the variational derivative via the discrete Euler operator (outer total
derivatives realised as transposed difference operators), pointwise
evaluation on grid functions, and a small text DSL.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._kernels import power_product_accum
from .grid import DiffOp, Grid1D, GridFunction

NU_MAX = 4

Powers = tuple[tuple["Indeterminate", int], ...]


@dataclass(frozen=True, order=True)
class Indeterminate:
    """One derivative indeterminate u_J; ``deriv_order`` is |J| for d = 1."""

    deriv_order: int
    component: int = 0

    def __post_init__(self):
        if not 0 <= self.deriv_order <= NU_MAX:
            raise ValueError(
                f"derivative order must be in [0, {NU_MAX}], got {self.deriv_order}"
            )
        if self.component != 0:
            raise ValueError("only scalar problems (component 0) are supported")


def indet(order: int) -> Indeterminate:
    return Indeterminate(order)


_DSL_NAMES = {0: "u", 1: "u_x", 2: "u_xx", 3: "u_xxx", 4: "u_xxxx"}


def _canonical_powers(powers) -> Powers:
    acc: dict[Indeterminate, int] = {}
    for z, e in powers:
        if e < 0:
            raise ValueError("negative exponent")
        if e:
            acc[z] = acc.get(z, 0) + e
    return tuple(sorted(acc.items()))


@dataclass(frozen=True)
class Monomial:
    """coeff * prod_z z**e with factors in canonical sorted order."""

    coeff: float
    powers: Powers

    @staticmethod
    def make(coeff: float, powers) -> "Monomial":
        return Monomial(float(coeff), _canonical_powers(powers))

    @property
    def degree(self) -> int:
        return sum(e for _, e in self.powers)

    def partial(self, z: Indeterminate) -> "Monomial | None":
        """Formal derivative with respect to z; None when z is absent."""
        for i, (zi, e) in enumerate(self.powers):
            if zi == z:
                rest = self.powers[:i] + ((zi, e - 1),) + self.powers[i + 1 :]
                return Monomial.make(self.coeff * e, rest)
        return None

    def __str__(self):
        parts = [repr(self.coeff)]
        for z, e in self.powers:
            name = _DSL_NAMES[z.deriv_order]
            parts.append(name if e == 1 else f"{name}^{e}")
        return "*".join(parts)


@dataclass(frozen=True)
class DensityPoly:
    """Canonical sum of monomials (merged, sorted, zero terms dropped)."""

    terms: tuple[Monomial, ...]

    @staticmethod
    def from_terms(terms) -> "DensityPoly":
        acc: dict[Powers, float] = {}
        for t in terms:
            acc[t.powers] = acc.get(t.powers, 0.0) + t.coeff
        merged = tuple(
            Monomial(c, p) for p, c in sorted(acc.items()) if c != 0.0
        )
        return DensityPoly(merged)

    @staticmethod
    def zero() -> "DensityPoly":
        return DensityPoly(())

    @staticmethod
    def constant(value: float) -> "DensityPoly":
        if value == 0.0:
            return DensityPoly.zero()
        return DensityPoly((Monomial(float(value), ()),))

    @staticmethod
    def variable(order: int) -> "DensityPoly":
        return DensityPoly((Monomial(1.0, ((indet(order), 1),)),))

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def degree(self) -> int:
        return max((t.degree for t in self.terms), default=0)

    def indeterminates(self) -> set[Indeterminate]:
        return {z for t in self.terms for z, _ in t.powers}

    def deriv_orders(self) -> set[int]:
        return {z.deriv_order for z in self.indeterminates()}

    def __add__(self, other: "DensityPoly") -> "DensityPoly":
        return DensityPoly.from_terms(self.terms + other.terms)

    def __sub__(self, other: "DensityPoly") -> "DensityPoly":
        return self + (-other)

    def __neg__(self) -> "DensityPoly":
        return DensityPoly(tuple(Monomial(-t.coeff, t.powers) for t in self.terms))

    def __mul__(self, other):
        if isinstance(other, DensityPoly):
            out = []
            for a in self.terms:
                for b in other.terms:
                    out.append(Monomial.make(a.coeff * b.coeff, a.powers + b.powers))
            return DensityPoly.from_terms(out)
        return DensityPoly.from_terms(
            Monomial(t.coeff * float(other), t.powers) for t in self.terms
        )

    __rmul__ = __mul__

    def __pow__(self, exponent: int) -> "DensityPoly":
        if exponent < 0:
            raise ValueError("negative powers are not polynomial")
        out = DensityPoly.constant(1.0)
        for _ in range(exponent):
            out = out * self
        return out

    def __str__(self):
        return " + ".join(map(str, self.terms)) if self.terms else "0"


def partial(density: DensityPoly, z: Indeterminate) -> DensityPoly:
    """Formal partial derivative of the density with respect to z."""
    out = []
    for t in density.terms:
        d = t.partial(z)
        if d is not None:
            out.append(d)
    return DensityPoly.from_terms(out)


@dataclass(frozen=True)
class VarDerivExpr:
    """Variational derivative sum_J (outer J) [ dG/du_J ].

    Each entry pairs the outer derivative order J with the inner
    polynomial dG/du_J. The sign (-1)^|J| of the Euler operator is not
    stored: in the discrete realisation the outer derivative is applied
    as transpose(delta_J), which carries that sign for the standard
    centered/composed operators.
    """

    terms: tuple[tuple[int, DensityPoly], ...]


def euler_operator(density: DensityPoly) -> VarDerivExpr:
    out = []
    for order in sorted(density.deriv_orders()):
        inner = partial(density, indet(order))
        if not inner.is_zero:
            out.append((order, inner))
    return VarDerivExpr(tuple(out))


# ---------------------------------------------------------------------------
# pointwise evaluation


@lru_cache(maxsize=None)
def _eval_plan(density: DensityPoly):
    """Per-monomial (rows, exps, coeff) against a stacked factor array."""
    orders = tuple(sorted(density.deriv_orders()))
    row_of = {o: i for i, o in enumerate(orders)}
    plan = []
    for t in density.terms:
        rows = np.array([row_of[z.deriv_order] for z, _ in t.powers], dtype=np.int64)
        exps = np.array([e for _, e in t.powers], dtype=np.int64)
        plan.append((rows, exps, t.coeff))
    return orders, plan


def factor_stack(orders, values: np.ndarray, real: dict[int, DiffOp]) -> np.ndarray:
    """Stack delta_J u rows for the requested derivative orders."""
    if not orders:
        return np.zeros((0, values.shape[0]))
    return np.stack([real[o].apply_values(values) for o in orders])


def eval_density_values(
    density: DensityPoly, values: np.ndarray, real: dict[int, DiffOp]
) -> np.ndarray:
    orders, plan = _eval_plan(density)
    stack = factor_stack(orders, values, real)
    out = np.zeros_like(values)
    for rows, exps, coeff in plan:
        power_product_accum(out, stack, rows, exps, coeff)
    return out


@lru_cache(maxsize=None)
def _plan_against(density: DensityPoly, orders: tuple[int, ...]):
    row_of = {o: i for i, o in enumerate(orders)}
    plan = []
    for t in density.terms:
        rows = np.array([row_of[z.deriv_order] for z, _ in t.powers], dtype=np.int64)
        exps = np.array([e for _, e in t.powers], dtype=np.int64)
        plan.append((rows, exps, t.coeff))
    return plan


def eval_poly_on_stack(
    density: DensityPoly, stack: np.ndarray, orders: tuple[int, ...], n: int
) -> np.ndarray:
    """Evaluate against precomputed factor rows (one row per order)."""
    out = np.zeros(n)
    for rows, exps, coeff in _plan_against(density, orders):
        power_product_accum(out, stack, rows, exps, coeff)
    return out


def eval_density(
    density: DensityPoly, u: GridFunction, real: dict[int, DiffOp]
) -> GridFunction:
    """Pointwise density values G_d((delta_J u))_i."""
    missing = density.deriv_orders() - set(real)
    if missing:
        raise KeyError(f"no realisation for derivative orders {sorted(missing)}")
    return GridFunction(u.grid, eval_density_values(density, u.values, real))


def hamiltonian_d(
    density: DensityPoly, u: GridFunction, real: dict[int, DiffOp]
) -> float:
    """Discrete Hamiltonian sum_i b_i (G_d)_i dx with unit weights."""
    return float(np.sum(eval_density(density, u, real).values) * u.grid.dx)


def eval_var_deriv(
    expr: VarDerivExpr, u: GridFunction, real: dict[int, DiffOp]
) -> GridFunction:
    """Discrete variational derivative sum_J transpose(delta_J)[dG/du_J](u)."""
    out = np.zeros(u.grid.n_points)
    for order, inner in expr.terms:
        vals = eval_density_values(inner, u.values, real)
        out += real[order].transpose().apply_values(vals)
    return GridFunction(u.grid, out)


# ---------------------------------------------------------------------------
# density DSL
#
# expr   := term (('+'|'-') term)*
# term   := unary (('*'|'/') unary)*
# unary  := ('+'|'-')* power
# power  := atom ('^' integer)?
# atom   := NUMBER | IDENT | '(' expr ')'
# IDENT  := u | u_x | u_xx | u_xxx | u_xxxx
#
# Division requires a constant divisor, which covers rational literals
# such as (1/3).

_TOKEN = re.compile(r"\s*(?:(\d+\.\d*|\.\d+|\d+)|(u(?:_x{1,4})?)|([()+\-*/^]))")
_IDENT_ORDER = {name: order for order, name in _DSL_NAMES.items()}


class DensityParseError(ValueError):
    pass


def _tokenise(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise DensityParseError(
                f"unexpected character {text[pos:].lstrip()[0]!r} at position {pos}"
            )
        num, ident, op = m.groups()
        if num is not None:
            tokens.append(("num", float(num)))
        elif ident is not None:
            tokens.append(("ident", ident))
        else:
            tokens.append(("op", op))
        pos = m.end()
    tokens.append(("end", None))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def next(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op):
        kind, val = self.next()
        if kind != "op" or val != op:
            raise DensityParseError(f"expected {op!r}, got {val!r}")

    def parse_expr(self) -> DensityPoly:
        acc = self.parse_term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            _, op = self.next()
            rhs = self.parse_term()
            acc = acc + rhs if op == "+" else acc - rhs
        return acc

    def parse_term(self) -> DensityPoly:
        acc = self.parse_unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            _, op = self.next()
            rhs = self.parse_unary()
            if op == "*":
                acc = acc * rhs
            else:
                if rhs.degree != 0 or rhs.is_zero:
                    raise DensityParseError("divisor must be a nonzero constant")
                acc = acc * (1.0 / rhs.terms[0].coeff)
        return acc

    def parse_unary(self) -> DensityPoly:
        sign = 1.0
        while self.peek() in (("op", "+"), ("op", "-")):
            _, op = self.next()
            if op == "-":
                sign = -sign
        return sign * self.parse_power()

    def parse_power(self) -> DensityPoly:
        base = self.parse_atom()
        if self.peek() == ("op", "^"):
            self.next()
            kind, val = self.next()
            if kind != "num" or val != int(val):
                raise DensityParseError("exponent must be a non-negative integer")
            return base ** int(val)
        return base

    def parse_atom(self) -> DensityPoly:
        kind, val = self.next()
        if kind == "num":
            return DensityPoly.constant(val)
        if kind == "ident":
            return DensityPoly.variable(_IDENT_ORDER[val])
        if kind == "op" and val == "(":
            inner = self.parse_expr()
            self.expect_op(")")
            return inner
        raise DensityParseError(f"unexpected token {val!r}")


def parse_density(text: str) -> DensityPoly:
    """Parse the density DSL, e.g. ``"0.5*u_x^2 - (1/3)*u^3"``."""
    parser = _Parser(_tokenise(text))
    out = parser.parse_expr()
    if parser.peek() != ("end", None):
        raise DensityParseError(f"trailing input after expression: {parser.peek()[1]!r}")
    return out


def kdv_density() -> DensityPoly:
    """The cubic KdV Hamiltonian density 1/2 u_x^2 - 1/3 u^3."""
    return gkdv_density(3)


def gkdv_density(p: int) -> DensityPoly:
    """Generalised KdV density 1/2 u_x^2 - (1/p) u^p for integer p >= 3."""
    if p < 3:
        raise ValueError(f"gKdV requires p >= 3, got {p}")
    u = DensityPoly.variable(0)
    ux = DensityPoly.variable(1)
    return 0.5 * (ux * ux) - (1.0 / p) * u**p
