"""Uniform periodic 1-D grids and circulant finite-difference operators.

Everything here is an immutable value: grids, grid functions and operators
can be shared freely. Stencils are stored as sparse offset -> coefficient
maps; application wraps periodically, so every operator is a circulant.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._kernels import circulant_apply


@dataclass(frozen=True)
class Grid1D:
    """Periodic grid with ``n_points`` cells of uniform width ``dx``."""

    n_points: int
    dx: float

    def __post_init__(self):
        if self.n_points < 3:
            raise ValueError(f"need at least 3 grid points, got {self.n_points}")
        if not self.dx > 0:
            raise ValueError(f"dx must be positive, got {self.dx}")

    @property
    def length(self) -> float:
        return self.n_points * self.dx

    def points(self, x0: float = 0.0) -> np.ndarray:
        """Cell coordinates x_i = x0 + i*dx, i = 0..n_points-1."""
        return x0 + self.dx * np.arange(self.n_points)


def _frozen_array(values, n: int) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.shape != (n,):
        raise ValueError(f"expected {n} values, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real values on a grid. The value array is frozen after construction."""

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values, self.grid.n_points))

    def _check(self, other: "GridFunction"):
        if other.grid != self.grid:
            raise ValueError("grid mismatch")

    def __add__(self, other: "GridFunction") -> "GridFunction":
        self._check(other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        self._check(other)
        return GridFunction(self.grid, self.values - other.values)

    def __neg__(self) -> "GridFunction":
        return GridFunction(self.grid, -self.values)

    def __mul__(self, scalar: float) -> "GridFunction":
        return GridFunction(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class DiffOp:
    """Circulant stencil operator: (Op f)_i = sum_s c_s f_{i+s mod N}.

    ``order`` records the derivative order the stencil approximates; the
    transpose of an operator has the mirrored stencil c'_s = c_{-s}.
    """

    grid: Grid1D
    stencil: tuple[tuple[int, float], ...]
    order: int

    @staticmethod
    def from_dict(grid: Grid1D, stencil: dict[int, float], order: int) -> "DiffOp":
        items = tuple(sorted((int(s), float(c)) for s, c in stencil.items() if c != 0.0))
        return DiffOp(grid, items, order)

    def as_dict(self) -> dict[int, float]:
        return dict(self.stencil)

    def apply(self, f):
        """Apply to a GridFunction or a raw value array."""
        if isinstance(f, GridFunction):
            if f.grid != self.grid:
                raise ValueError("grid mismatch between operator and function")
            return GridFunction(self.grid, self.apply_values(f.values))
        return self.apply_values(np.asarray(f, dtype=float))

    def apply_values(self, values: np.ndarray) -> np.ndarray:
        offsets, coeffs = _stencil_arrays(self)
        return circulant_apply(offsets, coeffs, values)

    def transpose(self) -> "DiffOp":
        items = tuple(sorted((-s, c) for s, c in self.stencil))
        return DiffOp(self.grid, items, self.order)

    def compose(self, other: "DiffOp") -> "DiffOp":
        """self after other: (self.compose(other))(f) = self(other(f))."""
        if other.grid != self.grid:
            raise ValueError("grid mismatch in composition")
        acc: dict[int, float] = {}
        for s1, c1 in self.stencil:
            for s2, c2 in other.stencil:
                acc[s1 + s2] = acc.get(s1 + s2, 0.0) + c1 * c2
        return DiffOp.from_dict(self.grid, acc, self.order + other.order)

    def scale(self, factor: float) -> "DiffOp":
        return DiffOp.from_dict(
            self.grid, {s: factor * c for s, c in self.stencil}, self.order
        )

    def is_skew(self, tol: float = 0.0) -> bool:
        d = self.as_dict()
        return all(abs(d.get(-s, 0.0) + c) <= tol for s, c in self.stencil)

    def is_symmetric(self, tol: float = 0.0) -> bool:
        d = self.as_dict()
        return all(abs(d.get(-s, 0.0) - c) <= tol for s, c in self.stencil)

    def to_dense(self) -> np.ndarray:
        return _dense_matrix(self).copy()

    def mode_symbol(self, m) -> complex:
        """Fourier symbol on grid mode m: sum_s c_s exp(2*pi*i*s*m/N)."""
        m = np.asarray(m)
        kappa = 2.0 * np.pi * m / self.grid.n_points
        sym = sum(c * np.exp(1j * s * kappa) for s, c in self.stencil)
        return sym


@lru_cache(maxsize=None)
def _stencil_arrays(op: DiffOp):
    offsets = np.array([s for s, _ in op.stencil], dtype=np.int64)
    coeffs = np.array([c for _, c in op.stencil], dtype=float)
    return offsets, coeffs


@lru_cache(maxsize=None)
def _dense_matrix(op: DiffOp) -> np.ndarray:
    n = op.grid.n_points
    mat = np.zeros((n, n))
    for s, c in op.stencil:
        for i in range(n):
            mat[i, (i + s) % n] += c
    mat.setflags(write=False)
    return mat


@dataclass(frozen=True)
class QuadratureWeights:
    """Quadrature weights b_i of the discrete Hamiltonian; all fixed to 1."""

    grid: Grid1D

    @property
    def weights(self) -> np.ndarray:
        return np.ones(self.grid.n_points)


def make_standard_ops(grid: Grid1D) -> dict[str, DiffOp]:
    """The standard periodic difference operators.

    Returns identity, forward/backward differences ``dplus``/``dminus``,
    the centered first derivative ``d1``, ``d2 = dplus o dminus`` and
    ``d3 = d1 o d2``.
    """
    dx = grid.dx
    identity = DiffOp.from_dict(grid, {0: 1.0}, 0)
    dplus = DiffOp.from_dict(grid, {1: 1.0 / dx, 0: -1.0 / dx}, 1)
    dminus = DiffOp.from_dict(grid, {0: 1.0 / dx, -1: -1.0 / dx}, 1)
    d1 = DiffOp.from_dict(grid, {1: 0.5 / dx, -1: -0.5 / dx}, 1)
    d2 = dplus.compose(dminus)
    d3 = d1.compose(d2)
    return {
        "identity": identity,
        "dplus": dplus,
        "dminus": dminus,
        "d1": d1,
        "d2": d2,
        "d3": d3,
    }


def default_realisation(grid: Grid1D, x_op: str = "centered") -> dict[int, DiffOp]:
    """Derivative-order -> operator map used to realise indeterminates.

    ``x_op`` selects the realisation of first-order indeterminates:
    "centered" uses d1 (the library default) and "forward" uses dplus.
    The forward choice makes dvd pipelines produce d2 = dplus o dminus
    compositions (dplus^T o dplus = -d2), which is the splitting that
    yields the classical centered d3 dispersion in the assembled schemes.
    """
    ops = make_standard_ops(grid)
    first = {"centered": ops["d1"], "forward": ops["dplus"]}
    if x_op not in first:
        raise ValueError(f"unknown x_op {x_op!r}; expected 'centered' or 'forward'")
    return {
        0: ops["identity"],
        1: first[x_op],
        2: ops["d2"],
        3: ops["d3"],
        4: ops["d2"].compose(ops["d2"]),
    }


def inner(f: GridFunction, g: GridFunction) -> float:
    """Unscaled pairing sum_i f_i g_i."""
    if f.grid != g.grid:
        raise ValueError("grid mismatch")
    return float(np.dot(f.values, g.values))


def integral(f: GridFunction) -> float:
    """Quadrature sum_i b_i f_i dx with b_i = 1."""
    return float(np.sum(f.values) * f.grid.dx)
