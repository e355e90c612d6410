"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The two kernels here sit inside every time step of the integrators:
``circulant_apply`` realises periodic stencil application and
``power_product_accum`` accumulates one polynomial monomial pointwise.

Backend selection is controlled by the ``POLINT_BACKEND`` environment
variable: ``numba`` (require the JIT path), ``numpy`` (force the fallback)
or unset (numba when importable, numpy otherwise). The active choice is
exposed as ``BACKEND``.
"""

from __future__ import annotations

import os

import numpy as np


def _circulant_apply_loops(offsets, coeffs, f):
    n = f.shape[0]
    out = np.zeros(n)
    for j in range(offsets.shape[0]):
        s = offsets[j]
        c = coeffs[j]
        for i in range(n):
            out[i] += c * f[(i + s) % n]
    return out


def _power_product_accum_loops(out, stack, rows, exps, coeff):
    n = out.shape[0]
    for i in range(n):
        acc = coeff
        for j in range(rows.shape[0]):
            v = stack[rows[j], i]
            for _ in range(exps[j]):
                acc *= v
        out[i] += acc
    return out


def numpy_circulant_apply(offsets, coeffs, f):
    """(Op f)_i = sum_s c_s f_{(i+s) mod n}, vectorised via np.roll."""
    out = np.zeros_like(f)
    for s, c in zip(offsets, coeffs):
        out += c * np.roll(f, -int(s))
    return out


def numpy_power_product_accum(out, stack, rows, exps, coeff):
    """out_i += coeff * prod_j stack[rows_j, i]**exps_j."""
    term = np.full(out.shape, coeff)
    for r, e in zip(rows, exps):
        term *= stack[int(r)] ** int(e)
    out += term
    return out


BACKEND = "numpy"
_requested = os.environ.get("POLINT_BACKEND", "").strip().lower()
if _requested not in ("", "numpy", "numba"):
    raise RuntimeError(
        f"POLINT_BACKEND must be 'numba' or 'numpy', got {_requested!r}"
    )

if _requested != "numpy":
    try:
        from numba import njit

        circulant_apply = njit(cache=True)(_circulant_apply_loops)
        power_product_accum = njit(cache=True)(_power_product_accum_loops)
        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
if BACKEND == "numpy":
    circulant_apply = numpy_circulant_apply
    power_product_accum = numpy_power_product_accum
