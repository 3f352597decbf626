"""Hot-kernel dispatch: compiled stencil if available, numpy fallback otherwise.

The stencil computes (H psi) = -t * sum_neighbours(psi) - w * psi on an
N^3 cubic grid.  Fields are flat vectors in x-fastest order; the (z, y, x)
reshape below keeps x contiguous.
"""
from __future__ import annotations

import numpy as np

try:
    from latticechem._stencil import apply_stencil as _compiled_stencil
except ImportError:
    _compiled_stencil = None

BACKEND = "numpy" if _compiled_stencil is None else "cython"


def _numpy_stencil(psi, w, t, periodic, out):
    acc = np.zeros_like(psi)
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        acc[lo] += psi[hi]
        acc[hi] += psi[lo]
        if periodic:
            first = [slice(None)] * 3
            last = [slice(None)] * 3
            first[axis] = 0
            last[axis] = -1
            first, last = tuple(first), tuple(last)
            acc[first] += psi[last]
            acc[last] += psi[first]
    np.multiply(acc, -t, out=out)
    out -= w * psi
    return out


def apply_stencil(psi_flat, w_flat, t, n, periodic, out=None, backend=None):
    """Apply the kinetic + on-site-potential stencil to a flat field.

    `backend` forces "cython" or "numpy"; default picks the compiled kernel
    when it was built.
    """
    psi = np.ascontiguousarray(psi_flat, dtype=np.float64).reshape(n, n, n)
    w = w_flat.reshape(n, n, n)
    if out is None:
        out_flat = np.empty(n * n * n, dtype=np.float64)
    else:
        out_flat = out
    o = out_flat.reshape(n, n, n)
    use = backend or BACKEND
    if use == "cython":
        if _compiled_stencil is None:
            raise RuntimeError("compiled stencil not built")
        _compiled_stencil(psi, w, float(t), bool(periodic), o)
    else:
        _numpy_stencil(psi, w, float(t), bool(periodic), o)
    return out_flat
