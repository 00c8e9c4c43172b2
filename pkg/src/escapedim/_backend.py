"""Kernel backend selection.

The compiled extension is used when it imports; ``ESCAPEDIM_PURE=1`` forces
the numpy fallback. ``ESCAPEDIM_THREADS`` caps the OpenMP thread count.
"""
import os

import numpy as np

from . import _fallback

try:
    if os.environ.get("ESCAPEDIM_PURE", "") not in ("", "0"):
        raise ImportError("pure backend requested")
    from . import _kernels as _impl
    BACKEND = "compiled"
except ImportError:
    _impl = _fallback
    BACKEND = "python"


def thread_count():
    try:
        n = int(os.environ.get("ESCAPEDIM_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def pole_sums(z, classes, skip):
    """Sum over pole classes of equal multiplicity.

    ``classes`` holds tuples ``(m, ar, ai, br, bi, local)`` where ``local``
    maps field positions to positions inside the class (-1 elsewhere).
    """
    z = np.ascontiguousarray(z, dtype=np.complex128)
    zr, zi = np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag)
    skip = np.asarray(skip, dtype=np.int64)
    f = np.zeros(z.shape, dtype=np.complex128)
    df = np.zeros(z.shape, dtype=np.complex128)
    nt = thread_count()
    for m, ar, ai, br, bi, local in classes:
        sk = np.where(skip >= 0, local[np.maximum(skip, 0)], -1).astype(np.int64)
        g, dg = _impl.pole_sums(zr, zi, ar, ai, br, bi, int(m), sk, nt)
        f += g
        df += dg
    return f, df


def multipole_sums(z, moments, orders):
    return _impl.multipole_sums(z, moments, orders)


def get_backend(name):
    """Return the kernel module for ``name`` ('compiled' or 'python')."""
    if name == "python":
        return _fallback
    from . import _kernels
    return _kernels
