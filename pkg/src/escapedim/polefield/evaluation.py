"""Evaluation of f and f' from pole data.

The explicit head is summed by the kernel backend, or through a multipole
expansion once |z| is well beyond the head. Lattice poles beyond the head
that lie within ``WINDOW`` of z are generated and summed directly; everything
else is covered by the far-field remainder bound, which is reported as
metadata and never added to the value.

Points very close to a pole are handled in local coordinates: ``local_eval``
takes the pole and the offset z - a separately, so the singular term is exact
even when the offset is far below the spacing of doubles at |a|.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import comb

from .. import _backend
from ..errors import PoleHit, TailUnbounded
from .model import index_array
from .tails import LatticeTail

NTERMS = 30
FAR_FACTOR = 8.0
WINDOW = 4.0
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class EvalResult:
    value: complex
    derivative: complex
    tail_bound: float


def _moments(field):
    cache = field._cache
    if "moments" not in cache:
        orders = np.unique(field.mults).astype(np.int32)
        mom = np.zeros((orders.size, NTERMS), dtype=np.complex128)
        mass = np.zeros(orders.size)
        for c, m in enumerate(orders):
            sel = field.mults == m
            a, bm = field.locations[sel], field.coeffs[sel] ** int(m)
            mass[c] = float(np.sum(np.abs(bm)))
            pw = bm.copy()
            for k in range(NTERMS):
                mom[c, k] = comb(int(m) + k - 1, k, exact=True) * pw.sum()
                pw = pw * a
        cache["moments"] = (mom, orders, mass)
    return cache["moments"]


def _classes(field):
    cache = field._cache
    if "classes" not in cache:
        out = []
        for m in np.unique(field.mults):
            sel = np.flatnonzero(field.mults == m)
            local = np.full(len(field), -1, dtype=np.int64)
            local[sel] = np.arange(sel.size)
            a, b = field.locations[sel], field.coeffs[sel]
            out.append((int(m), np.ascontiguousarray(a.real), np.ascontiguousarray(a.imag),
                        np.ascontiguousarray(b.real), np.ascontiguousarray(b.imag), local))
        cache["classes"] = out
    return cache["classes"]


def _multipole_error(field, rho):
    if not len(field):
        return 0.0
    mom, orders, mass = _moments(field)
    x = field.head_radius / rho
    err = 0.0
    for m, s in zip(orders, mass):
        m = int(m)
        ratio = (m + NTERMS) * x / (NTERMS + 1)
        err += s * rho ** -m * comb(m + NTERMS - 1, NTERMS) * x ** NTERMS / (1 - ratio)
    return float(err)


def _head_sums(field, z, skip):
    f = np.zeros(z.shape, dtype=np.complex128)
    df = np.zeros(z.shape, dtype=np.complex128)
    if not len(field) or z.size == 0:
        return f, df
    far = (np.abs(z) >= FAR_FACTOR * field.head_radius) & (skip < 0)
    near = ~far
    if near.any():
        f[near], df[near] = _backend.pole_sums(z[near], _classes(field), skip[near])
    if far.any():
        mom, orders, _ = _moments(field)
        f[far], df[far] = _backend.multipole_sums(np.ascontiguousarray(z[far]), mom, orders)
    return f, df


_OFFSETS = None


def _window_offsets():
    global _OFFSETS
    if _OFFSETS is None:
        r = int(math.ceil(WINDOW)) + 1
        g = np.arange(-r, r + 1)
        P, Q = np.meshgrid(g, g, indexing="ij")
        _OFFSETS = (P + 1j * Q).ravel()
    return _OFFSETS


def _lattice_window_sums(tail: LatticeTail, z, exclude):
    """Sum over non-explicit lattice poles within WINDOW of each z."""
    f = np.zeros(z.shape, dtype=np.complex128)
    df = np.zeros(z.shape, dtype=np.complex128)
    sel = np.abs(z) > tail.radius - WINDOW
    if not sel.any():
        return f, df
    zs = z[sel]
    centre = np.round(zs.real) + 1j * np.round(zs.imag)
    a = centre[:, None] + _window_offsets()[None, :]
    mod = np.abs(a)
    ok = ((np.abs(a.real) >= tail.start) & (np.abs(a.imag) >= tail.start)
          & (mod > tail.radius) & (np.abs(a - zs[:, None]) <= WINDOW))
    ok &= a != exclude[sel][:, None]
    b = tail.coeff(np.where(ok, mod, 1.0))
    r = np.where(ok, 1.0 / np.where(ok, zs[:, None] - a, 1.0), 0.0)
    t = (b * r) ** tail.mult
    f[sel] = np.where(ok, t, 0.0).sum(axis=1)
    df[sel] = np.where(ok, -tail.mult * t * r, 0.0).sum(axis=1)
    return f, df


def series(field, z, skip=None, exclude=None):
    """Vectorised (f, f') without pole-hit checks or tail bounds.

    ``skip`` gives, per point, the position of an explicit pole to leave
    out; ``exclude`` a non-explicit lattice pole location to leave out.
    """
    z = np.ascontiguousarray(np.atleast_1d(z), dtype=np.complex128)
    if skip is None:
        skip = np.full(z.shape, -1, dtype=np.int64)
    f, df = _head_sums(field, z, np.asarray(skip, dtype=np.int64))
    if isinstance(field.far, LatticeTail):
        if exclude is None:
            exclude = np.full(z.shape, np.nan + 0j)
        g, dg = _lattice_window_sums(field.far, z, np.asarray(exclude, dtype=np.complex128))
        f += g
        df += dg
    return f, df


def remainder_bound(field, z):
    """Bound on the part of f at z not captured by :func:`series`."""
    z = complex(z)
    bound = 0.0
    if len(field) and abs(z) >= FAR_FACTOR * field.head_radius:
        bound += _multipole_error(field, abs(z))
    if field.far is not None:
        return bound + field.far.remainder_bound(z, WINDOW)
    if field.finite:
        return bound
    if field.tail_sup is not None:
        return bound + float(field.tail_sup)
    raise TailUnbounded("the tail model does not bound the remainder of this field")


def check_pole_hit(field, z):
    z = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    if len(field):
        d, i = field.nearest(z)
        scale = np.maximum(1.0, np.abs(field.locations[i]))
        hit = d <= 8 * _EPS * scale
        if hit.any():
            k = int(np.argmax(hit))
            raise PoleHit(f"z={z[k]} coincides with the pole index {int(field.indices[i[k]])}")
    if isinstance(field.far, LatticeTail):
        t = field.far
        c = np.round(z.real) + 1j * np.round(z.imag)
        hit = ((np.abs(c) > t.radius) & (np.abs(c.real) >= t.start) & (np.abs(c.imag) >= t.start)
               & (np.abs(z - c) <= 8 * _EPS * np.maximum(1.0, np.abs(c))))
        if hit.any():
            raise PoleHit(f"z={z[int(np.argmax(hit))]} coincides with a lattice pole")


def evaluate_many(field, z):
    check_pole_hit(field, z)
    return series(field, z)


def evaluate(field, z):
    check_pole_hit(field, z)
    return complex(series(field, z)[0][0])


def evaluate_derivative(field, z):
    check_pole_hit(field, z)
    return complex(series(field, z)[1][0])


def evaluate_with_bound(field, z):
    check_pole_hit(field, z)
    f, df = series(field, z)
    return EvalResult(complex(f[0]), complex(df[0]), remainder_bound(field, z))


# -- local coordinates ------------------------------------------------------

def resolve(field, indices):
    """Arrays (a, b, m, position) for pole indices; position -1 when the pole
    is not explicit."""
    indices = index_array(indices)
    n = indices.size
    a = np.empty(n, dtype=np.complex128)
    b = np.empty(n, dtype=np.complex128)
    m = np.empty(n, dtype=np.int32)
    pos = np.empty(n, dtype=np.int64)
    memo = {}
    for i, k in enumerate(indices.tolist()):
        if k not in memo:
            p = field.position(k)
            if p is not None:
                memo[k] = (field.locations[p], field.coeffs[p], field.mults[p], p)
            else:
                d = field.pole(k)
                memo[k] = (d.location, d.coeff, d.multiplicity, -1)
        a[i], b[i], m[i], pos[i] = memo[k]
    return a, b, m, pos


def local_eval(field, indices, delta, resolved=None):
    """(f, f') at z = a + delta for poles given by index.

    The singular term (b/delta)^m is computed from delta directly; the rest
    of the series is evaluated at the rounded point a + delta.
    """
    delta = np.atleast_1d(np.asarray(delta, dtype=np.complex128))
    a, b, m, pos = resolved if resolved is not None else resolve(field, indices)
    a, b, m, pos = (np.broadcast_to(x, delta.shape) for x in (a, b, m, pos))
    if np.any(delta == 0):
        raise PoleHit("zero offset from a pole")
    rest, drest = series(field, a + delta, skip=pos, exclude=np.where(pos < 0, a, np.nan))
    r = 1.0 / delta
    sing = (b * r) ** m
    return sing + rest, drest - m * sing * r


def local_rest(field, resolved, delta):
    a, b, m, pos = resolved
    return series(field, a + delta, skip=pos, exclude=np.where(pos < 0, a, np.nan))
