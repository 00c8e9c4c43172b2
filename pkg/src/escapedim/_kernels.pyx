# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pole-series kernels.

Both routines mirror :mod:`escapedim._fallback` exactly (same summation order
per point), so the two backends agree to rounding.
"""
import numpy as np

cimport cython
from cython.parallel cimport prange


cdef inline double complex _ipow(double complex x, int m) nogil:
    cdef double complex r = x
    cdef int k
    for k in range(1, m):
        r = r * x
    return r


def pole_sums(const double[::1] zr,
              const double[::1] zi,
              const double[::1] ar,
              const double[::1] ai,
              const double[::1] br,
              const double[::1] bi,
              int m,
              const long[::1] skip,
              int nthreads=1):
    """Return ``(f, df)`` with f = sum (b/(z-a))^m and its z-derivative.

    All poles share the multiplicity ``m``; coordinates come as separate real
    and imaginary arrays. ``skip[i]`` is the position of a pole left out of
    the sum at point i (-1 for none).
    """
    cdef Py_ssize_t n = zr.shape[0]
    cdef Py_ssize_t npole = ar.shape[0]
    out = np.zeros((4, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, p
    cdef double x, y, dr, di, inv, rr, ri, tr, ti, ur, ui, sr, fr, fi, gr, gi
    cdef int k
    if nthreads < 1:
        nthreads = 1
    # explicit real arithmetic: C99 complex division is several times slower
    for i in prange(n, nogil=True, schedule="static", num_threads=nthreads):
        x = zr[i]
        y = zi[i]
        fr = 0
        fi = 0
        gr = 0
        gi = 0
        for p in range(npole):
            if p == skip[i]:
                continue
            dr = x - ar[p]
            di = y - ai[p]
            inv = 1.0 / (dr * dr + di * di)
            rr = dr * inv
            ri = -di * inv
            ur = br[p] * rr - bi[p] * ri
            ui = br[p] * ri + bi[p] * rr
            tr = ur
            ti = ui
            for k in range(1, m):
                sr = tr * ur - ti * ui
                ti = tr * ui + ti * ur
                tr = sr
            fr = fr + tr
            fi = fi + ti
            gr = gr - (tr * rr - ti * ri)
            gi = gi - (tr * ri + ti * rr)
        o[0, i] = fr
        o[1, i] = fi
        o[2, i] = m * gr
        o[3, i] = m * gi
    return out[0] + 1j * out[1], out[2] + 1j * out[3]


def multipole_sums(const double complex[::1] z,
                   const double complex[:, ::1] moments,
                   const int[::1] orders):
    """Evaluate sum_k moments[c, k] * z^-(orders[c]+k) and its derivative.

    Row c of ``moments`` holds the far-field coefficients of the poles of
    multiplicity ``orders[c]``.
    """
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t nc = moments.shape[0]
    cdef Py_ssize_t nk = moments.shape[1]
    out_f = np.zeros(n, dtype=np.complex128)
    out_df = np.zeros(n, dtype=np.complex128)
    cdef double complex[::1] f = out_f
    cdef double complex[::1] df = out_df
    cdef Py_ssize_t i, c, k
    cdef double complex w, wp, acc, dacc
    for i in range(n):
        w = 1.0 / z[i]
        acc = 0
        dacc = 0
        for c in range(nc):
            wp = _ipow(w, orders[c])
            for k in range(nk):
                acc = acc + moments[c, k] * wp
                dacc = dacc - (orders[c] + k) * moments[c, k] * wp * w
                wp = wp * w
        f[i] = acc
        df[i] = dacc
    return out_f, out_df
