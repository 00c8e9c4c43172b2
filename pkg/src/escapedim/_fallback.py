"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np

_CHUNK = 1 << 21  # points x poles per block, bounds peak memory


def pole_sums(zr, zi, ar, ai, br, bi, m, skip, nthreads=1):
    z = np.asarray(zr, dtype=float) + 1j * np.asarray(zi, dtype=float)
    a = np.asarray(ar, dtype=float) + 1j * np.asarray(ai, dtype=float)
    b = np.asarray(br, dtype=float) + 1j * np.asarray(bi, dtype=float)
    skip = np.asarray(skip, dtype=np.int64)
    m = int(m)
    n, npole = z.shape[0], a.shape[0]
    f = np.zeros(n, dtype=np.complex128)
    df = np.zeros(n, dtype=np.complex128)
    if npole == 0 or n == 0:
        return f, df
    rows = max(1, _CHUNK // npole)
    cols = np.arange(npole)
    for start in range(0, n, rows):
        zs = z[start:start + rows]
        r = 1.0 / (zs[:, None] - a[None, :])
        t = (b[None, :] * r) ** m
        dt = -t * r
        mask = cols[None, :] == skip[start:start + rows, None]
        t[mask] = 0.0
        dt[mask] = 0.0
        f[start:start + rows] = t.sum(axis=1)
        df[start:start + rows] = m * dt.sum(axis=1)
    return f, df


def multipole_sums(z, moments, orders):
    z = np.asarray(z, dtype=np.complex128)
    moments = np.asarray(moments, dtype=np.complex128)
    orders = np.asarray(orders, dtype=np.int32)
    w = 1.0 / z
    f = np.zeros(z.shape[0], dtype=np.complex128)
    df = np.zeros(z.shape[0], dtype=np.complex128)
    for c in range(moments.shape[0]):
        wp = w ** orders[c]
        for k in range(moments.shape[1]):
            f += moments[c, k] * wp
            df -= (orders[c] + k) * moments[c, k] * wp * w
            wp = wp * w
    return f, df
