"""Hot elementwise kernels.

Each kernel exists twice: a numba ``@njit`` version and a pure-numpy
version.  The numba path is used when numba imports cleanly and the
environment variable ``PRIORREG_DISABLE_NUMBA`` is unset (or ``0``).
Both paths compute the same formulas; results agree to rounding but are
not guaranteed bitwise equal across paths.

Stacked jet layout
------------------
A layer's activations for ``N`` points with ``K`` first-order directions, of
which the first ``K2`` also carry second derivatives, are stored as one
``(N * (1 + K + K2), width)`` array::

    rows [0, N)                    values
    rows [N + k*N, N + (k+1)*N)    first derivative along direction k
    rows [N + K*N + k*N, ...)      second derivative along direction k < K2

so one matmul pushes the whole jet through an affine layer.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("PRIORREG_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("numba disabled by PRIORREG_DISABLE_NUMBA")
    import numba
except ImportError:  # pragma: no cover - exercised via env flag in CI
    numba = None

HAVE_NUMBA = numba is not None


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy reference path
# ---------------------------------------------------------------------------


def tanh_jet_forward_np(z, n, k, k2):
    s = np.tanh(z[:n])
    s1 = 1.0 - s * s
    s2 = -2.0 * s * s1
    out = np.empty_like(z)
    out[:n] = s
    if k:
        z1 = z[n : n + k * n].reshape(k, n, -1)
        out[n : n + k * n] = (s1 * z1).reshape(k * n, -1)
        if k2:
            z2 = z[n + k * n :].reshape(k2, n, -1)
            z1s = z1[:k2]
            out[n + k * n :] = (s2 * z1s * z1s + s1 * z2).reshape(k2 * n, -1)
    return out, s


def tanh_jet_backward_np(g, z, s, n, k, k2):
    s1 = 1.0 - s * s
    s2 = -2.0 * s * s1
    gz = np.empty_like(g)
    acc = g[:n] * s1
    if k:
        z1 = z[n : n + k * n].reshape(k, n, -1)
        g1 = g[n : n + k * n].reshape(k, n, -1)
        acc = acc + (g1 * z1).sum(axis=0) * s2
        gz1 = g1 * s1
        if k2:
            s3 = -2.0 * (s1 * s1 + s * s2)
            z2 = z[n + k * n :].reshape(k2, n, -1)
            g2 = g[n + k * n :].reshape(k2, n, -1)
            z1s = z1[:k2]
            acc = acc + (g2 * (s3 * z1s * z1s + s2 * z2)).sum(axis=0)
            gz1[:k2] += 2.0 * g2 * s2 * z1s
            gz[n + k * n :] = (g2 * s1).reshape(k2 * n, -1)
        gz[n : n + k * n] = gz1.reshape(k * n, -1)
    gz[:n] = acc
    return gz


def adam_update_np(w, m, v, g, lr, b1, b2, eps, t):
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    mhat = m / (1.0 - b1**t)
    vhat = v / (1.0 - b2**t)
    w -= lr * mhat / (np.sqrt(vhat) + eps)


def matern52_np(a, b, inv_ls):
    d = (a[:, None, :] - b[None, :, :]) * inv_ls
    r = np.sqrt(np.maximum((d * d).sum(axis=-1), 0.0))
    sr = np.sqrt(5.0) * r
    return (1.0 + sr + sr * sr / 3.0) * np.exp(-sr)


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _jet_rows_nb(z, s_all, out, n, k, k2):
        width = z.shape[1]
        for i in range(n):
            for j in range(width):
                s = s_all[i, j]
                s1 = 1.0 - s * s
                s2 = -2.0 * s * s1
                for d in range(k):
                    z1 = z[n + d * n + i, j]
                    out[n + d * n + i, j] = s1 * z1
                    if d < k2:
                        r = n + k * n + d * n + i
                        out[r, j] = s2 * z1 * z1 + s1 * z[r, j]

    def tanh_jet_forward_nb(z, n, k, k2):
        # libm tanh under numba is several times slower than numpy's SIMD loop
        out = np.empty_like(z)
        s = np.tanh(z[:n], out=out[:n])
        if k:
            _jet_rows_nb(z, s, out, n, k, k2)
        return out, s

    @numba.njit(cache=True)
    def tanh_jet_backward_nb(g, z, s_all, n, k, k2):
        width = z.shape[1]
        gz = np.empty_like(g)
        for i in range(n):
            for j in range(width):
                s = s_all[i, j]
                s1 = 1.0 - s * s
                s2 = -2.0 * s * s1
                s3 = -2.0 * (s1 * s1 + s * s2)
                acc = g[i, j] * s1
                for d in range(k):
                    r1 = n + d * n + i
                    z1 = z[r1, j]
                    g1 = g[r1, j]
                    acc += g1 * s2 * z1
                    gz1 = g1 * s1
                    if d < k2:
                        r2 = n + k * n + d * n + i
                        g2 = g[r2, j]
                        acc += g2 * (s3 * z1 * z1 + s2 * z[r2, j])
                        gz1 += 2.0 * g2 * s2 * z1
                        gz[r2, j] = g2 * s1
                    gz[r1, j] = gz1
                gz[i, j] = acc
        return gz

    @numba.njit(cache=True)
    def adam_update_nb(w, m, v, g, lr, b1, b2, eps, t):
        c1 = 1.0 - b1**t
        c2 = 1.0 - b2**t
        for i in range(w.shape[0]):
            gi = g[i]
            m[i] = b1 * m[i] + (1.0 - b1) * gi
            v[i] = b2 * v[i] + (1.0 - b2) * (gi * gi)
            w[i] -= lr * (m[i] / c1) / (np.sqrt(v[i] / c2) + eps)

    @numba.njit(cache=True)
    def matern52_nb(a, b, inv_ls):
        out = np.empty((a.shape[0], b.shape[0]))
        root5 = np.sqrt(5.0)
        for i in range(a.shape[0]):
            for j in range(b.shape[0]):
                r2 = 0.0
                for d in range(a.shape[1]):
                    t = (a[i, d] - b[j, d]) * inv_ls[d]
                    r2 += t * t
                sr = root5 * np.sqrt(r2)
                out[i, j] = (1.0 + sr + sr * sr / 3.0) * np.exp(-sr)
        return out

    tanh_jet_forward = tanh_jet_forward_nb
    tanh_jet_backward = tanh_jet_backward_nb
    adam_update = adam_update_nb
    matern52 = matern52_nb
else:
    tanh_jet_forward = tanh_jet_forward_np
    tanh_jet_backward = tanh_jet_backward_np
    adam_update = adam_update_np
    matern52 = matern52_np
