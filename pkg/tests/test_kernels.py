"""The numba kernels and their numpy fallbacks compute the same values."""

import numpy as np
import pytest

from priorreg import _kernels as K

pytestmark = pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba path unavailable")


def stacked(rng, n=7, k=2, k2=1, width=5):
    return rng.normal(size=(n * (1 + k + k2), width))


def test_tanh_jet_forward_agrees():
    rng = np.random.default_rng(0)
    z = stacked(rng)
    a, sa = K.tanh_jet_forward_nb(z, 7, 2, 1)
    b, sb = K.tanh_jet_forward_np(z, 7, 2, 1)
    assert np.allclose(a, b, rtol=0, atol=1e-14) and np.allclose(sa, sb, atol=1e-15)


def test_tanh_jet_backward_agrees():
    rng = np.random.default_rng(1)
    z, g = stacked(rng), stacked(rng)
    _, s = K.tanh_jet_forward_np(z, 7, 2, 1)
    assert np.allclose(K.tanh_jet_backward_nb(g, z, s, 7, 2, 1), K.tanh_jet_backward_np(g, z, s, 7, 2, 1), atol=1e-13)


def test_adam_agrees():
    rng = np.random.default_rng(2)
    w, g = rng.normal(size=50), rng.normal(size=50)
    pair = [(w.copy(), np.zeros(50), np.zeros(50)) for _ in range(2)]
    for t in range(1, 4):
        K.adam_update_nb(*pair[0], g, 1e-3, 0.9, 0.999, 1e-8, t)
        K.adam_update_np(*pair[1], g, 1e-3, 0.9, 0.999, 1e-8, t)
    assert np.allclose(pair[0][0], pair[1][0], rtol=0, atol=1e-15)


def test_matern_agrees():
    rng = np.random.default_rng(3)
    a, b = rng.random((6, 3)), rng.random((4, 3))
    inv = np.array([2.0, 0.5, 1.0])
    assert np.allclose(K.matern52_nb(a, b, inv), K.matern52_np(a, b, inv), atol=1e-15)
