"""Numba and numpy kernel paths agree (and are individually deterministic)."""

import numpy as np
import pytest

from holterbeat import backend
from holterbeat.kernels import numpy_impl

numba_impl = pytest.importorskip("holterbeat.kernels.numba_impl",
                                 reason="numba backend not importable")

RNG = np.random.default_rng(42)


def both(name, *args):
    return getattr(numba_impl, name)(*args), getattr(numpy_impl, name)(*args)


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 3), (2, 1), (3, 0)])
def test_conv_forward_equivalence(stride, pad):
    x = RNG.normal(size=(3, 4, 61))
    w = RNG.normal(size=(5, 4, 7))
    a, b = both("conv1d_forward", x, w, stride, pad)
    assert a.shape == b.shape
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("stride,pad", [(1, 2), (2, 1)])
def test_conv_backward_equivalence(stride, pad):
    x = RNG.normal(size=(2, 3, 40))
    w = RNG.normal(size=(4, 3, 5))
    out = numpy_impl.conv1d_forward(x, w, stride, pad)
    g = RNG.normal(size=out.shape)
    gi_a, gi_b = both("conv1d_backward_input", g, w, stride, pad, 40)
    np.testing.assert_allclose(gi_a, gi_b, rtol=1e-12, atol=1e-12)
    gw_a, gw_b = both("conv1d_backward_weights", x, g, stride, pad, 5)
    np.testing.assert_allclose(gw_a, gw_b, rtol=1e-11, atol=1e-12)


def test_maxpool_equivalence_including_ties():
    x = RNG.normal(size=(2, 3, 24))
    x[0, 0, 4] = x[0, 0, 5]  # forced tie
    (oa, ia), (ob, ib) = both("maxpool1d_forward", x, 2, 2)
    assert np.array_equal(oa, ob)
    assert np.array_equal(ia, ib)
    g = RNG.normal(size=oa.shape)
    ga, gb = both("maxpool1d_backward", g, ia, 24)
    assert np.array_equal(ga, gb)


def test_avgpool_equivalence():
    x = RNG.normal(size=(2, 3, 30))
    a, b = both("avgpool1d_forward", x, 3, 3)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=0)
    g = RNG.normal(size=a.shape)
    ga, gb = both("avgpool1d_backward", g, 3, 3, 30)
    np.testing.assert_allclose(ga, gb, rtol=1e-13, atol=0)


def test_moving_mean_bit_equal():
    x = RNG.normal(size=501).cumsum()
    a, b = both("moving_mean", x, 50)
    assert np.array_equal(a, b)


def test_local_peaks_equal_with_plateaus_and_ties():
    trace = np.zeros(200)
    trace[10:23] = 1.0            # plateau
    trace[40] = 0.8
    trace[44] = 0.8               # tie within min_dist of 40
    trace[90] = 0.6
    trace[91] = 0.9
    trace[150:163] = 1.0          # second plateau, same height as first
    a, b = both("local_peaks", trace, 0.5, 25)
    assert np.array_equal(a, b)
    x = RNG.random(5000)
    a, b = both("local_peaks", x, 0.7, 30)
    assert np.array_equal(a, b)


def test_histogram_bit_equal():
    binned = RNG.integers(0, 16, size=(300, 5)).astype(np.uint8)
    grad = RNG.normal(size=300)
    hess = RNG.uniform(0.01, 0.25, size=300)
    idx = np.sort(RNG.choice(300, size=150, replace=False)).astype(np.int64)
    (ga, ha, ca), (gb, hb, cb) = both("histogram_gh", binned, grad, hess, idx, 16)
    assert np.array_equal(ga, gb)
    assert np.array_equal(ha, hb)
    assert np.array_equal(ca, cb)


def test_predict_forest_bit_equal():
    # two stumps plus a depth-2 tree over 3 features
    feat = np.array([0, -1, -1, 2, -1, -1, 1, 0, -1, -1, -1], dtype=np.int32)
    thr = np.array([0.5, 0, 0, -0.2, 0, 0, 0.1, 0.7, 0, 0, 0])
    left = np.array([1, -1, -1, 4, -1, -1, 7, 8, -1, -1, -1], dtype=np.int32)
    right = np.array([2, -1, -1, 5, -1, -1, 10, 9, -1, -1, -1], dtype=np.int32)
    value = np.array([0, 1.5, -0.5, 0, 0.25, -2.0, 0, 0, 3.0, -1.0, 0.5])
    offsets = np.array([0, 3, 6, 11], dtype=np.int64)
    x = RNG.normal(size=(64, 3))
    a, b = both("predict_forest", x, feat, thr, left, right, value, offsets)
    assert np.array_equal(a, b)


def test_backend_env_selection(monkeypatch):
    monkeypatch.setenv(backend.ENV_VAR, "numpy")
    assert backend.resolve_backend() == "numpy"
    monkeypatch.setenv(backend.ENV_VAR, "auto")
    assert backend.resolve_backend() in ("numba", "numpy")
    monkeypatch.setenv(backend.ENV_VAR, "bogus")
    with pytest.raises(ValueError):
        backend.resolve_backend()


def test_kernels_deterministic_across_calls():
    x = RNG.normal(size=(2, 2, 33))
    w = RNG.normal(size=(3, 2, 5))
    r1 = numba_impl.conv1d_forward(x, w, 1, 2)
    r2 = numba_impl.conv1d_forward(x, w, 1, 2)
    assert np.array_equal(r1, r2)
    r3 = numpy_impl.conv1d_forward(x, w, 1, 2)
    r4 = numpy_impl.conv1d_forward(x, w, 1, 2)
    assert np.array_equal(r3, r4)
