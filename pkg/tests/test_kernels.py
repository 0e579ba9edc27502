import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smoothtaylor import kernels
from smoothtaylor._accel import NUMBA_AVAILABLE

pytestmark = pytest.mark.skipif(not NUMBA_AVAILABLE, reason="numba not installed")


def both(name):
    return kernels.implementations(name)


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    n=st.integers(1, 2),
    cin=st.integers(1, 3),
    cout=st.integers(1, 3),
    hw=st.integers(3, 9),
    k=st.integers(1, 3),
    s=st.integers(1, 2),
    p=st.integers(0, 2),
)
def test_conv_backends_agree(seed, n, cin, cout, hw, k, s, p):
    gen = np.random.default_rng(seed)
    x = gen.normal(size=(n, cin, hw, hw))
    w = gen.normal(size=(cout, cin, k, k))
    b = gen.normal(size=cout)
    fa, fb = both("conv2d_forward")
    ya, yb = fa(x, w, b, s, s, p, p), fb(x, w, b, s, s, p, p)
    np.testing.assert_allclose(ya, yb, rtol=1e-10, atol=1e-10)
    g = gen.normal(size=ya.shape)
    ba, bb = both("conv2d_backward_input")
    np.testing.assert_allclose(ba(g, w, hw, hw, s, s, p, p), bb(g, w, hw, hw, s, s, p, p), rtol=1e-10, atol=1e-10)


def test_conv_backward_is_adjoint_of_forward():
    gen = np.random.default_rng(1)
    x = gen.normal(size=(1, 2, 7, 6))
    w = gen.normal(size=(3, 2, 3, 2))
    y = kernels.conv2d_forward(x, w, np.zeros(3), 2, 1, 1, 0)
    g = gen.normal(size=y.shape)
    gx = kernels.conv2d_backward_input(g, w, 7, 6, 2, 1, 1, 0)
    assert np.isclose((y * g).sum(), (x * gx).sum())


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), hw=st.integers(2, 10), k=st.integers(1, 3), s=st.integers(1, 3))
def test_maxpool_backends_agree(seed, hw, k, s):
    if k > hw:
        return
    gen = np.random.default_rng(seed)
    x = np.round(gen.normal(size=(2, 2, hw, hw)), 1)  # rounding creates ties
    fa, fb = both("maxpool2d_forward")
    (ya, ia), (yb, ib) = fa(x, k, s), fb(x, k, s)
    np.testing.assert_array_equal(ya, yb)
    np.testing.assert_array_equal(ia, ib)
    g = gen.normal(size=ya.shape)
    ba, bb = both("maxpool2d_backward")
    np.testing.assert_allclose(ba(g, ia, hw, hw), bb(g, ib, hw, hw))


def test_maxpool_routes_to_first_maximum():
    x = np.array([[[[1.0, 1.0], [1.0, 0.0]]]])
    for f in both("maxpool2d_forward"):
        _, idx = f(x, 2, 2)
        assert idx[0, 0, 0, 0] == 0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), h=st.integers(1, 20), w=st.integers(1, 20))
def test_map_kernels_agree(seed, h, w):
    gen = np.random.default_rng(seed)
    a = gen.random((h, w))
    ta, tb = both("total_variation")
    assert np.isclose(ta(a), tb(a), rtol=1e-12)
    ba, bb = both("blur5")
    np.testing.assert_allclose(ba(a), bb(a), rtol=1e-12, atol=1e-14)
    ra, rb = both("resize_bilinear")
    oh, ow = max(1, h // 2), max(1, w // 2)
    np.testing.assert_allclose(ra(a, oh, ow), rb(a, oh, ow), rtol=1e-12, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), hw=st.integers(3, 16), k=st.integers(1, 4), limit=st.integers(1, 6))
def test_window_selection_agrees(seed, hw, k, limit):
    if k > hw:
        return
    gen = np.random.default_rng(seed)
    a = np.round(gen.random((hw, hw)), 1)
    sa, sb = both("window_sums")
    ma, mb = sa(a, k), sb(a, k)
    np.testing.assert_allclose(ma, mb, rtol=1e-12, atol=1e-12)
    ga, gb = both("greedy_select")
    np.testing.assert_array_equal(ga(mb, k, limit), gb(mb, k, limit))


def test_blur_preserves_constants_and_mass():
    c = np.full((9, 7), 0.3)
    np.testing.assert_allclose(kernels.blur5(c), c)
    assert kernels.BINOMIAL5.sum() == 1.0


def test_resize_identity():
    a = np.random.default_rng(0).random((5, 6))
    np.testing.assert_allclose(kernels.resize_bilinear(a, 5, 6), a)
