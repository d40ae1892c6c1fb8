"""Compiled kernels against the numpy fallback: results must match bitwise."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ilgaco import _kernels_py as py
from ilgaco import kernels

ck = pytest.importorskip("ilgaco._ckernels", reason="compiled extension not built")

small = st.floats(-4, 4, allow_nan=False, allow_infinity=False, width=64)


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")


@settings(max_examples=60, deadline=None)
@given(h=arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6), st.integers(1, 5)),
                elements=st.sampled_from([-1.0, 0.0, 0.5, 2.0]) | small))
def test_maxpool_forward_matches(h):
    pc, ac = ck.maxpool_forward(h)
    pp, ap = py.maxpool_forward(h)
    assert pc.tobytes() == pp.tobytes()
    np.testing.assert_array_equal(ac, ap)


def test_maxpool_ties_go_to_lowest_frame():
    h = np.array([[[1.0, 0.0], [1.0, 3.0], [0.5, 3.0]]])
    for impl in (ck, py):
        pooled, arg = impl.maxpool_forward(h)
        np.testing.assert_array_equal(pooled, [[1.0, 3.0]])
        np.testing.assert_array_equal(arg, [[0, 1]])


@settings(max_examples=60, deadline=None)
@given(data=st.data(), b=st.integers(1, 4), t=st.integers(1, 6), e=st.integers(1, 5))
def test_maxpool_backward_matches(data, b, t, e):
    grad = data.draw(arrays(np.float64, (b, e), elements=small))
    pooled = data.draw(arrays(np.float64, (b, e), elements=st.sampled_from([0.0, 1.0, -0.0, 2.5])))
    arg = data.draw(arrays(np.intp, (b, e), elements=st.integers(0, t - 1)))
    assert ck.maxpool_backward(grad, arg, t).tobytes() == py.maxpool_backward(grad, arg, t).tobytes()
    fused_c = ck.maxpool_relu_backward(grad, arg, pooled, t)
    fused_p = py.maxpool_relu_backward(grad, arg, pooled, t)
    assert fused_c.tobytes() == fused_p.tobytes()


@settings(max_examples=60, deadline=None)
@given(data=st.data(), n=st.integers(1, 9), e=st.integers(0, 5))
def test_herding_matches(data, n, e):
    sig = data.draw(arrays(np.float64, (n, e), elements=small | st.sampled_from([0.0, 1.0])))
    k = data.draw(st.integers(0, n))
    oc, dc = ck.herding_order(sig, k)
    op, dp = py.herding_order(sig, k)
    np.testing.assert_array_equal(oc, op)
    assert dc.tobytes() == dp.tobytes()


@settings(max_examples=60, deadline=None)
@given(data=st.data(), n=st.integers(1, 6), m=st.integers(1, 6), e=st.integers(0, 7))
def test_sq_distances_match(data, n, m, e):
    x = data.draw(arrays(np.float64, (n, e), elements=small))
    c = data.draw(arrays(np.float64, (m, e), elements=small))
    assert ck.sq_distances(x, c).tobytes() == py.sq_distances(x, c).tobytes()


@settings(max_examples=40, deadline=None)
@given(data=st.data(), n=st.integers(1, 4), t=st.integers(1, 6), d=st.integers(1, 4), b=st.integers(1, 5),
       with_noise=st.booleans())
def test_gather_windows_matches(data, n, t, d, b, with_noise):
    x = data.draw(arrays(np.float64, (n, t, d), elements=small))
    rows = data.draw(arrays(np.intp, (b,), elements=st.integers(0, n - 1)))
    frames = data.draw(arrays(np.intp, (b, t), elements=st.integers(0, t - 1)))
    noise = data.draw(arrays(np.float64, (b, t, d), elements=small)) if with_noise else None
    assert ck.gather_windows(x, rows, frames, noise).tobytes() == py.gather_windows(x, rows, frames, noise).tobytes()


def test_gather_rejects_out_of_range():
    with pytest.raises(IndexError):
        ck.gather_windows(np.zeros((2, 3, 1)), np.array([2]), np.zeros((1, 3), dtype=np.intp))
