import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from convboost import tensor
from convboost.errors import ShapeError

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_zeros():
    np.testing.assert_array_equal(tensor.zeros([2, 2]), [[0, 0], [0, 0]])
    np.testing.assert_array_equal(tensor.zeros([1]), [0])
    z = tensor.zeros([3, 4, 5])
    assert z.shape == (3, 4, 5) and z.size == 60 and not z.any()


@pytest.mark.parametrize("shape", [[], [0], [2, 0]])
def test_zeros_rejects_bad_shapes(shape):
    with pytest.raises(ShapeError):
        tensor.zeros(shape)


def test_as_tensor_checks_size_and_finiteness():
    t = tensor.as_tensor(range(6), shape=[2, 3])
    assert t.dtype == np.float64 and t.shape == (2, 3)
    with pytest.raises(ShapeError):
        tensor.as_tensor(range(5), shape=[2, 3])
    with pytest.raises(ValueError):
        tensor.as_tensor([1.0, np.nan])


def test_elementwise_examples(rng):
    np.testing.assert_array_equal(tensor.elementwise("add", np.array([1.0, 2.0]), np.array([3.0, 4.0])), [4, 6])
    x = rng.normal(size=(3, 4))
    assert not tensor.elementwise("mul", x, tensor.zeros([3, 4])).any()
    assert not tensor.elementwise("sub", x, x).any()


def test_elementwise_rejects_broadcasting():
    with pytest.raises(ShapeError):
        tensor.elementwise("add", np.ones((2, 3)), np.ones(3))
    with pytest.raises(ValueError):
        tensor.elementwise("div", np.ones(2), np.ones(2))


@given(arrays(np.float64, (4, 3), elements=finite), arrays(np.float64, (4, 3), elements=finite),
       arrays(np.float64, (4, 3), elements=finite))
def test_elementwise_commutes_and_associates(a, b, c):
    for op in ("add", "mul"):
        assert np.array_equal(tensor.elementwise(op, a, b), tensor.elementwise(op, b, a))
    # Exact associativity holds for integer-valued data within float precision.
    a, b, c = np.round(a), np.round(b), np.round(c)
    left = tensor.elementwise("add", tensor.elementwise("add", a, b), c)
    right = tensor.elementwise("add", a, tensor.elementwise("add", b, c))
    assert np.array_equal(left, right)


def test_matvec_examples():
    np.testing.assert_array_equal(tensor.matvec(np.eye(2), np.array([5.0, 7.0])), [5, 7])
    np.testing.assert_array_equal(tensor.matvec(np.array([[1.0, 1.0], [1.0, -1.0]]), np.array([2.0, 3.0])), [5, -1])


def test_matvec_matches_nested_loop_exactly(rng):
    w = rng.normal(size=(8, 8))
    x = rng.normal(size=8)
    expected = np.zeros(8)
    for r in range(8):
        s = 0.0
        for c in range(8):
            s += w[r, c] * x[c]
        expected[r] = s
    assert np.array_equal(tensor.matvec(w, x), expected)


@given(arrays(np.float64, st.integers(1, 10), elements=finite))
def test_matvec_identity(x):
    assert np.array_equal(tensor.matvec(np.eye(len(x)), x), x)


def test_matvec_shape_errors():
    with pytest.raises(ShapeError):
        tensor.matvec(np.ones((2, 3)), np.ones(2))
    with pytest.raises(ShapeError):
        tensor.matvec(np.ones(3), np.ones(3))
