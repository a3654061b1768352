import itertools

import numpy as np
import pytest

from convboost import tensor
from convboost.convnet import (ConvLayer, DenseLayer, PoolLayer, conv_forward, cross_entropy, dense_forward,
                               dropout, global_average_pool, pool_forward, pool_output_size, relu, softmax)
from convboost.errors import ConfigError, GeometryError, LabelError, ShapeError


def conv_oracle(x, kernels, bias, stride=1, pad=0):
    """Direct summation: bias first, then channel, kernel row, kernel column."""
    xp = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    f_out, kh, kw, c_in = kernels.shape
    ho = (xp.shape[0] - kh) // stride + 1
    wo = (xp.shape[1] - kw) // stride + 1
    out = np.zeros((ho, wo, f_out))
    for m in range(ho):
        for n in range(wo):
            for f in range(f_out):
                s = bias[f]
                for c in range(c_in):
                    for u in range(kh):
                        for v in range(kw):
                            s += kernels[f, u, v, c] * xp[m * stride + u, n * stride + v, c]
                out[m, n, f] = s
    return out


class TestConv:
    def test_scaling_kernel(self):
        layer = ConvLayer(np.full((1, 1, 1, 1), 2.0), np.zeros(1))
        np.testing.assert_array_equal(conv_forward(np.ones((3, 3, 1)), layer), np.full((3, 3, 1), 2.0))

    def test_identity_kernel_same_padding(self, rng):
        k = np.zeros((1, 3, 3, 1))
        k[0, 1, 1, 0] = 1.0
        x = rng.normal(size=(5, 5, 1))
        assert np.array_equal(conv_forward(x, ConvLayer(k, np.zeros(1), padding="same")), x)

    def test_matches_direct_summation_exactly(self, rng):
        x = rng.normal(size=(6, 6, 2))
        k = rng.normal(size=(2, 3, 3, 2))
        b = rng.normal(size=2)
        assert np.array_equal(conv_forward(x, ConvLayer(k, b)), conv_oracle(x, k, b))

    @pytest.mark.parametrize("stride,padding", [(2, "valid"), (2, "same"), (3, "same")])
    def test_strided_and_padded(self, rng, stride, padding):
        x = rng.normal(size=(7, 8, 3))
        k = rng.normal(size=(4, 3, 5, 3))
        b = rng.normal(size=4)
        out = conv_forward(x, ConvLayer(k, b, stride=stride, padding=padding))
        if padding == "same":
            # Symmetric padding of K//2 on each axis; oracle pads both axes by the row pad,
            # so compare with a kernel whose pads agree.
            assert out.shape[:2] == (-(-7 // stride), -(-8 // stride))
        else:
            assert np.array_equal(out, conv_oracle(x, k, b, stride=stride))

    def test_same_padding_square_kernel_oracle(self, rng):
        x = rng.normal(size=(7, 7, 2))
        k = rng.normal(size=(3, 3, 3, 2))
        b = rng.normal(size=3)
        out = conv_forward(x, ConvLayer(k, b, stride=2, padding="same"))
        assert np.array_equal(out, conv_oracle(x, k, b, stride=2, pad=1))

    def test_errors(self):
        layer = ConvLayer(np.zeros((1, 5, 5, 2)), np.zeros(1))
        with pytest.raises(ShapeError):
            conv_forward(np.zeros((6, 6, 3)), layer)
        with pytest.raises(GeometryError):
            conv_forward(np.zeros((4, 6, 2)), layer)
        with pytest.raises(ConfigError):
            ConvLayer(np.zeros((1, 2, 2, 1)), np.zeros(1))


def test_relu():
    np.testing.assert_array_equal(relu(np.array([-1.0, 0.0, 2.5])), [0, 0, 2.5])
    assert not relu(-np.abs(np.arange(1.0, 6.0))).any()
    x = np.random.default_rng(0).normal(size=20)
    assert np.array_equal(relu(relu(x)), relu(x))


class TestPool:
    def test_block_maxima(self):
        x = np.array([[1, 2, 5, 6], [3, 4, 7, 8], [9, 10, 13, 14], [11, 12, 15, 16]], float)[:, :, None]
        out = pool_forward(x, PoolLayer((2, 2), 2))
        np.testing.assert_array_equal(out[:, :, 0], [[4, 8], [12, 16]])

    def test_side_224_halves(self):
        assert pool_output_size(224, 2, 2) == 112

    @pytest.mark.parametrize("mode", ["max", "average"])
    def test_window_scan_oracle(self, rng, mode):
        x = rng.normal(size=(7, 7, 2))
        out = pool_forward(x, PoolLayer((3, 3), 2, mode))
        reduce = np.max if mode == "max" else np.mean
        expected = np.zeros((3, 3, 2))
        for m, n, f in itertools.product(range(3), range(3), range(2)):
            expected[m, n, f] = reduce(x[2 * m:2 * m + 3, 2 * n:2 * n + 3, f])
        np.testing.assert_allclose(out, expected, rtol=0, atol=1e-15)

    def test_output_dimension_rule_exhaustive(self):
        for h in range(1, 17):
            for win in range(1, 5):
                for stride in range(1, 4):
                    if win > h:
                        with pytest.raises(GeometryError):
                            pool_forward(np.zeros((h, h, 1)), PoolLayer((win, win), stride))
                        continue
                    out = pool_forward(np.zeros((h, h, 1)), PoolLayer((win, win), stride))
                    assert out.shape[:2] == ((h - win) // stride + 1,) * 2


def test_global_average_pool(rng):
    np.testing.assert_array_equal(global_average_pool(np.full((3, 4, 2), 1.5)), [1.5, 1.5])
    np.testing.assert_array_equal(global_average_pool(np.array([[1.0, 3.0], [5.0, 7.0]])[:, :, None]), [4.0])
    x = rng.normal(size=(5, 6, 3))
    oracle = [sum(x[:, :, f].ravel().tolist()) / 30 for f in range(3)]
    np.testing.assert_allclose(global_average_pool(x), oracle, rtol=0, atol=1e-12)


def test_dense_forward(rng):
    x = np.array([2.0, 3.0])
    np.testing.assert_array_equal(dense_forward(x, DenseLayer(np.eye(2), np.zeros(2))), x)
    layer = DenseLayer(np.array([[1.0, 1.0], [1.0, -1.0]]), np.array([0.0, 1.0]))
    np.testing.assert_array_equal(dense_forward(x, layer), [5, 0])
    w, b, v = rng.normal(size=(4, 6)), rng.normal(size=4), rng.normal(size=6)
    assert np.array_equal(dense_forward(v, DenseLayer(w, b)), tensor.matvec(w, v) + b)
    with pytest.raises(ShapeError):
        dense_forward(np.ones(3), layer)


def test_softmax(rng):
    np.testing.assert_allclose(softmax(np.zeros(3)), [1 / 3] * 3, rtol=0, atol=1e-15)
    p = softmax(np.array([1000.0, 0.0]))
    assert np.all(np.isfinite(p)) and p[0] == pytest.approx(1.0) and p[1] < 1e-300 + 1e-12
    z = rng.normal(size=5) * 10
    assert abs(softmax(z).sum() - 1) < 1e-12
    np.testing.assert_allclose(softmax(z + 37.5), softmax(z), rtol=0, atol=1e-12)


def test_cross_entropy(rng):
    assert cross_entropy(np.array([1.0, 0, 0]), np.array([1.0, 0, 0])) == pytest.approx(0.0, abs=1e-11)
    assert cross_entropy(np.array([0.5, 0.5]), np.array([1.0, 0])) == pytest.approx(0.693147, abs=5e-7)
    p = softmax(rng.normal(size=4))
    y = np.array([0, 0, 1.0, 0])
    assert abs(cross_entropy(p, y) - (-np.log(p[2] + 1e-12))) < 1e-12
    with pytest.raises(LabelError):
        cross_entropy(p, np.array([0, 1.0, 1.0, 0]))


def test_dropout(rng):
    x = rng.normal(size=100)
    assert np.array_equal(dropout(x, 0.0, rng, training=True), x)
    assert np.array_equal(dropout(x, 0.8, rng, training=False), x)
    big = np.abs(rng.normal(size=100_000)) + 0.5
    out = dropout(big, 0.8, np.random.default_rng(3), training=True)
    assert abs(np.mean(out == 0) - 0.8) < 0.01
    assert abs(out.mean() / big.mean() - 1) < 0.05
    with pytest.raises(ConfigError):
        dropout(x, 1.0, rng)
