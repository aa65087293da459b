"""Tests for the dense tensor type and neural primitives.

conv3x3 is checked against a scalar nested-loop reference that accumulates
in the same documented order, so agreement is expected to be bit-exact.
"""

import numpy as np
import pytest

from weavenet.errors import ValidationError
from weavenet.tensor_core import (
    ConvKernel,
    Tensor,
    concat_channels,
    conv3x3,
    maxpool_2x2_s2,
    relu,
    split_channels,
    upsample_bilinear_x2,
)


def conv3x3_reference(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Scalar reference: bias first, then terms in (channel, dy, dx) order."""
    cin, h, w = x.shape
    cout = weights.shape[0]
    out = np.zeros((cout, h, w), dtype=np.float64)
    for o in range(cout):
        for y in range(h):
            for xx in range(w):
                acc = float(bias[o])
                for c in range(cin):
                    for dy in range(3):
                        for dx in range(3):
                            yy, xs = y + dy - 1, xx + dx - 1
                            if 0 <= yy < h and 0 <= xs < w:
                                acc += float(x[c, yy, xs]) * float(weights[o, c, dy, dx])
                out[o, y, xx] = acc
    return out


def random_tensor(rng, channels, height, width):
    return Tensor(rng.uniform(-1.0, 1.0, size=(channels, height, width)))


def random_kernel(rng, out_channels, in_channels):
    scale = 1.0 / np.sqrt(in_channels * 9)
    return ConvKernel(
        rng.uniform(-scale, scale, size=(out_channels, in_channels, 3, 3)),
        rng.uniform(-scale, scale, size=out_channels),
    )


class TestTensor:
    def test_shape_and_flat_roundtrip(self):
        t = Tensor.from_flat(2, 3, 4, list(range(24)))
        assert t.shape == (2, 3, 4)
        assert t.data[1, 2, 3] == 23.0

    def test_rejects_wrong_length(self):
        with pytest.raises(ValidationError):
            Tensor.from_flat(2, 2, 2, [0.0] * 7)

    def test_rejects_non_finite(self):
        with pytest.raises(ValidationError):
            Tensor(np.array([[[np.nan]]]))
        with pytest.raises(ValidationError):
            Tensor(np.array([[[np.inf]]]))

    def test_rejects_empty_dims(self):
        with pytest.raises(ValidationError):
            Tensor(np.zeros((0, 2, 2)))

    def test_immutable_and_detached_from_input(self):
        src = np.ones((1, 2, 2))
        t = Tensor(src)
        src[0, 0, 0] = 5.0
        assert t.data[0, 0, 0] == 1.0
        with pytest.raises(ValueError):
            t.data[0, 0, 0] = 2.0


class TestConv3x3:
    def test_all_ones_zero_padding_arithmetic(self):
        x = Tensor(np.ones((1, 3, 3)))
        k = ConvKernel(np.ones((1, 1, 3, 3)), np.zeros(1))
        out = conv3x3(x, k).data[0]
        expected = np.array([[4.0, 6.0, 4.0], [6.0, 9.0, 6.0], [4.0, 6.0, 4.0]])
        assert np.array_equal(out, expected)

    def test_identity_kernel(self):
        rng = np.random.default_rng(11)
        x = random_tensor(rng, 3, 5, 7)
        w = np.zeros((3, 3, 3, 3))
        for c in range(3):
            w[c, c, 1, 1] = 1.0
        out = conv3x3(x, ConvKernel(w, np.zeros(3)))
        assert np.array_equal(out.data, x.data)

    def test_matches_scalar_reference(self):
        rng = np.random.default_rng(7)
        x = random_tensor(rng, 3, 4, 5)
        k = random_kernel(rng, 2, 3)
        out = conv3x3(x, k)
        ref = conv3x3_reference(x.data, k.weights, k.bias)
        assert np.array_equal(out.data, ref)

    def test_stacked_kernel_equals_concat_of_parts(self):
        rng = np.random.default_rng(42)
        x = random_tensor(rng, 4, 8, 8)
        k1 = random_kernel(rng, 2, 4)
        k2 = random_kernel(rng, 3, 4)
        stacked = ConvKernel(
            np.concatenate([k1.weights, k2.weights], axis=0),
            np.concatenate([k1.bias, k2.bias]),
        )
        combined = conv3x3(x, stacked)
        parts = concat_channels([conv3x3(x, k1), conv3x3(x, k2)])
        assert np.array_equal(combined.data, parts.data)

    def test_linearity_in_input(self):
        rng = np.random.default_rng(3)
        x = random_tensor(rng, 2, 6, 6)
        y = random_tensor(rng, 2, 6, 6)
        k = random_kernel(rng, 3, 2)
        both = conv3x3(Tensor(x.data + y.data), k)
        separate = conv3x3(x, k).data + conv3x3(y, k).data - k.bias[:, None, None]
        assert np.allclose(both.data, separate, atol=1e-12)

    def test_channel_mismatch_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValidationError):
            conv3x3(random_tensor(rng, 2, 4, 4), random_kernel(rng, 1, 3))

    def test_pure_bit_identical(self):
        rng = np.random.default_rng(5)
        x = random_tensor(rng, 3, 6, 6)
        k = random_kernel(rng, 4, 3)
        a = conv3x3(x, k)
        b = conv3x3(x, k)
        assert np.array_equal(a.data, b.data)


class TestRelu:
    def test_basic(self):
        t = Tensor.from_flat(1, 1, 3, [-1.0, 0.0, 2.0])
        assert relu(t).data.tolist() == [[[0.0, 0.0, 2.0]]]

    def test_nonnegative_unchanged(self):
        rng = np.random.default_rng(1)
        t = Tensor(rng.uniform(0.0, 1.0, size=(2, 3, 3)))
        assert np.array_equal(relu(t).data, t.data)

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        t = random_tensor(rng, 2, 4, 4)
        once = relu(t)
        assert np.array_equal(relu(once).data, once.data)


class TestUpsample:
    def test_shape(self):
        rng = np.random.default_rng(9)
        out = upsample_bilinear_x2(random_tensor(rng, 3, 5, 5))
        assert out.shape == (3, 10, 10)

    def test_constant_interior(self):
        t = Tensor(np.full((2, 4, 4), 3.5))
        out = upsample_bilinear_x2(t).data
        assert np.array_equal(out[:, 1:-1, 1:-1], np.full((2, 6, 6), 3.5))

    def test_interior_impulse_footprint(self):
        x = np.zeros((1, 5, 5))
        x[0, 2, 2] = 1.0
        out = upsample_bilinear_x2(Tensor(x)).data[0]
        taps = np.array([0.25, 0.75, 0.75, 0.25])
        expected = np.zeros((10, 10))
        expected[3:7, 3:7] = np.outer(taps, taps)
        assert np.array_equal(out, expected)
        assert set(np.unique(out)) == {0.0, 0.0625, 0.1875, 0.5625}


class TestMaxpool:
    def test_single_block(self):
        t = Tensor(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
        assert maxpool_2x2_s2(t).data.tolist() == [[[4.0]]]

    def test_constant_halves(self):
        t = Tensor(np.full((3, 6, 6), 2.0))
        out = maxpool_2x2_s2(t)
        assert out.shape == (3, 3, 3)
        assert np.array_equal(out.data, np.full((3, 3, 3), 2.0))

    def test_40_to_20(self):
        rng = np.random.default_rng(4)
        out = maxpool_2x2_s2(random_tensor(rng, 4, 40, 40))
        assert out.shape == (4, 20, 20)

    def test_odd_dims_floored(self):
        rng = np.random.default_rng(6)
        out = maxpool_2x2_s2(random_tensor(rng, 1, 5, 7))
        assert out.shape == (1, 2, 3)

    def test_too_small_rejected(self):
        with pytest.raises(ValidationError):
            maxpool_2x2_s2(Tensor(np.ones((1, 1, 4))))


class TestConcatSplit:
    def test_concat_single_is_identity(self):
        rng = np.random.default_rng(8)
        t = random_tensor(rng, 3, 4, 4)
        assert np.array_equal(concat_channels([t]).data, t.data)

    def test_concat_ordering(self):
        a = Tensor(np.full((3, 2, 2), 1.0))
        b = Tensor(np.full((5, 2, 2), 2.0))
        out = concat_channels([a, b])
        assert out.channels == 8
        assert out.data[3, 0, 0] == 2.0
        assert out.data[2, 0, 0] == 1.0

    def test_split_inverts_concat(self):
        rng = np.random.default_rng(10)
        a = random_tensor(rng, 4, 3, 3)
        b = random_tensor(rng, 4, 3, 3)
        c = random_tensor(rng, 2, 3, 3)
        back = split_channels(concat_channels([a, b, c]), [4, 4, 2])
        for orig, got in zip([a, b, c], back):
            assert np.array_equal(orig.data, got.data)

    def test_spatial_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            concat_channels([Tensor(np.ones((1, 2, 2))), Tensor(np.ones((1, 3, 3)))])

    def test_split_size_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            split_channels(Tensor(np.ones((8, 2, 2))), [4, 3])
