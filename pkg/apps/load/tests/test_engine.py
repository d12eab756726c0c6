"""
LoAd Platform - Tensor Engine Tests

Forward semantics, shape contracts and the reverse pass of the engine ops.
"""

import math

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from ..engine import (
    Tensor,
    adaptive_max_pool2d,
    adaptive_pool_plan,
    bilinear_upsample,
    concat_channels,
    conv2d,
    dropout,
    elementwise_mul,
    global_avg_pool,
    linear,
    max_pool2d,
    relu,
    sigmoid,
    sigmoid_bce,
    softmax,
    softmax_cross_entropy,
    split_channels,
)
from ..exceptions import NumericError, ShapeError
from .helpers import rng


def direct_conv(x, kernel, bias, stride, pad):
    x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    batch, _, height, width = x.shape
    out_channels, _, kh, kw = kernel.shape
    out_h = (height - kh) // stride + 1
    out_w = (width - kw) // stride + 1
    out = np.zeros((batch, out_channels, out_h, out_w))
    for b in range(batch):
        for o in range(out_channels):
            for i in range(out_h):
                for j in range(out_w):
                    patch = x[b, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[b, o, i, j] = (patch * kernel[o]).sum() + bias[o]
    return out


class TensorTests(SimpleTestCase):
    def test_rejects_empty_extents(self):
        with self.assertRaises(ShapeError):
            Tensor(np.zeros((2, 0)))

    def test_integer_input_becomes_float32(self):
        self.assertEqual(Tensor([1, 2, 3]).dtype, np.float32)

    def test_backward_accumulates_over_shared_inputs(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        y = (x + x * 3.0).sum()
        y.backward()
        assert_array_equal(x.grad, [4.0, 4.0])

    def test_backward_without_gradient_needs_scalar(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with self.assertRaises(ShapeError):
            (x * 2.0).backward()

    def test_non_finite_forward_raises_numeric_error(self):
        x = Tensor(np.array([np.inf, 1.0]))
        with self.assertRaises(NumericError):
            x + 1.0

    def test_untracked_inputs_build_no_graph(self):
        out = relu(Tensor(np.ones((2, 2))))
        self.assertFalse(out.requires_grad)
        self.assertIsNone(out.node)

    def test_flatten_keeps_batch_axis(self):
        self.assertEqual(Tensor(np.ones((2, 3, 4, 5))).flatten().shape, (2, 60))


class ConvolutionTests(SimpleTestCase):
    def test_matches_direct_summation(self):
        gen = rng(1)
        for stride, pad in ((1, 0), (2, 1), (3, 2)):
            x = gen.standard_normal((2, 3, 9, 9))
            kernel = gen.standard_normal((4, 3, 3, 3))
            bias = gen.standard_normal(4)
            out = conv2d(Tensor(x), Tensor(kernel), Tensor(bias), stride=stride, pad=pad)
            assert_allclose(out.data, direct_conv(x, kernel, bias, stride, pad), rtol=1e-10, atol=1e-10)

    def test_channel_mismatch_is_a_shape_error(self):
        with self.assertRaisesRegex(ShapeError, "Cin"):
            conv2d(Tensor(np.ones((1, 2, 5, 5))), Tensor(np.ones((1, 3, 3, 3))), Tensor(np.zeros(1)))

    def test_kernel_larger_than_input(self):
        with self.assertRaises(ShapeError):
            conv2d(Tensor(np.ones((1, 1, 2, 2))), Tensor(np.ones((1, 1, 3, 3))), Tensor(np.zeros(1)))


class PoolingTests(SimpleTestCase):
    def test_max_pool_values(self):
        x = np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4)
        out = max_pool2d(Tensor(x), 2, 2)
        assert_array_equal(out.data[0, 0], [[5, 7], [13, 15]])

    def test_max_pool_gradient_goes_to_first_argmax(self):
        x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
        max_pool2d(x, 2, 2).sum().backward()
        assert_array_equal(x.grad[0, 0], [[1, 0], [0, 0]])

    def test_window_larger_than_input(self):
        with self.assertRaises(ShapeError):
            max_pool2d(Tensor(np.ones((1, 1, 3, 3))), 4, 1)

    def test_adaptive_plan_reference_cases(self):
        self.assertEqual(adaptive_pool_plan(13, 3), (5, 4))
        self.assertEqual(adaptive_pool_plan(6, 3), (2, 2))
        self.assertEqual(adaptive_pool_plan(13, 6), (3, 2))
        self.assertEqual(adaptive_pool_plan(7, 4), (4, 1))

    def test_adaptive_plan_covers_every_position(self):
        for in_extent in range(1, 65):
            for out_extent in range(1, in_extent + 1):
                window, stride = adaptive_pool_plan(in_extent, out_extent)
                self.assertGreaterEqual(window, math.ceil(in_extent / out_extent))
                self.assertEqual(stride, in_extent // out_extent)
                covered = np.zeros(in_extent, dtype=bool)
                for k in range(out_extent):
                    start = k * stride
                    self.assertLessEqual(start + window, in_extent)
                    covered[start:start + window] = True
                self.assertTrue(covered.all(), (in_extent, out_extent))
                self.assertEqual((in_extent - window) // stride + 1, out_extent)

    def test_adaptive_plan_rejects_upsampling(self):
        with self.assertRaises(ShapeError):
            adaptive_pool_plan(3, 4)

    def test_adaptive_max_pool_output_side(self):
        x = Tensor(rng(2).standard_normal((2, 5, 13, 13)))
        for side in (1, 3, 4, 6, 13):
            self.assertEqual(adaptive_max_pool2d(x, side).shape, (2, 5, side, side))

    def test_adaptive_max_pool_takes_window_maxima(self):
        x = rng(3).standard_normal((1, 1, 13, 13))
        out = adaptive_max_pool2d(Tensor(x), 3).data[0, 0]
        for i in range(3):
            for j in range(3):
                self.assertEqual(out[i, j], x[0, 0, 4 * i:4 * i + 5, 4 * j:4 * j + 5].max())

    def test_global_avg_pool(self):
        x = rng(4).standard_normal((2, 3, 4, 5))
        assert_allclose(global_avg_pool(Tensor(x)).data, x.mean(axis=(2, 3)))


class LayerTests(SimpleTestCase):
    def test_linear(self):
        gen = rng(5)
        x, w, b = gen.standard_normal((4, 6)), gen.standard_normal((3, 6)), gen.standard_normal(3)
        assert_allclose(linear(Tensor(x), Tensor(w), Tensor(b)).data, x @ w.T + b)

    def test_linear_width_mismatch(self):
        with self.assertRaises(ShapeError):
            linear(Tensor(np.ones((2, 4))), Tensor(np.ones((3, 5))), Tensor(np.zeros(3)))

    def test_elementwise_mul_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            elementwise_mul(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))

    def test_split_inverts_concat(self):
        gen = rng(6)
        a, b = gen.standard_normal((2, 3, 4, 4)), gen.standard_normal((2, 5, 4, 4))
        first, second = split_channels(concat_channels(Tensor(a), Tensor(b)), 3)
        assert_array_equal(first.data, a)
        assert_array_equal(second.data, b)

    def test_sigmoid_is_stable_for_large_inputs(self):
        out = sigmoid(Tensor(np.array([-1000.0, 0.0, 1000.0]))).data
        assert_allclose(out, [0.0, 0.5, 1.0])


class LossTests(SimpleTestCase):
    def test_softmax_rows_sum_to_one(self):
        probabilities = softmax(rng(7).standard_normal((5, 4)) * 50)
        assert_allclose(probabilities.sum(axis=1), np.ones(5))

    def test_cross_entropy_of_uniform_logits(self):
        loss = softmax_cross_entropy(Tensor(np.zeros((3, 5))), [0, 2, 4])
        self.assertAlmostEqual(loss.item(), math.log(5), places=6)

    def test_cross_entropy_rejects_out_of_range_labels(self):
        with self.assertRaises(ShapeError):
            softmax_cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])

    def test_bce_at_zero_logit_is_ln2(self):
        loss = sigmoid_bce(Tensor(np.zeros((4, 1))), [1, 0, 1, 0])
        self.assertAlmostEqual(loss.item(), math.log(2), places=6)

    def test_bce_rejects_wide_logits(self):
        with self.assertRaises(ShapeError):
            sigmoid_bce(Tensor(np.zeros((2, 2))), [0, 1])

    def test_bce_rejects_labels_outside_zero_one(self):
        with self.assertRaisesRegex(ShapeError, "0 or 1"):
            sigmoid_bce(Tensor(np.zeros((3, 1))), [0, 1, 2])
        with self.assertRaises(ShapeError):
            sigmoid_bce(Tensor(np.zeros((2, 1))), [0.5, 1])


class DropoutTests(SimpleTestCase):
    def test_eval_mode_is_identity(self):
        x = Tensor(np.ones((2, 3)))
        self.assertIs(dropout(x, 0.6, False, rng()), x)

    def test_survivors_are_rescaled(self):
        out = dropout(Tensor(np.ones(100_000)), 0.6, True, rng(8)).data
        survivors = out[out != 0]
        self.assertAlmostEqual(survivors.size / out.size, 0.4, delta=0.01)
        assert_allclose(survivors, 2.5)

    def test_rate_must_be_below_one(self):
        with self.assertRaises(ShapeError):
            dropout(Tensor(np.ones(3)), 1.0, True, rng())


class UpsampleTests(SimpleTestCase):
    def test_corners_are_preserved(self):
        grid = rng(9).random((3, 4))
        out = bilinear_upsample(grid, 10, 13).data
        self.assertEqual(out.shape, (10, 13))
        for (r, c), (R, C) in (((0, 0), (0, 0)), ((0, 3), (0, 12)), ((2, 0), (9, 0)), ((2, 3), (9, 12))):
            self.assertAlmostEqual(out[R, C], grid[r, c])

    def test_constant_stays_constant(self):
        out = bilinear_upsample(np.full((3, 3), 0.25), 7, 7).data
        assert_allclose(out, np.full((7, 7), 0.25))
