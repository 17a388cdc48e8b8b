import numpy as np
import pytest

from couplenet.nn import (ConvParams, conv2d, conv2d_backward, relu,
                          relu_backward, smooth_l1, softmax_cross_entropy)

from conftest import assert_grad_close, fd_grad, max_rel_err


def conv2d_oracle(x, w, bias, stride, pad):
    """Nested-loop cross-correlation, written independently of conv2d."""
    b, c, h, ww = x.shape
    oc, ic, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (ww + 2 * pad - kw) // stride + 1
    out = np.zeros((b, oc, oh, ow))
    for n in range(b):
        for o in range(oc):
            for i in range(oh):
                for j in range(ow):
                    acc = bias[o]
                    for ci in range(ic):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[n, ci, i * stride + u, j * stride + v] * w[o, ci, u, v]
                    out[n, o, i, j] = acc
    return out


class TestConv2d:
    def test_scalar_scaling(self):
        x = np.ones((1, 1, 3, 3))
        p = ConvParams(np.full((1, 1, 1, 1), 2.0), np.zeros(1))
        assert np.array_equal(conv2d(x, p), np.full((1, 1, 3, 3), 2.0))

    def test_identity_kernel(self, rng):
        x = rng.normal(size=(2, 3, 5, 6))
        w = np.zeros((3, 3, 3, 3))
        for c in range(3):
            w[c, c, 1, 1] = 1.0
        p = ConvParams(w, np.zeros(3), stride=1, padding=1)
        assert np.array_equal(conv2d(x, p), x)

    @pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1)])
    def test_matches_loop_oracle(self, rng, stride, pad):
        x = rng.normal(size=(1, 2, 5, 5))
        w = rng.normal(size=(3, 2, 3, 3))
        bias = rng.normal(size=3)
        p = ConvParams(w, bias, stride=stride, padding=pad)
        out = conv2d(x, p)
        assert max_rel_err(out, conv2d_oracle(x, w, bias, stride, pad)) < 1e-12

    def test_channel_mismatch_rejected(self, rng):
        x = rng.normal(size=(1, 2, 4, 4))
        p = ConvParams(rng.normal(size=(1, 3, 3, 3)), np.zeros(1))
        with pytest.raises(ValueError, match="channels"):
            conv2d(x, p)

    def test_kernel_larger_than_input_rejected(self, rng):
        x = rng.normal(size=(1, 1, 2, 2))
        p = ConvParams(rng.normal(size=(1, 1, 3, 3)), np.zeros(1))
        with pytest.raises(ValueError):
            conv2d(x, p)


class TestConv2dBackward:
    def test_zero_cotangent(self, rng):
        x = rng.normal(size=(1, 2, 4, 4))
        p = ConvParams(rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3))
        gx, gw, gb = conv2d_backward(x, p, np.zeros((1, 3, 2, 2)))
        assert not gx.any() and not gw.any() and not gb.any()

    def test_bias_grad_is_cotangent_sum(self, rng):
        x = rng.normal(size=(1, 1, 4, 4))
        p = ConvParams(rng.normal(size=(1, 1, 1, 1)), np.zeros(1))
        g = rng.normal(size=(1, 1, 4, 4))
        _, _, gb = conv2d_backward(x, p, g)
        assert np.isclose(gb[0], g.sum())

    def test_shape_mismatch_rejected(self, rng):
        x = rng.normal(size=(1, 1, 4, 4))
        p = ConvParams(rng.normal(size=(1, 1, 3, 3)), np.zeros(1))
        with pytest.raises(ValueError):
            conv2d_backward(x, p, np.zeros((1, 1, 4, 4)))

    @pytest.mark.parametrize("stride,pad", [(1, 0), (2, 1)])
    def test_matches_finite_differences(self, rng, stride, pad):
        x = rng.normal(size=(1, 2, 5, 5))
        w = rng.normal(size=(2, 2, 3, 3))
        bias = rng.normal(size=2)
        p = ConvParams(w, bias, stride=stride, padding=pad)
        cot = rng.normal(size=conv2d(x, p).shape)
        gx, gw, gb = conv2d_backward(x, p, cot)
        assert_grad_close(gx, fd_grad(
            lambda v: np.sum(conv2d(v, p) * cot), x))
        assert_grad_close(gw, fd_grad(
            lambda v: np.sum(conv2d(x, ConvParams(v, bias, stride, pad)) * cot), w))
        assert_grad_close(gb, fd_grad(
            lambda v: np.sum(conv2d(x, ConvParams(w, v, stride, pad)) * cot), bias))


class TestRelu:
    def test_definition(self):
        x = np.array([-1.0, 0.0, 2.0]).reshape(1, 1, 1, 3)
        assert np.array_equal(relu(x).ravel(), [0.0, 0.0, 2.0])

    def test_all_negative(self, rng):
        x = -np.abs(rng.normal(size=(1, 2, 3, 3))) - 0.1
        assert not relu(x).any()

    def test_grad_vs_finite_differences(self, rng):
        x = rng.normal(size=(1, 1, 4, 4))
        x[np.abs(x) < 1e-3] = 0.5  # keep away from the kink
        cot = rng.normal(size=x.shape)
        g = relu_backward(x, cot)
        assert_grad_close(g, fd_grad(lambda v: np.sum(relu(v) * cot), x))


class TestSoftmaxCrossEntropy:
    def test_uniform_logits(self):
        loss, _ = softmax_cross_entropy(np.zeros(4), 2)
        assert np.isclose(loss, np.log(4.0))

    def test_saturated_correct_class(self):
        loss, _ = softmax_cross_entropy(np.array([100.0, 0.0, 0.0, 0.0]), 0)
        assert loss < 1e-10

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            softmax_cross_entropy(np.zeros(3), 3)

    def test_stable_for_large_logits(self):
        loss, grad = softmax_cross_entropy(np.array([1e4, -1e4, 0.0]), 1)
        assert np.isfinite(loss) and np.all(np.isfinite(grad))

    def test_grad_vs_finite_differences(self, rng):
        logits = rng.normal(size=5)
        _, grad = softmax_cross_entropy(logits, 3)
        assert_grad_close(grad, fd_grad(
            lambda v: softmax_cross_entropy(v, 3)[0], logits))


class TestSmoothL1:
    def test_closed_forms(self):
        loss, _ = smooth_l1(np.array([0.5]), np.array([0.0]))
        assert np.isclose(loss, 0.125)
        loss, _ = smooth_l1(np.array([2.0]), np.array([0.0]))
        assert np.isclose(loss, 1.5)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            smooth_l1(np.zeros(3), np.zeros(4))

    def test_grad_vs_finite_differences(self, rng):
        target = rng.normal(size=6)
        pred = target + rng.normal(size=6)
        # keep |x| away from the |x| = 1 kink
        x = pred - target
        pred[np.abs(np.abs(x) - 1.0) < 1e-3] += 0.01
        _, grad = smooth_l1(pred, target)
        assert_grad_close(grad, fd_grad(lambda v: smooth_l1(v, target)[0], pred))


def test_forward_is_pure(rng):
    x = rng.normal(size=(1, 2, 4, 4))
    p = ConvParams(rng.normal(size=(2, 2, 3, 3)), rng.normal(size=2), 1, 1)
    assert np.array_equal(conv2d(x, p), conv2d(x, p))
