"""Dense-tensor kernels with analytic backward passes.

All tensors are contiguous float64 numpy arrays laid out
(batch, channel, height, width). Convolution uses cross-correlation
semantics, the convention of every region-based detector. Every forward
here is a pure function and every backward is the exact vector-Jacobian
product of its forward, checked against central finite differences in
the test suite.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class ConvParams:
    """Weights of one convolution: weight (out_c, in_c, kh, kw), bias (out_c,)."""

    weight: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0


def init_conv(rng, in_c, out_c, kh, kw=None, stride=1, padding=0):
    """Centered-uniform init with scale 1/sqrt(fan-in), zero bias."""
    if kw is None:
        kw = kh
    fan_in = in_c * kh * kw
    bound = 1.0 / np.sqrt(fan_in)
    weight = rng.uniform(-bound, bound, size=(out_c, in_c, kh, kw))
    return ConvParams(weight=weight, bias=np.zeros(out_c), stride=stride, padding=padding)


def conv_output_extent(extent, k, stride, padding):
    return (extent + 2 * padding - k) // stride + 1


def conv2d(x, params):
    """Cross-correlate x (b, c, h, w) with params, returning (b, out_c, oh, ow)."""
    w, stride, pad = params.weight, params.stride, params.padding
    out_c, in_c, kh, kw = w.shape
    b, c, h, _w = x.shape
    if c != in_c:
        raise ValueError(f"conv2d: input has {c} channels, weight expects {in_c}")
    if h + 2 * pad < kh or _w + 2 * pad < kw:
        raise ValueError(
            f"conv2d: padded spatial extents ({h + 2 * pad}, {_w + 2 * pad}) "
            f"smaller than kernel ({kh}, {kw})"
        )
    oh = conv_output_extent(h, kh, stride, pad)
    ow = conv_output_extent(_w, kw, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    out = np.empty((b, out_c, oh, ow))
    out[:] = params.bias[None, :, None, None]
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
            out += np.einsum("bchw,oc->bohw", patch, w[:, :, i, j])
    return out


def conv2d_backward(x, params, grad_out):
    """Vector-Jacobian products of conv2d: (grad_x, grad_weight, grad_bias)."""
    w, stride, pad = params.weight, params.stride, params.padding
    out_c, in_c, kh, kw = w.shape
    b, c, h, _w = x.shape
    oh = conv_output_extent(h, kh, stride, pad)
    ow = conv_output_extent(_w, kw, stride, pad)
    if grad_out.shape != (b, out_c, oh, ow):
        raise ValueError(
            f"conv2d_backward: upstream gradient shape {grad_out.shape} "
            f"does not match output shape {(b, out_c, oh, ow)}"
        )
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
            gw[:, :, i, j] = np.einsum("bchw,bohw->oc", patch, grad_out)
            gxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += np.einsum(
                "bohw,oc->bchw", grad_out, w[:, :, i, j]
            )
    gb = grad_out.sum(axis=(0, 2, 3))
    gx = gxp[:, :, pad : pad + h, pad : pad + _w] if pad else gxp
    return gx, gw, gb


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(x, grad_out):
    # subgradient at exactly 0 is 0
    return np.where(x > 0.0, grad_out, 0.0)


def softmax(logits):
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def softmax_cross_entropy(logits, label):
    """Loss -log softmax(logits)[label] and its gradient, max-stabilized."""
    n = logits.shape[0]
    if not 0 <= label < n:
        raise ValueError(f"label {label} out of range for {n} classes")
    z = logits - logits.max()
    logsumexp = np.log(np.exp(z).sum())
    loss = logsumexp - z[label]
    grad = np.exp(z - logsumexp)
    grad[label] -= 1.0
    return loss, grad


def smooth_l1(pred, target):
    """Summed Huber-style loss: 0.5 x^2 for |x| < 1, |x| - 0.5 beyond."""
    if pred.shape != target.shape:
        raise ValueError(f"smooth_l1: shapes {pred.shape} vs {target.shape} differ")
    x = pred - target
    ax = np.abs(x)
    inner = ax < 1.0
    loss = np.where(inner, 0.5 * x * x, ax - 0.5).sum()
    grad = np.where(inner, x, np.sign(x))
    return loss, grad
