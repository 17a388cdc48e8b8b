"""Pure-numpy pooling kernels, the fallback when the compiled extension is absent.

Semantics here are the contract; the Cython backend must match bit-for-bit.
All bin ranges arrive pre-quantized and pre-clipped as half-open pixel
intervals [hs, he) x [ws, we). An empty interval means an empty bin.
"""

import numpy as np


def roi_max_pool(img, hs, he, ws, we):
    """Per-channel max over each bin of img (C, H, W).

    Returns (pooled (C, oh, ow), argmax (C, oh, ow) flat H*W indices, -1 for
    empty bins).
    """
    c, h, w = img.shape
    oh, ow = hs.shape
    pooled = np.zeros((c, oh, ow))
    argmax = np.full((c, oh, ow), -1, dtype=np.int64)
    for i in range(oh):
        for j in range(ow):
            y0, y1, x0, x1 = hs[i, j], he[i, j], ws[i, j], we[i, j]
            if y0 >= y1 or x0 >= x1:
                continue
            patch = img[:, y0:y1, x0:x1].reshape(c, -1)
            flat = patch.argmax(axis=1)
            py, px = np.divmod(flat, x1 - x0)
            argmax[:, i, j] = (y0 + py) * w + (x0 + px)
            pooled[:, i, j] = patch[np.arange(c), flat]
    return pooled, argmax


def roi_max_unpool(argmax, grad_out, h, w):
    """Scatter-add each bin cotangent at its recorded argmax pixel."""
    c = argmax.shape[0]
    grad = np.zeros((c, h * w))
    for ch in range(c):
        idx = argmax[ch].ravel()
        valid = idx >= 0
        np.add.at(grad[ch], idx[valid], grad_out[ch].ravel()[valid])
    return grad.reshape(c, h, w)


def psroi_avg_pool(maps, k, nc, hs, he, ws, we):
    """Position-sensitive average pooling over maps (nc*k*k, H, W).

    Bin (i, j) of class c averages channel c*k*k + i*k + j over its range.
    Returns (values (nc, k, k), counts (k, k)).
    """
    values = np.zeros((nc, k, k))
    counts = np.zeros((k, k), dtype=np.int64)
    for i in range(k):
        for j in range(k):
            y0, y1, x0, x1 = hs[i, j], he[i, j], ws[i, j], we[i, j]
            if y0 >= y1 or x0 >= x1:
                continue
            counts[i, j] = (y1 - y0) * (x1 - x0)
            for c in range(nc):
                ch = c * k * k + i * k + j
                values[c, i, j] = maps[ch, y0:y1, x0:x1].sum() / counts[i, j]
    return values, counts


def psroi_avg_unpool(grad_out, k, nc, hs, he, ws, we, counts, h, w):
    """Spread each bin cotangent uniformly over its source pixels."""
    grad = np.zeros((nc * k * k, h, w))
    for i in range(k):
        for j in range(k):
            n = counts[i, j]
            if n == 0:
                continue
            y0, y1, x0, x1 = hs[i, j], he[i, j], ws[i, j], we[i, j]
            for c in range(nc):
                ch = c * k * k + i * k + j
                grad[ch, y0:y1, x0:x1] += grad_out[c, i, j] / n
    return grad
