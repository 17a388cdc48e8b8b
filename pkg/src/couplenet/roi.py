"""RoI max pooling (global branch) and position-sensitive RoI average
pooling plus voting (local branch), with exact backward passes.

Both operators share one quantization routine: RoI corners are scaled to
feature coordinates, floored (x1, y1) / ceiled (x2, y2), and a minimum
extent of one pixel is enforced. Bin (i, j) of a g-way grid covers rows
[floor(i*rh/g), ceil((i+1)*rh/g)) offset by the quantized RoI start and
clipped to the map. Bins left empty by clipping pool to 0 and carry no
gradient.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True)
class RoI:
    """One region proposal: batch index plus continuous image-coordinate corners."""

    batch_index: int
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(f"degenerate RoI corners ({self.x1}, {self.y1}, {self.x2}, {self.y2})")

    @property
    def width(self):
        return self.x2 - self.x1

    @property
    def height(self):
        return self.y2 - self.y1

    @property
    def center(self):
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))


def quantize_roi(roi, spatial_scale):
    """Scale corners to feature coordinates; floor start, ceil end, min extent 1."""
    qx1 = int(np.floor(roi.x1 * spatial_scale))
    qy1 = int(np.floor(roi.y1 * spatial_scale))
    qx2 = max(int(np.ceil(roi.x2 * spatial_scale)), qx1 + 1)
    qy2 = max(int(np.ceil(roi.y2 * spatial_scale)), qy1 + 1)
    return qx1, qy1, qx2, qy2


def bin_ranges(roi, spatial_scale, grid_h, grid_w, map_h, map_w):
    """Half-open pixel intervals per bin, as int64 arrays (hs, he, ws, we).

    The single source of truth for bin geometry; both pooling operators
    call it, which is what makes their partitions consistent.
    """
    qx1, qy1, qx2, qy2 = quantize_roi(roi, spatial_scale)
    rh, rw = qy2 - qy1, qx2 - qx1
    i = np.arange(grid_h, dtype=np.int64)
    j = np.arange(grid_w, dtype=np.int64)
    hs = qy1 + (i * rh) // grid_h
    he = qy1 + -((-(i + 1) * rh) // grid_h)
    ws = qx1 + (j * rw) // grid_w
    we = qx1 + -((-(j + 1) * rw) // grid_w)
    hs = np.clip(hs, 0, map_h)
    he = np.clip(he, 0, map_h)
    ws = np.clip(ws, 0, map_w)
    we = np.clip(we, 0, map_w)
    hs2, ws2 = np.meshgrid(hs, ws, indexing="ij")
    he2, we2 = np.meshgrid(he, we, indexing="ij")
    return (np.ascontiguousarray(hs2), np.ascontiguousarray(he2),
            np.ascontiguousarray(ws2), np.ascontiguousarray(we2))


@dataclass
class RoiPoolArgmax:
    """Per-(channel, bin) winning pixel of a roi_pool_max call; -1 marks empty bins."""

    flat_index: np.ndarray  # (C, out_h, out_w) int64, flat into H*W
    batch_index: int
    map_h: int
    map_w: int


@dataclass
class PooledLocal:
    """Output of psroi_pool_avg: per-class k x k part grid plus bin metadata."""

    values: np.ndarray  # (1, C+1, k, k)
    bin_source_counts: np.ndarray  # (k, k) int64
    bin_bounds: tuple  # (hs, he, ws, we), each (k, k) int64
    batch_index: int
    map_h: int
    map_w: int


def _check_features(features, spatial_scale):
    if features.ndim != 4:
        raise ValueError(f"expected 4-D feature tensor, got shape {features.shape}")
    if features.shape[2] == 0 or features.shape[3] == 0:
        raise ValueError("feature map has zero spatial extent")
    if spatial_scale <= 0:
        raise ValueError(f"spatial_scale must be positive, got {spatial_scale}")


def roi_pool_max(features, roi, out_h, out_w, spatial_scale):
    """Quantized max pooling of one RoI into an out_h x out_w grid.

    Returns (pooled (1, C, out_h, out_w), argmax record for backward).
    """
    _check_features(features, spatial_scale)
    _, c, h, w = features.shape
    hs, he, ws, we = bin_ranges(roi, spatial_scale, out_h, out_w, h, w)
    img = np.ascontiguousarray(features[roi.batch_index])
    pooled, flat = kernels.roi_max_pool(img, hs, he, ws, we)
    return pooled[None], RoiPoolArgmax(flat, roi.batch_index, h, w)


def roi_pool_max_backward(argmax, upstream_grad, feature_shape):
    """Scatter-add each bin cotangent at its recorded argmax pixel."""
    b, c, h, w = feature_shape
    if (h, w) != (argmax.map_h, argmax.map_w):
        raise ValueError(f"feature shape {feature_shape} does not match argmax map "
                         f"({argmax.map_h}, {argmax.map_w})")
    grad_img = upstream_grad.reshape(argmax.flat_index.shape)
    if grad_img.shape != argmax.flat_index.shape:
        raise ValueError("upstream gradient shape does not match pooled shape")
    grad = np.zeros(feature_shape)
    grad[argmax.batch_index] = kernels.roi_max_unpool(
        argmax.flat_index, np.ascontiguousarray(grad_img), h, w)
    return grad


def psroi_pool_avg(score_maps, roi, k, num_classes_plus_bg, spatial_scale):
    """Position-sensitive average pooling: bin (i, j) of class c reads only
    channel c*k*k + i*k + j (class-major, then part-row-major)."""
    _check_features(score_maps, spatial_scale)
    _, c, h, w = score_maps.shape
    if c != k * k * num_classes_plus_bg:
        raise ValueError(
            f"score maps have {c} channels, expected k^2*(C+1) = "
            f"{k * k * num_classes_plus_bg} for k={k}, C+1={num_classes_plus_bg}")
    bounds = bin_ranges(roi, spatial_scale, k, k, h, w)
    img = np.ascontiguousarray(score_maps[roi.batch_index])
    values, counts = kernels.psroi_avg_pool(img, k, num_classes_plus_bg, *bounds)
    return PooledLocal(values[None], counts, bounds, roi.batch_index, h, w)


def psroi_pool_avg_backward(pooled, upstream_grad, score_map_shape):
    """Spread each bin cotangent uniformly over its source pixels."""
    b, c, h, w = score_map_shape
    nc, k = pooled.values.shape[1], pooled.values.shape[2]
    if c != nc * k * k or (h, w) != (pooled.map_h, pooled.map_w):
        raise ValueError(f"score map shape {score_map_shape} does not match pooled metadata")
    grad_bins = np.ascontiguousarray(upstream_grad.reshape(nc, k, k))
    grad = np.zeros(score_map_shape)
    grad[pooled.batch_index] = kernels.psroi_avg_unpool(
        grad_bins, k, nc, *pooled.bin_bounds, pooled.bin_source_counts, h, w)
    return grad


def vote_average(pooled):
    """Per-class mean over all k^2 part bins (empty bins vote their zeros)."""
    return pooled.values[0].mean(axis=(1, 2))


def vote_average_backward(grad_scores, k):
    """Cotangent of vote_average: spread each class gradient evenly over bins."""
    nc = grad_scores.shape[0]
    return np.broadcast_to(grad_scores[None, :, None, None] / (k * k), (1, nc, k, k)).copy()
