"""Per-RoI detection head: the position-sensitive local branch, the
global/context branch, and their coupled combination, with full analytic
backward for training.

Layer stack, applied to backbone features:

  local:  1x1 conv -> k^2(C+1) part score maps -> PSRoI average pooling
          -> voting -> (C+1) class vector; a parallel 4k^2-channel path
          produces the class-agnostic 4-vector of box deltas.
  global: 1x1 reduce conv -> RoI max pooling to k x k (optionally
          concatenated with the pooled 2x context region) -> k x k conv
          (valid, collapses to 1x1) -> ReLU -> 1x1 cls / bbox convs.

Branch vectors are normalized and coupled element-wise per the coupling
configuration; single-branch configurations bypass coupling entirely.
"""

from dataclasses import dataclass, field

import numpy as np

from .backbone import SPATIAL_SCALE
from .context import make_context_pair, pool_with_context
from .coupling import (CouplingConfig, ScaleParams, couple, couple_backward,
                       normalize_branch, normalize_branch_backward)
from .nn import ConvParams, conv2d, conv2d_backward, init_conv, relu, relu_backward
from .roi import (psroi_pool_avg, psroi_pool_avg_backward, roi_pool_max,
                  roi_pool_max_backward, vote_average, vote_average_backward)


@dataclass(frozen=True)
class HeadConfig:
    k: int = 3
    num_classes: int = 4  # foreground classes; C+1 with background
    coupling: CouplingConfig = field(default_factory=CouplingConfig)
    use_context: bool = False
    context_factor: float = 2.0
    spatial_scale: float = SPATIAL_SCALE

    @property
    def nc(self):
        return self.num_classes + 1


@dataclass
class HeadParams:
    local_score_conv: ConvParams  # 1x1 -> k^2 (C+1)
    local_bbox_conv: ConvParams  # 1x1 -> 4 k^2
    global_reduce_conv: ConvParams  # 1x1 -> D
    global_kxk_conv: ConvParams  # k x k valid -> hidden
    global_cls_conv: ConvParams  # 1x1 -> C+1
    global_bbox_conv: ConvParams  # 1x1 -> 4
    scale_cls: ScaleParams
    scale_bbox: ScaleParams

    @classmethod
    def init(cls, rng, in_channels, config, reduce_d=64, hidden=64):
        k, nc = config.k, config.nc
        kxk_in = 2 * reduce_d if config.use_context else reduce_d
        return cls(
            local_score_conv=init_conv(rng, in_channels, k * k * nc, 1),
            local_bbox_conv=init_conv(rng, in_channels, 4 * k * k, 1),
            global_reduce_conv=init_conv(rng, in_channels, reduce_d, 1),
            global_kxk_conv=init_conv(rng, kxk_in, hidden, k),
            global_cls_conv=init_conv(rng, hidden, nc, 1),
            global_bbox_conv=init_conv(rng, hidden, 4, 1),
            scale_cls=ScaleParams.identity(nc),
            scale_bbox=ScaleParams.identity(4),
        )


@dataclass
class RoIOutput:
    cls_scores: np.ndarray  # (C+1,)
    bbox_deltas: np.ndarray  # (4,)
    branch_scores: dict  # raw pre-coupling vectors per enabled branch


# -- local branch ------------------------------------------------------------


def _local_maps(features, params):
    score_maps = conv2d(features, params.local_score_conv)
    bbox_maps = conv2d(features, params.local_bbox_conv)
    return score_maps, bbox_maps


def _local_from_maps(score_maps, bbox_maps, roi, config):
    pooled_cls = psroi_pool_avg(score_maps, roi, config.k, config.nc, config.spatial_scale)
    pooled_bbox = psroi_pool_avg(bbox_maps, roi, config.k, 4, config.spatial_scale)
    cls = vote_average(pooled_cls)
    bbox = vote_average(pooled_bbox)
    return cls, bbox, (pooled_cls, pooled_bbox)


def local_branch(features, roi, params, config):
    """Full local FCN path from backbone features for one RoI."""
    score_maps, bbox_maps = _local_maps(features, params)
    cls, bbox, _ = _local_from_maps(score_maps, bbox_maps, roi, config)
    return cls, bbox


# -- global branch -----------------------------------------------------------


def _global_from_reduced(reduced, roi, params, config, image_w, image_h):
    k = config.k
    if config.use_context:
        pair = make_context_pair(roi, config.context_factor, image_w, image_h)
        pooled, argmax = pool_with_context(reduced, pair, k, config.spatial_scale)
    else:
        pooled, argmax = roi_pool_max(reduced, roi, k, k, config.spatial_scale)
    pre = conv2d(pooled, params.global_kxk_conv)  # (1, hidden, 1, 1)
    act = relu(pre)
    cls = conv2d(act, params.global_cls_conv).ravel()
    bbox = conv2d(act, params.global_bbox_conv).ravel()
    return cls, bbox, (pooled, argmax, pre, act)


def _image_extent(features, spatial_scale):
    return features.shape[3] / spatial_scale, features.shape[2] / spatial_scale


def global_branch(features, roi, params, config, image_w=None, image_h=None):
    """Full global FCN path from backbone features for one RoI."""
    if image_w is None or image_h is None:
        image_w, image_h = _image_extent(features, config.spatial_scale)
    reduced = conv2d(features, params.global_reduce_conv)
    cls, bbox, _ = _global_from_reduced(reduced, roi, params, config, image_w, image_h)
    return cls, bbox


# -- coupled head ------------------------------------------------------------


def _couple_vectors(local_v, global_v, config, scale):
    """Normalize enabled branch vectors and combine; returns the output."""
    cpl = config.coupling
    norm = cpl.normalization
    if cpl.both_branches:
        nl = normalize_branch(local_v, norm, scale.local_scale, scale.local_bias)
        ng = normalize_branch(global_v, norm, scale.global_scale, scale.global_bias)
        return couple(nl, ng, cpl.strategy)
    if cpl.enable_local:
        return normalize_branch(local_v, norm, scale.local_scale, scale.local_bias)
    return normalize_branch(global_v, norm, scale.global_scale, scale.global_bias)


def _couple_vectors_backward(local_v, global_v, config, scale, grad_out):
    """Returns (grad_local, grad_global, scale_grads dict or None)."""
    cpl = config.coupling
    norm = cpl.normalization
    sg = None
    if cpl.both_branches:
        nl = normalize_branch(local_v, norm, scale.local_scale, scale.local_bias)
        ng = normalize_branch(global_v, norm, scale.global_scale, scale.global_bias)
        g_nl, g_ng = couple_backward(nl, ng, cpl.strategy, grad_out)
        g_l, gs_l, gb_l = normalize_branch_backward(local_v, norm, g_nl, scale.local_scale)
        g_g, gs_g, gb_g = normalize_branch_backward(global_v, norm, g_ng, scale.global_scale)
        if norm == "learned_scale":
            sg = {"local_scale": gs_l, "local_bias": gb_l,
                  "global_scale": gs_g, "global_bias": gb_g}
        return g_l, g_g, sg
    if cpl.enable_local:
        g_l, gs_l, gb_l = normalize_branch_backward(local_v, norm, grad_out, scale.local_scale)
        if norm == "learned_scale":
            sg = {"local_scale": gs_l, "local_bias": gb_l,
                  "global_scale": np.zeros_like(scale.global_scale),
                  "global_bias": np.zeros_like(scale.global_bias)}
        return g_l, None, sg
    g_g, gs_g, gb_g = normalize_branch_backward(global_v, norm, grad_out, scale.global_scale)
    if norm == "learned_scale":
        sg = {"local_scale": np.zeros_like(scale.local_scale),
              "local_bias": np.zeros_like(scale.local_bias),
              "global_scale": gs_g, "global_bias": gb_g}
    return None, g_g, sg


@dataclass
class HeadCache:
    """Everything head_backward needs, recorded during head_forward."""

    features: np.ndarray
    score_maps: np.ndarray | None
    bbox_maps: np.ndarray | None
    reduced: np.ndarray | None
    roi_caches: list  # per RoI: (local_cache, global_cache, raw branch vectors)


def head_forward(features, rois, params, config):
    """Run the head over all RoIs; returns (list of RoIOutput, HeadCache)."""
    cpl = config.coupling
    image_w, image_h = _image_extent(features, config.spatial_scale)
    score_maps = bbox_maps = reduced = None
    if cpl.enable_local:
        score_maps, bbox_maps = _local_maps(features, params)
    if cpl.enable_global:
        reduced = conv2d(features, params.global_reduce_conv)

    outputs, roi_caches = [], []
    for roi in rois:
        lc = lb = gc = gb = None
        local_cache = global_cache = None
        branch_scores = {}
        if cpl.enable_local:
            lc, lb, local_cache = _local_from_maps(score_maps, bbox_maps, roi, config)
            branch_scores["local"] = (lc, lb)
        if cpl.enable_global:
            gc, gb, global_cache = _global_from_reduced(
                reduced, roi, params, config, image_w, image_h)
            branch_scores["global"] = (gc, gb)
        cls = _couple_vectors(lc, gc, config, params.scale_cls)
        bbox = _couple_vectors(lb, gb, config, params.scale_bbox)
        outputs.append(RoIOutput(cls, bbox, branch_scores))
        roi_caches.append((local_cache, global_cache, (lc, lb, gc, gb)))
    return outputs, HeadCache(features, score_maps, bbox_maps, reduced, roi_caches)


def couplenet_forward(features, rois, params, config):
    """Pure forward pass: one RoIOutput per RoI."""
    outputs, _ = head_forward(features, rois, params, config)
    return outputs


def _zero_conv_grads(prefix, conv):
    return {f"{prefix}.weight": np.zeros_like(conv.weight),
            f"{prefix}.bias": np.zeros_like(conv.bias)}


def head_backward(cache, params, config, grad_cls_list, grad_bbox_list):
    """Backward through the whole head.

    grad_cls_list / grad_bbox_list hold one cotangent per RoI (None for
    RoIs excluded from the loss). Returns (param_grads, grad_features).
    """
    cpl = config.coupling
    k, nc = config.k, config.nc
    grads = {}
    for name in ("local_score_conv", "local_bbox_conv", "global_reduce_conv",
                 "global_kxk_conv", "global_cls_conv", "global_bbox_conv"):
        grads.update(_zero_conv_grads(f"head.{name}", getattr(params, name)))
    for tag, sp in (("scale_cls", params.scale_cls), ("scale_bbox", params.scale_bbox)):
        for fname in ("local_scale", "local_bias", "global_scale", "global_bias"):
            grads[f"head.{tag}.{fname}"] = np.zeros_like(getattr(sp, fname))

    g_score_maps = np.zeros_like(cache.score_maps) if cache.score_maps is not None else None
    g_bbox_maps = np.zeros_like(cache.bbox_maps) if cache.bbox_maps is not None else None
    g_reduced = np.zeros_like(cache.reduced) if cache.reduced is not None else None

    def add_scale_grads(tag, sg):
        if sg is not None:
            for fname, val in sg.items():
                grads[f"head.{tag}.{fname}"] += val

    for (local_cache, global_cache, raw), g_cls, g_bbox in zip(
            cache.roi_caches, grad_cls_list, grad_bbox_list):
        if g_cls is None and g_bbox is None:
            continue
        lc, lb, gc, gb = raw
        g_cls = np.zeros(nc) if g_cls is None else g_cls
        g_bbox = np.zeros(4) if g_bbox is None else g_bbox

        g_lc, g_gc, sg = _couple_vectors_backward(lc, gc, config, params.scale_cls, g_cls)
        add_scale_grads("scale_cls", sg)
        g_lb, g_gb, sg = _couple_vectors_backward(lb, gb, config, params.scale_bbox, g_bbox)
        add_scale_grads("scale_bbox", sg)

        if cpl.enable_local:
            pooled_cls, pooled_bbox = local_cache
            g_score_maps += psroi_pool_avg_backward(
                pooled_cls, vote_average_backward(g_lc, k), cache.score_maps.shape)
            g_bbox_maps += psroi_pool_avg_backward(
                pooled_bbox, vote_average_backward(g_lb, k), cache.bbox_maps.shape)

        if cpl.enable_global:
            pooled, argmax, pre, act = global_cache
            gx_c, gw, gb_ = conv2d_backward(act, params.global_cls_conv,
                                            g_gc.reshape(1, -1, 1, 1))
            grads["head.global_cls_conv.weight"] += gw
            grads["head.global_cls_conv.bias"] += gb_
            gx_b, gw, gb_ = conv2d_backward(act, params.global_bbox_conv,
                                            g_gb.reshape(1, -1, 1, 1))
            grads["head.global_bbox_conv.weight"] += gw
            grads["head.global_bbox_conv.bias"] += gb_
            g_pre = relu_backward(pre, gx_c + gx_b)
            g_pooled, gw, gb_ = conv2d_backward(pooled, params.global_kxk_conv, g_pre)
            grads["head.global_kxk_conv.weight"] += gw
            grads["head.global_kxk_conv.bias"] += gb_
            if config.use_context:
                d = g_pooled.shape[1] // 2
                arg_o, arg_c = argmax
                g_reduced += roi_pool_max_backward(arg_o, g_pooled[:, :d], cache.reduced.shape)
                g_reduced += roi_pool_max_backward(arg_c, g_pooled[:, d:], cache.reduced.shape)
            else:
                g_reduced += roi_pool_max_backward(argmax, g_pooled, cache.reduced.shape)

    grad_features = np.zeros_like(cache.features)
    if cpl.enable_local:
        gx, gw, gb_ = conv2d_backward(cache.features, params.local_score_conv, g_score_maps)
        grads["head.local_score_conv.weight"] += gw
        grads["head.local_score_conv.bias"] += gb_
        grad_features += gx
        gx, gw, gb_ = conv2d_backward(cache.features, params.local_bbox_conv, g_bbox_maps)
        grads["head.local_bbox_conv.weight"] += gw
        grads["head.local_bbox_conv.bias"] += gb_
        grad_features += gx
    if cpl.enable_global:
        gx, gw, gb_ = conv2d_backward(cache.features, params.global_reduce_conv, g_reduced)
        grads["head.global_reduce_conv.weight"] += gw
        grads["head.global_reduce_conv.bias"] += gb_
        grad_features += gx
    return grads, grad_features
