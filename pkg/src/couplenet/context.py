"""Context-region construction for the global branch: expand each RoI
about its center, pool both regions, concatenate along channels."""

from dataclasses import dataclass

import numpy as np

from .roi import RoI, roi_pool_max


@dataclass(frozen=True)
class ContextPair:
    original: RoI
    expanded: RoI

    def __post_init__(self):
        if self.original.batch_index != self.expanded.batch_index:
            raise ValueError("context pair spans different batch elements")


def expand_roi(roi, factor, image_w, image_h):
    """Scale width/height by factor about the center, clip to the image."""
    if factor < 1:
        raise ValueError(f"expansion factor must be >= 1, got {factor}")
    cx, cy = roi.center
    hw = 0.5 * factor * roi.width
    hh = 0.5 * factor * roi.height
    return RoI(
        roi.batch_index,
        float(np.clip(cx - hw, 0.0, image_w)),
        float(np.clip(cy - hh, 0.0, image_h)),
        float(np.clip(cx + hw, 0.0, image_w)),
        float(np.clip(cy + hh, 0.0, image_h)),
    )


def make_context_pair(roi, factor, image_w, image_h):
    return ContextPair(roi, expand_roi(roi, factor, image_w, image_h))


def pool_with_context(features, pair, out_k, spatial_scale):
    """Max-pool original and expanded regions to out_k x out_k each and
    concatenate along channels, original first.

    Returns (pooled (1, 2C, out_k, out_k), (argmax_original, argmax_context)).
    """
    pooled_o, arg_o = roi_pool_max(features, pair.original, out_k, out_k, spatial_scale)
    pooled_c, arg_c = roi_pool_max(features, pair.expanded, out_k, out_k, spatial_scale)
    return np.concatenate([pooled_o, pooled_c], axis=1), (arg_o, arg_c)
