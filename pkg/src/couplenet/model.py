"""Bundles backbone and head parameters into one trainable model with a
flat name -> array parameter view used by the optimizer, the gradient
checker and the checkpoint format."""

from dataclasses import dataclass, field

import numpy as np

from .backbone import BackboneParams, backbone_backward, backbone_forward
from .coupling import CouplingConfig
from .heads import HeadConfig, HeadParams, head_backward, head_forward


@dataclass(frozen=True)
class ModelDims:
    in_channels: int = 1
    c1: int = 12
    c2: int = 24
    c3: int = 32
    reduce_d: int = 64
    hidden: int = 64


class CoupleNetModel:
    def __init__(self, config: HeadConfig, dims: ModelDims = ModelDims(), seed=0):
        rng = np.random.Generator(np.random.Philox(seed))
        self.config = config
        self.dims = dims
        self.backbone = BackboneParams.init(
            rng, in_channels=dims.in_channels, c1=dims.c1, c2=dims.c2, c3=dims.c3)
        self.head = HeadParams.init(
            rng, dims.c3, config, reduce_d=dims.reduce_d, hidden=dims.hidden)

    def param_dict(self):
        """Live views of every parameter array, keyed by dotted name."""
        p = {}
        for name in ("conv1", "conv2", "conv3"):
            conv = getattr(self.backbone, name)
            p[f"backbone.{name}.weight"] = conv.weight
            p[f"backbone.{name}.bias"] = conv.bias
        for name in ("local_score_conv", "local_bbox_conv", "global_reduce_conv",
                     "global_kxk_conv", "global_cls_conv", "global_bbox_conv"):
            conv = getattr(self.head, name)
            p[f"head.{name}.weight"] = conv.weight
            p[f"head.{name}.bias"] = conv.bias
        for tag in ("scale_cls", "scale_bbox"):
            sp = getattr(self.head, tag)
            for fname in ("local_scale", "local_bias", "global_scale", "global_bias"):
                p[f"head.{tag}.{fname}"] = getattr(sp, fname)
        return p

    def load_param_dict(self, arrays):
        live = self.param_dict()
        missing = set(live) - set(arrays)
        extra = set(arrays) - set(live)
        if missing or extra:
            raise ValueError(f"parameter set mismatch: missing {sorted(missing)}, "
                             f"unexpected {sorted(extra)}")
        for name, arr in arrays.items():
            if live[name].shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}: "
                                 f"{live[name].shape} vs {arr.shape}")
            live[name][...] = arr

    def forward(self, image, rois):
        outputs, _, _ = self.forward_with_cache(image, rois)
        return outputs

    def forward_with_cache(self, image, rois):
        features, bb_cache = backbone_forward(image, self.backbone)
        outputs, head_cache = head_forward(features, rois, self.head, self.config)
        return outputs, bb_cache, head_cache

    def backward(self, bb_cache, head_cache, grad_cls_list, grad_bbox_list):
        """Full parameter gradients given per-RoI output cotangents."""
        grads, grad_features = head_backward(
            head_cache, self.head, self.config, grad_cls_list, grad_bbox_list)
        grads.update(backbone_backward(bb_cache, self.backbone, grad_features))
        return grads
