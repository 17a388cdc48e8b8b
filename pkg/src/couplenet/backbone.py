"""Toy convolutional feature extractor: three 3x3 conv + ReLU stages with
an overall stride of 4. Stands in for the deep pretrained backbone the
detection head normally rides on; everything under test lives downstream."""

from dataclasses import dataclass

import numpy as np

from .nn import ConvParams, conv2d, conv2d_backward, init_conv, relu, relu_backward

STRIDE = 4
SPATIAL_SCALE = 1.0 / STRIDE


@dataclass
class BackboneParams:
    conv1: ConvParams  # stride 2
    conv2: ConvParams  # stride 2
    conv3: ConvParams  # stride 1

    @classmethod
    def init(cls, rng, in_channels=1, c1=12, c2=24, c3=32):
        return cls(
            conv1=init_conv(rng, in_channels, c1, 3, stride=2, padding=1),
            conv2=init_conv(rng, c1, c2, 3, stride=2, padding=1),
            conv3=init_conv(rng, c2, c3, 3, stride=1, padding=1),
        )

    @property
    def out_channels(self):
        return self.conv3.weight.shape[0]


def backbone_forward(image, params):
    """Returns (features, cache) for image (1, C, H, W)."""
    pre1 = conv2d(image, params.conv1)
    act1 = relu(pre1)
    pre2 = conv2d(act1, params.conv2)
    act2 = relu(pre2)
    pre3 = conv2d(act2, params.conv3)
    act3 = relu(pre3)
    return act3, (image, pre1, act1, pre2, act2, pre3)


def backbone_backward(cache, params, grad_features):
    """Gradients of all backbone parameters given d(loss)/d(features)."""
    image, pre1, act1, pre2, act2, pre3 = cache
    g = relu_backward(pre3, grad_features)
    g, gw3, gb3 = conv2d_backward(act2, params.conv3, g)
    g = relu_backward(pre2, g)
    g, gw2, gb2 = conv2d_backward(act1, params.conv2, g)
    g = relu_backward(pre1, g)
    _, gw1, gb1 = conv2d_backward(image, params.conv1, g)
    return {
        "backbone.conv1.weight": gw1, "backbone.conv1.bias": gb1,
        "backbone.conv2.weight": gw2, "backbone.conv2.bias": gb2,
        "backbone.conv3.weight": gw3, "backbone.conv3.bias": gb3,
    }
