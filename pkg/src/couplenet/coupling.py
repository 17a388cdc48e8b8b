"""Branch normalization and element-wise coupling of the two head outputs.

Each branch emits a (C+1)-vector of class scores and a 4-vector of box
deltas. Before combination the vectors are normalized (identity, L2, or a
learned per-channel scale + bias standing in for a 1x1 convolution on a
vector) and then coupled element-wise by sum, product, or maximum.
"""

from dataclasses import dataclass, field

import numpy as np

NORMALIZATIONS = ("none", "l2", "learned_scale")
STRATEGIES = ("sum", "prod", "max")

L2_EPS = 1e-12


@dataclass(frozen=True)
class CouplingConfig:
    normalization: str = "learned_scale"
    strategy: str = "sum"
    enable_local: bool = True
    enable_global: bool = True

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown coupling strategy {self.strategy!r}")
        if not (self.enable_local or self.enable_global):
            raise ValueError("at least one branch must be enabled")
        if self.strategy in ("prod", "max") and not (self.enable_local and self.enable_global):
            raise ValueError(f"strategy {self.strategy!r} requires both branches enabled")

    @property
    def both_branches(self):
        return self.enable_local and self.enable_global


@dataclass
class ScaleParams:
    """Learned per-channel scale + bias for each branch, identity at init."""

    local_scale: np.ndarray
    local_bias: np.ndarray
    global_scale: np.ndarray
    global_bias: np.ndarray

    @classmethod
    def identity(cls, length):
        return cls(np.ones(length), np.zeros(length), np.ones(length), np.zeros(length))


def normalize_branch(v, mode, scale=None, bias=None):
    if mode == "none":
        return v.copy()
    if mode == "l2":
        return v / max(np.linalg.norm(v), L2_EPS)
    if mode == "learned_scale":
        if scale is None or bias is None:
            raise ValueError("learned_scale normalization requires scale parameters")
        return scale * v + bias
    raise ValueError(f"unknown normalization {mode!r}")


def normalize_branch_backward(v, mode, grad_out, scale=None):
    """Returns (grad_v, grad_scale, grad_bias); the last two are None unless
    mode is learned_scale."""
    if mode == "none":
        return grad_out.copy(), None, None
    if mode == "l2":
        n = np.linalg.norm(v)
        if n <= L2_EPS:
            return grad_out / L2_EPS, None, None
        y = v / n
        return (grad_out - y * np.dot(y, grad_out)) / n, None, None
    if mode == "learned_scale":
        return scale * grad_out, v * grad_out, grad_out.copy()
    raise ValueError(f"unknown normalization {mode!r}")


def couple(local_v, global_v, strategy):
    if local_v.shape != global_v.shape:
        raise ValueError(f"branch outputs differ in length: {local_v.shape} vs {global_v.shape}")
    if strategy == "sum":
        return local_v + global_v
    if strategy == "prod":
        return local_v * global_v
    if strategy == "max":
        # tie routes to the local branch, both here and in backward
        return np.where(local_v >= global_v, local_v, global_v)
    raise ValueError(f"unknown coupling strategy {strategy!r}")


def couple_backward(local_v, global_v, strategy, upstream_grad):
    if strategy == "sum":
        return upstream_grad.copy(), upstream_grad.copy()
    if strategy == "prod":
        return upstream_grad * global_v, upstream_grad * local_v
    if strategy == "max":
        local_wins = local_v >= global_v
        return (np.where(local_wins, upstream_grad, 0.0),
                np.where(local_wins, 0.0, upstream_grad))
    raise ValueError(f"unknown coupling strategy {strategy!r}")
