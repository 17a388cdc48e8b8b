"""Multi-task SGD training loop with hard-example selection.

Per iteration: draw a training scene at a random scale from the
configured set, jitter proposals off the ground truth, run the head,
keep the B highest-loss RoIs (when hard-example mining is on), and take
one momentum-SGD step. Everything is driven by counter-based generators,
so a (seed, config) pair replays bit-exactly.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .nn import smooth_l1, softmax_cross_entropy
from .proposals import ProposalConfig, assign_targets, generate_proposals


@dataclass(frozen=True)
class TrainConfig:
    lr_schedule: tuple = ((2000, 0.002), (500, 0.0002))  # (steps, lr) phases
    momentum: float = 0.9
    rois_per_image: int = 32  # B, the hard-example budget
    cls_weight: float = 1.0
    bbox_weight: float = 1.0
    ohem_enabled: bool = True
    scales: tuple = (0.75, 1.0, 1.25)
    fg_thresh: float = 0.5
    bg_range: tuple = (0.0, 0.5)
    proposals: ProposalConfig = field(default_factory=ProposalConfig)
    val_every: int = 0  # 0 disables periodic validation

    def __post_init__(self):
        if self.rois_per_image < 1:
            raise ValueError("rois_per_image must be >= 1")
        if any(lr <= 0 for _, lr in self.lr_schedule):
            raise ValueError("learning rates must be positive")

    @property
    def iterations(self):
        return sum(steps for steps, _ in self.lr_schedule)

    def lr_at(self, iteration):
        done = 0
        for steps, lr in self.lr_schedule:
            done += steps
            if iteration < done:
                return lr
        return self.lr_schedule[-1][1]


@dataclass
class LossResult:
    loss: float
    per_roi: np.ndarray  # weighted per-RoI losses (0 for ignored RoIs)
    grad_cls: list  # per-RoI cotangent on cls_scores, or None
    grad_bbox: list  # per-RoI cotangent on bbox_deltas, or None
    cls_loss: float = 0.0  # weighted classification component of `loss`
    bbox_loss: float = 0.0  # weighted regression component of `loss`


def multitask_loss(outputs, targets, cls_weight=1.0, bbox_weight=1.0, selected=None):
    """Mean cross-entropy over non-ignored RoIs plus weighted mean smooth-L1
    over foreground RoIs, restricted to `selected` indices when given."""
    if len(outputs) != len(targets):
        raise ValueError("outputs and targets are misaligned")
    n = len(outputs)
    idx = range(n) if selected is None else selected
    per_roi = np.zeros(n)
    cls_losses, cls_grads = {}, {}
    box_losses, box_grads = {}, {}
    for i in idx:
        t = targets[i]
        if t.is_ignored:
            continue
        loss_c, grad_c = softmax_cross_entropy(outputs[i].cls_scores, t.label)
        cls_losses[i], cls_grads[i] = loss_c, grad_c
        per_roi[i] = cls_weight * loss_c
        if t.is_foreground:
            loss_b, grad_b = smooth_l1(outputs[i].bbox_deltas, t.regression_target)
            box_losses[i], box_grads[i] = loss_b, grad_b
            per_roi[i] += bbox_weight * loss_b

    grad_cls = [None] * n
    grad_bbox = [None] * n
    cls_total = box_total = 0.0
    if cls_losses:
        cls_total = cls_weight * sum(cls_losses.values()) / len(cls_losses)
        for i, g in cls_grads.items():
            grad_cls[i] = (cls_weight / len(cls_losses)) * g
    if box_losses:
        box_total = bbox_weight * sum(box_losses.values()) / len(box_losses)
        for i, g in box_grads.items():
            grad_bbox[i] = (bbox_weight / len(box_losses)) * g
    return LossResult(cls_total + box_total, per_roi, grad_cls, grad_bbox,
                      cls_total, box_total)


def ohem_select(per_roi_losses, b):
    """Indices of the B largest losses, ties broken toward lower index."""
    if b < 1:
        raise ValueError("B must be >= 1")
    losses = np.asarray(per_roi_losses, dtype=float)
    order = np.argsort(-losses, kind="stable")
    return sorted(int(i) for i in order[:b])


def sgd_step(params, grads, lr, momentum, velocity):
    """In-place momentum SGD: v <- momentum*v + g; p <- p - lr*v."""
    for name, p in params.items():
        g = grads[name]
        v = velocity.setdefault(name, np.zeros_like(p))
        v *= momentum
        v += g
        p -= lr * v


def resize_image(image, scale):
    """Nearest-neighbor resize of a (1, C, H, W) tensor by a scale factor."""
    if scale == 1.0:
        return image
    _, _, h, w = image.shape
    nh, nw = max(int(round(h * scale)), 8), max(int(round(w * scale)), 8)
    ys = np.minimum((np.arange(nh) / scale).astype(int), h - 1)
    xs = np.minimum((np.arange(nw) / scale).astype(int), w - 1)
    return image[:, :, ys][:, :, :, xs]


def _scaled_scene_boxes(scene, scale):
    return [tuple(c * scale for c in obj.box) for obj in scene.objects]


class DivergenceError(RuntimeError):
    pass


def run_training(manifest, model, train_cfg, seed, progress=None):
    """Train the model in place; returns the metrics log (list of dicts)."""
    from .evaluate import evaluate_model  # cycle: evaluation uses the model too

    params = model.param_dict()
    velocity = {}
    rng = np.random.Generator(np.random.Philox([seed, 0xC0]))
    log = []
    n_train = manifest.split_size("train")
    for it in range(train_cfg.iterations):
        scene_idx = int(rng.integers(n_train)) if n_train > 1 else 0
        scale = train_cfg.scales[int(rng.integers(len(train_cfg.scales)))]
        scene = manifest.scene("train", scene_idx)
        image = resize_image(manifest.image("train", scene_idx), scale)

        rois = generate_proposals(_scale_scene(scene, scale), train_cfg.proposals,
                                  [seed, 0xA1, it])
        targets = assign_targets(rois, _scale_scene(scene, scale),
                                 train_cfg.fg_thresh, train_cfg.bg_range)

        outputs, bb_cache, head_cache = model.forward_with_cache(image, rois)
        result = multitask_loss(outputs, targets,
                                train_cfg.cls_weight, train_cfg.bbox_weight)
        if not math.isfinite(result.loss):
            raise DivergenceError(f"non-finite loss at iteration {it}")

        if train_cfg.ohem_enabled:
            usable = [i for i, t in enumerate(targets) if not t.is_ignored]
            ranked = ohem_select([result.per_roi[i] for i in usable],
                                 train_cfg.rois_per_image)
            selected = [usable[i] for i in ranked]
            result = multitask_loss(outputs, targets, train_cfg.cls_weight,
                                    train_cfg.bbox_weight, selected=selected)

        grads = model.backward(bb_cache, head_cache, result.grad_cls, result.grad_bbox)
        lr = train_cfg.lr_at(it)
        sgd_step(params, grads, lr, train_cfg.momentum, velocity)

        entry = {"iteration": it, "loss": float(result.loss),
                 "cls_loss": float(result.cls_loss),
                 "bbox_loss": float(result.bbox_loss), "lr": lr}
        if train_cfg.val_every and (it + 1) % train_cfg.val_every == 0:
            entry["val_map"] = evaluate_model(model, manifest, "test",
                                              train_cfg.proposals, seed=seed)["map"]
        log.append(entry)
        if progress is not None:
            progress(entry)
    return log


def _scale_scene(scene, scale):
    if scale == 1.0:
        return scene
    from .synthdata import Scene, SceneObject

    objs = tuple(
        SceneObject(o.class_id, tuple(c * scale for c in o.box),
                    tuple(tuple(c * scale for c in b) for b in o.occluders),
                    o.truncation)
        for o in scene.objects)
    return Scene(int(round(scene.image_w * scale)), int(round(scene.image_h * scale)), objs)
