"""RPN stand-in: proposals come from jittering ground-truth boxes plus
uniform random negatives, then get classification/regression targets by
IoU matching. Deterministic per seed via a counter-based generator."""

from dataclasses import dataclass

import numpy as np

from .boxes import compute_iou, encode_targets, roi_to_box
from .roi import RoI

MIN_PROPOSAL_EXTENT = 6.0


@dataclass(frozen=True)
class ProposalConfig:
    jitter_scale: float = 0.05
    positives_per_gt: int = 6
    negatives_per_image: int = 8
    test_proposals: int = 40

    def __post_init__(self):
        if self.jitter_scale < 0:
            raise ValueError("jitter_scale must be >= 0")
        if min(self.positives_per_gt, self.negatives_per_image, self.test_proposals) < 0:
            raise ValueError("proposal counts must be >= 0")


def _clip_box(x1, y1, x2, y2, w, h):
    x1, x2 = np.clip([x1, x2], 0.0, w)
    y1, y2 = np.clip([y1, y2], 0.0, h)
    # enforce a minimum extent so downstream pooling always sees pixels
    if x2 - x1 < MIN_PROPOSAL_EXTENT:
        cx = np.clip(0.5 * (x1 + x2), MIN_PROPOSAL_EXTENT / 2, w - MIN_PROPOSAL_EXTENT / 2)
        x1, x2 = cx - MIN_PROPOSAL_EXTENT / 2, cx + MIN_PROPOSAL_EXTENT / 2
    if y2 - y1 < MIN_PROPOSAL_EXTENT:
        cy = np.clip(0.5 * (y1 + y2), MIN_PROPOSAL_EXTENT / 2, h - MIN_PROPOSAL_EXTENT / 2)
        y1, y2 = cy - MIN_PROPOSAL_EXTENT / 2, cy + MIN_PROPOSAL_EXTENT / 2
    return float(x1), float(y1), float(x2), float(y2)


def _jittered_copy(rng, box, jitter_scale, w, h):
    x1, y1, x2, y2 = box
    bw, bh = x2 - x1, y2 - y1
    noise = rng.normal(0.0, jitter_scale, size=4)
    return _clip_box(x1 + noise[0] * bw, y1 + noise[1] * bh,
                     x2 + noise[2] * bw, y2 + noise[3] * bh, w, h)


def _random_box(rng, w, h):
    bw = rng.uniform(MIN_PROPOSAL_EXTENT, 0.6 * w)
    bh = rng.uniform(MIN_PROPOSAL_EXTENT, 0.6 * h)
    x1 = rng.uniform(0.0, w - bw)
    y1 = rng.uniform(0.0, h - bh)
    return _clip_box(x1, y1, x1 + bw, y1 + bh, w, h)


def generate_proposals(scene, config, rng_seed):
    """Training proposals: jittered positives per GT plus random negatives."""
    rng = np.random.Generator(np.random.Philox(rng_seed))
    w, h = scene.image_w, scene.image_h
    rois = []
    for obj in scene.objects:
        for _ in range(config.positives_per_gt):
            rois.append(RoI(0, *_jittered_copy(rng, obj.box, config.jitter_scale, w, h)))
    for _ in range(config.negatives_per_image):
        rois.append(RoI(0, *_random_box(rng, w, h)))
    return rois


def generate_test_proposals(scene, config, rng_seed):
    """Test-time proposals: config.test_proposals boxes mixing wider GT
    jitter with random boxes (the desk-scale analogue of taking the RPN's
    top proposals)."""
    rng = np.random.Generator(np.random.Philox(rng_seed))
    w, h = scene.image_w, scene.image_h
    n = config.test_proposals
    rois = []
    if scene.objects:
        per_gt = max(1, (2 * n) // (3 * len(scene.objects)))
        for obj in scene.objects:
            for _ in range(per_gt):
                jitter = rng.uniform(0.0, 3 * max(config.jitter_scale, 0.02))
                rois.append(RoI(0, *_jittered_copy(rng, obj.box, jitter, w, h)))
    while len(rois) < n:
        rois.append(RoI(0, *_random_box(rng, w, h)))
    return rois[:n]


@dataclass
class RoITarget:
    label: int  # 0 = background, -1 = ignored
    regression_target: np.ndarray | None  # deltas, foreground only
    matched_gt: int | None

    IGNORED = -1

    @property
    def is_foreground(self):
        return self.label > 0

    @property
    def is_ignored(self):
        return self.label == RoITarget.IGNORED


def assign_targets(rois, scene, fg_thresh=0.5, bg_range=(0.1, 0.5)):
    """Label each RoI foreground / background / ignored by max IoU."""
    lo, hi = bg_range
    if not (0 <= lo < hi <= fg_thresh <= 1):
        raise ValueError(f"inconsistent thresholds fg={fg_thresh}, bg={bg_range}")
    gt_boxes = [obj.box for obj in scene.objects]
    targets = []
    for roi in rois:
        box = roi_to_box(roi)
        ious = [compute_iou(box, g) for g in gt_boxes]
        best = int(np.argmax(ious)) if ious else None
        best_iou = ious[best] if ious else 0.0
        if best is not None and best_iou >= fg_thresh:
            targets.append(RoITarget(scene.objects[best].class_id,
                                     encode_targets(roi, gt_boxes[best]), best))
        elif lo <= best_iou < hi:
            targets.append(RoITarget(0, None, None))
        else:
            targets.append(RoITarget(RoITarget.IGNORED, None, None))
    return targets
