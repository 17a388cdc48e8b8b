"""Detection evaluation: scoring, box decoding, greedy NMS, and
average precision with the all-points interpolated envelope (an 11-point
variant is available behind a flag)."""

from dataclasses import dataclass

import numpy as np

from .boxes import compute_iou, decode_boxes
from .nn import softmax
from .proposals import generate_test_proposals

COCO_THRESHOLDS = tuple(np.arange(0.5, 0.96, 0.05))


@dataclass(frozen=True)
class Detection:
    class_id: int  # foreground class
    score: float
    box: tuple  # (x1, y1, x2, y2)
    image_id: int = 0


def nms(detections, iou_thresh):
    """Greedy suppression of one class's detections.

    Keeps the highest-score detection, drops others overlapping it with
    IoU > iou_thresh, repeats. Score ties break toward the earlier entry.
    """
    if not 0 < iou_thresh < 1:
        raise ValueError(f"iou_thresh must lie in (0, 1), got {iou_thresh}")
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    kept = []
    suppressed = [False] * len(detections)
    for i in order:
        if suppressed[i]:
            continue
        kept.append(detections[i])
        for j in order:
            if not suppressed[j] and j != i and \
                    compute_iou(detections[i].box, detections[j].box) > iou_thresh:
                suppressed[j] = True
    return kept


def nms_per_class(detections, iou_thresh):
    """Apply nms independently per class; preserves class grouping order."""
    out = []
    for c in sorted({d.class_id for d in detections}):
        out.extend(nms([d for d in detections if d.class_id == c], iou_thresh))
    return out


def average_precision(detections, ground_truths, iou_thresh, eleven_point=False):
    """AP for one class.

    detections: list of Detection (any order; sorted internally, stable).
    ground_truths: dict image_id -> list of GT boxes for this class.
    Greedy matching in score order against not-yet-matched GT with
    IoU >= iou_thresh.
    """
    n_gt = sum(len(v) for v in ground_truths.values())
    if n_gt == 0:
        return 0.0
    if not detections:
        return 0.0
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    matched = {img: [False] * len(boxes) for img, boxes in ground_truths.items()}
    tp = np.zeros(len(order))
    for rank, i in enumerate(order):
        det = detections[i]
        boxes = ground_truths.get(det.image_id, [])
        best_iou, best_j = 0.0, -1
        for j, g in enumerate(boxes):
            iou = compute_iou(det.box, g)
            if iou >= iou_thresh and iou > best_iou and not matched[det.image_id][j]:
                best_iou, best_j = iou, j
        if best_j >= 0:
            matched[det.image_id][best_j] = True
            tp[rank] = 1.0
    cum_tp = np.cumsum(tp)
    recall = cum_tp / n_gt
    precision = cum_tp / np.arange(1, len(order) + 1)
    if eleven_point:
        return float(np.mean([
            precision[recall >= r].max() if np.any(recall >= r) else 0.0
            for r in np.linspace(0.0, 1.0, 11)]))
    # all-points: area under the monotone precision envelope
    mrec = np.concatenate([[0.0], recall, [recall[-1]]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    changes = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[changes + 1] - mrec[changes]) * mpre[changes + 1]))


def mean_ap(detections, ground_truths, iou_thresh, num_classes, eleven_point=False):
    """Mean AP over classes with at least one ground truth.

    ground_truths: dict (image_id, class_id) -> list of boxes, or nested
    per-class dicts via `group_ground_truths`.
    """
    aps = {}
    for c in range(1, num_classes + 1):
        gt_c = {img: boxes for (img, cls), boxes in ground_truths.items()
                if cls == c and boxes}
        if not gt_c:
            continue
        det_c = [d for d in detections if d.class_id == c]
        aps[c] = average_precision(det_c, gt_c, iou_thresh, eleven_point)
    return (float(np.mean(list(aps.values()))) if aps else 0.0), aps


def coco_map(detections, ground_truths, num_classes):
    """mAP averaged over IoU thresholds 0.5:0.05:0.95."""
    vals = [mean_ap(detections, ground_truths, t, num_classes)[0]
            for t in COCO_THRESHOLDS]
    return float(np.mean(vals))


def detect_scene(model, image, scene, proposal_cfg, seed, image_id=0,
                 score_thresh=0.05, nms_thresh=0.3):
    """Full test-time pipeline for one scene: proposals, forward, softmax,
    box decoding, per-class NMS, score filtering."""
    rois = generate_test_proposals(scene, proposal_cfg, [seed, 0xE7, image_id])
    outputs = model.forward(image, rois)
    dets = []
    for roi, out in zip(rois, outputs):
        probs = softmax(out.cls_scores)
        box = decode_boxes(roi, out.bbox_deltas, scene.image_w, scene.image_h)
        for c in range(1, probs.shape[0]):
            if probs[c] >= score_thresh:
                dets.append(Detection(c, float(probs[c]), tuple(box), image_id))
    return nms_per_class(dets, nms_thresh)


def evaluate_model(model, manifest, split, proposal_cfg, seed=0,
                   iou_thresh=0.5, score_thresh=0.05, nms_thresh=0.3):
    """Detect every scene in a split and compute mAP plus per-class AP."""
    detections = []
    ground_truths = {}
    for i in range(manifest.split_size(split)):
        scene = manifest.scene(split, i)
        image = manifest.image(split, i)
        detections.extend(detect_scene(model, image, scene, proposal_cfg,
                                       seed, image_id=i,
                                       score_thresh=score_thresh,
                                       nms_thresh=nms_thresh))
        for obj in scene.objects:
            ground_truths.setdefault((i, obj.class_id), []).append(obj.box)
    m, aps = mean_ap(detections, ground_truths, iou_thresh,
                     model.config.num_classes)
    return {"map": m, "per_class_ap": aps,
            "num_detections": len(detections)}
