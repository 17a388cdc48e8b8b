"""Box parameterization and overlap: center/size delta encoding for the
class-agnostic regression output, its exact inverse, and IoU."""

import numpy as np

from .roi import RoI


def encode_targets(roi, gt_box):
    """Deltas (dx, dy, dw, dh) mapping the RoI onto gt_box (x1, y1, x2, y2)."""
    gx1, gy1, gx2, gy2 = gt_box
    gw, gh = gx2 - gx1, gy2 - gy1
    if gw <= 0 or gh <= 0:
        raise ValueError(f"ground-truth box has non-positive extent: {gt_box}")
    rw = max(roi.width, 1e-6)
    rh = max(roi.height, 1e-6)
    rcx, rcy = roi.center
    gcx, gcy = 0.5 * (gx1 + gx2), 0.5 * (gy1 + gy2)
    return np.array([
        (gcx - rcx) / rw,
        (gcy - rcy) / rh,
        np.log(gw / rw),
        np.log(gh / rh),
    ])


def decode_boxes(roi, deltas, image_w=None, image_h=None):
    """Inverse of encode_targets; optionally clips to the image."""
    rw = max(roi.width, 1e-6)
    rh = max(roi.height, 1e-6)
    rcx, rcy = roi.center
    dx, dy, dw, dh = deltas
    cx = rcx + dx * rw
    cy = rcy + dy * rh
    w = rw * np.exp(dw)
    h = rh * np.exp(dh)
    x1, y1, x2, y2 = cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h
    if image_w is not None:
        x1, x2 = np.clip(x1, 0, image_w), np.clip(x2, 0, image_w)
    if image_h is not None:
        y1, y2 = np.clip(y1, 0, image_h), np.clip(y2, 0, image_h)
    return np.array([x1, y1, x2, y2])


def compute_iou(a, b):
    """Intersection over union of two (x1, y1, x2, y2) boxes; 0 on zero union."""
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = ((a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter)
    return inter / union if union > 0 else 0.0


def roi_to_box(roi):
    return np.array([roi.x1, roi.y1, roi.x2, roi.y2])


def box_to_roi(box, batch_index=0):
    return RoI(batch_index, float(box[0]), float(box[1]), float(box[2]), float(box[3]))
