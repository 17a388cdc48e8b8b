"""Zero-dependency binary PPM/PGM output for rendered scenes and
detection overlays."""

import numpy as np

CLASS_COLORS = {
    1: (255, 80, 80),
    2: (80, 200, 80),
    3: (80, 120, 255),
    4: (255, 200, 60),
}


def write_pgm(path, image):
    """Write a 2-D array in [0, 1] as binary PGM (P5)."""
    img = np.clip(np.asarray(image) * 255.0, 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(img.tobytes())


def write_ppm(path, rgb):
    """Write an (H, W, 3) uint8 array as binary PPM (P6)."""
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(rgb.tobytes())


def overlay_detections(image, detections, thickness=1):
    """Grayscale [0, 1] image + detections -> RGB uint8 with colored boxes."""
    gray = np.clip(np.asarray(image) * 255.0, 0, 255).astype(np.uint8)
    rgb = np.stack([gray] * 3, axis=-1)
    h, w = gray.shape
    for det in detections:
        color = CLASS_COLORS.get(det.class_id, (255, 255, 255))
        x1, y1, x2, y2 = (int(round(v)) for v in det.box)
        x1, x2 = np.clip([x1, x2], 0, w - 1)
        y1, y2 = np.clip([y1, y2], 0, h - 1)
        for t in range(thickness):
            xa, xb = min(x1 + t, w - 1), max(x2 - t, 0)
            ya, yb = min(y1 + t, h - 1), max(y2 - t, 0)
            rgb[ya, xa:xb + 1] = color
            rgb[yb, xa:xb + 1] = color
            rgb[ya:yb + 1, xa] = color
            rgb[ya:yb + 1, xb] = color
    return rgb
