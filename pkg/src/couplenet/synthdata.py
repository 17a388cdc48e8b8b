"""Deterministic synthetic detection scenes engineered around the two
failure regimes the coupled head targets: solid shapes that get occluded
or truncated (part cues survive, whole-object appearance breaks) and a
hollow "frame" class whose bounding box is mostly background (whole-object
structure is the only reliable cue).

Classes (ids are foreground labels; 0 is background):
  1 square-outline  thin-bordered square, bright edges
  2 disk            filled circle, bright
  3 triangle        filled upward triangle, mid intensity
  4 frame           large hollow rectangle, dark thick border, empty interior
"""

import json
from dataclasses import dataclass, field

import numpy as np

CLASS_NAMES = ("background", "square-outline", "disk", "triangle", "frame")
NUM_FG_CLASSES = 4

BG_INTENSITY = 0.1
CLASS_INTENSITY = {1: 0.9, 2: 0.7, 3: 0.5, 4: 0.3}


@dataclass(frozen=True)
class SceneObject:
    class_id: int
    box: tuple  # visible (clipped) extent, the detection target
    occluders: tuple = ()  # boxes drawn over the object
    truncation: float = 0.0  # fraction of the box pushed outside the image
    full_box: tuple | None = None  # un-truncated extent used for rendering

    @property
    def occluded(self):
        return len(self.occluders) > 0

    @property
    def render_box(self):
        return self.full_box if self.full_box is not None else self.box


@dataclass(frozen=True)
class Scene:
    image_w: int
    image_h: int
    objects: tuple


@dataclass(frozen=True)
class SceneConfig:
    min_image: int = 48
    max_image: int = 96
    min_objects: int = 1
    max_objects: int = 4
    min_size: float = 14.0
    max_size: float = 34.0
    occlusion_prob: float = 0.5
    truncation_prob: float = 0.15
    noise_level: float = 0.02
    frame_scale: float = 1.5  # frames render larger than solid shapes

    def __post_init__(self):
        if not 0 <= self.occlusion_prob <= 1 or not 0 <= self.truncation_prob <= 1:
            raise ValueError("probabilities must lie in [0, 1]")


def generate_scene(rng_seed, config=SceneConfig()):
    rng = np.random.Generator(np.random.Philox(rng_seed))
    w = int(rng.integers(config.min_image, config.max_image + 1))
    h = int(rng.integers(config.min_image, config.max_image + 1))
    n = int(rng.integers(config.min_objects, config.max_objects + 1))
    objects = []
    for _ in range(n):
        class_id = int(rng.integers(1, NUM_FG_CLASSES + 1))
        size = rng.uniform(config.min_size, config.max_size)
        if class_id == 4:
            size = min(size * config.frame_scale, 0.8 * min(w, h))
        truncation = 0.0
        if rng.uniform() < config.truncation_prob:
            truncation = rng.uniform(0.2, 0.6)
        x1 = rng.uniform(0.0, max(w - size, 1.0))
        y1 = rng.uniform(0.0, max(h - size, 1.0))
        if truncation > 0.0:
            # push the box off one border by the truncation fraction
            side = rng.integers(4)
            shift = truncation * size
            if side == 0:
                x1 = -shift
            elif side == 1:
                x1 = w - size + shift
            elif side == 2:
                y1 = -shift
            else:
                y1 = h - size + shift
        box = (x1, y1, x1 + size, y1 + size)
        vx1, vy1 = max(box[0], 0.0), max(box[1], 0.0)
        vx2, vy2 = min(box[2], float(w)), min(box[3], float(h))
        occluders = ()
        if rng.uniform() < config.occlusion_prob and vx2 > vx1 and vy2 > vy1:
            # occluder covers 20-50% of the visible box area
            frac = rng.uniform(0.2, 0.5)
            vw, vh = vx2 - vx1, vy2 - vy1
            ow = vw * np.sqrt(frac) * rng.uniform(0.8, 1.25)
            ow = min(ow, vw)
            oh = frac * vw * vh / ow
            oh = min(oh, vh)
            ox = rng.uniform(vx1, vx2 - ow)
            oy = rng.uniform(vy1, vy2 - oh)
            occluders = ((ox, oy, ox + ow, oy + oh),)
        # the visible (clipped) extent is the detection target; keep the
        # full extent so truncated shapes render cut off, not shrunken
        objects.append(SceneObject(class_id, (vx1, vy1, vx2, vy2), occluders,
                                   truncation, full_box=box))
    return Scene(w, h, tuple(objects))


def _grid(h, w):
    yy, xx = np.mgrid[0:h, 0:w]
    return xx + 0.5, yy + 0.5  # pixel centers


def _draw_object(img, obj, full_box):
    h, w = img.shape
    xx, yy = _grid(h, w)
    x1, y1, x2, y2 = full_box
    cx, cy = 0.5 * (x1 + x2), 0.5 * (y1 + y2)
    size = max(x2 - x1, y2 - y1)
    val = CLASS_INTENSITY[obj.class_id]
    inside = (xx >= x1) & (xx < x2) & (yy >= y1) & (yy < y2)
    if obj.class_id == 1:  # square outline, ~2 px border
        t = max(2.0, 0.08 * size)
        border = inside & ~((xx >= x1 + t) & (xx < x2 - t) & (yy >= y1 + t) & (yy < y2 - t))
        img[border] = val
    elif obj.class_id == 2:  # disk
        r = 0.5 * size
        img[((xx - cx) ** 2 + (yy - cy) ** 2) <= r * r] = val
    elif obj.class_id == 3:  # upward triangle
        frac = np.clip((yy - y1) / max(y2 - y1, 1e-9), 0.0, 1.0)
        half = 0.5 * (x2 - x1) * frac
        img[inside & (np.abs(xx - cx) <= half)] = val
    else:  # frame: thick hollow border, interior left as background
        t = max(3.0, 0.16 * size)
        border = inside & ~((xx >= x1 + t) & (xx < x2 - t) & (yy >= y1 + t) & (yy < y2 - t))
        img[border] = val


def rasterize(scene, noise_level=0.02, rng_seed=0):
    """Render a scene to a (1, 1, H, W) grayscale tensor in [0, 1]."""
    h, w = scene.image_h, scene.image_w
    img = np.full((h, w), BG_INTENSITY)
    xx, yy = _grid(h, w)
    for obj in scene.objects:
        _draw_object(img, obj, obj.render_box)
        for ox1, oy1, ox2, oy2 in obj.occluders:
            occ = (xx >= ox1) & (xx < ox2) & (yy >= oy1) & (yy < oy2)
            img[occ] = BG_INTENSITY + 0.05  # near-background occluder
    if noise_level > 0:
        rng = np.random.Generator(np.random.Philox(rng_seed))
        img = img + rng.normal(0.0, noise_level, size=img.shape)
    return np.clip(img, 0.0, 1.0)[None, None]


@dataclass
class DatasetManifest:
    seed: int
    num_train: int
    num_test: int
    scene_config: SceneConfig
    class_names: tuple = CLASS_NAMES

    def scene_seed(self, split, index):
        base = {"train": 0, "test": 1_000_000}[split]
        return self.seed * 10_000_000 + base + index

    def scene(self, split, index):
        return generate_scene(self.scene_seed(split, index), self.scene_config)

    def image(self, split, index):
        scene = self.scene(split, index)
        return rasterize(scene, self.scene_config.noise_level,
                         rng_seed=self.scene_seed(split, index) + 5_000_000)

    def split_size(self, split):
        return {"train": self.num_train, "test": self.num_test}[split]

    def to_json(self):
        cfg = self.scene_config
        return json.dumps({
            "format_version": 1,
            "seed": self.seed,
            "num_train": self.num_train,
            "num_test": self.num_test,
            "class_names": list(self.class_names),
            "scene_config": {f: getattr(cfg, f) for f in cfg.__dataclass_fields__},
            "scenes": {
                split: [_scene_record(self.scene(split, i))
                        for i in range(self.split_size(split))]
                for split in ("train", "test")
            },
        }, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        if data.get("format_version") != 1:
            raise ValueError(f"unsupported manifest version {data.get('format_version')}")
        return cls(seed=data["seed"], num_train=data["num_train"],
                   num_test=data["num_test"],
                   scene_config=SceneConfig(**data["scene_config"]))


def _scene_record(scene):
    return {
        "image_w": scene.image_w,
        "image_h": scene.image_h,
        "objects": [
            {"class": CLASS_NAMES[o.class_id], "box": list(o.box),
             "occluders": [list(b) for b in o.occluders], "truncation": o.truncation}
            for o in scene.objects
        ],
    }
