import numpy as np
import pytest

from couplenet.synthdata import (BG_INTENSITY, CLASS_INTENSITY, DatasetManifest,
                                 NUM_FG_CLASSES, Scene, SceneConfig, SceneObject,
                                 generate_scene, rasterize)


class TestGenerateScene:
    def test_no_occlusion_no_truncation(self):
        cfg = SceneConfig(occlusion_prob=0.0, truncation_prob=0.0)
        for seed in range(50):
            scene = generate_scene(seed, cfg)
            for obj in scene.objects:
                assert not obj.occluded and obj.truncation == 0.0

    def test_deterministic(self):
        cfg = SceneConfig()
        assert generate_scene(123, cfg) == generate_scene(123, cfg)
        assert generate_scene(123, cfg) != generate_scene(124, cfg)

    def test_boxes_intersect_image(self):
        for seed in range(100):
            scene = generate_scene(seed, SceneConfig(truncation_prob=0.5))
            for obj in scene.objects:
                x1, y1, x2, y2 = obj.box
                assert x2 > 0 and y2 > 0 and x1 < scene.image_w and y1 < scene.image_h
                assert 0.0 <= obj.truncation <= 0.6

    def test_occlusion_rate_matches_probability(self):
        cfg = SceneConfig(occlusion_prob=0.4)
        occluded = total = 0
        for seed in range(1000):
            for obj in generate_scene(seed, cfg).objects:
                total += 1
                occluded += obj.occluded
        assert abs(occluded / total - 0.4) < 0.03


class TestRasterize:
    def test_empty_scene_constant_background(self):
        img = rasterize(Scene(48, 48, ()), noise_level=0.0)
        assert img.shape == (1, 1, 48, 48)
        assert np.all(img == BG_INTENSITY)

    def test_disk_area(self):
        box = (10.0, 10.0, 40.0, 40.0)
        scene = Scene(64, 64, (SceneObject(2, box),))
        img = rasterize(scene, noise_level=0.0)
        count = np.sum(img[0, 0] == CLASS_INTENSITY[2])
        area = np.pi * 15.0 ** 2
        assert abs(count - area) / area < 0.05

    def test_frame_interior_is_background(self):
        box = (8.0, 8.0, 48.0, 48.0)
        scene = Scene(64, 64, (SceneObject(4, box),))
        img = rasterize(scene, noise_level=0.0)
        assert np.all(img[0, 0, 24:32, 24:32] == BG_INTENSITY)
        assert np.any(img[0, 0] == CLASS_INTENSITY[4])

    def test_values_in_unit_interval(self):
        for seed in range(20):
            scene = generate_scene(seed, SceneConfig())
            img = rasterize(scene, noise_level=0.05, rng_seed=seed)
            assert img.min() >= 0.0 and img.max() <= 1.0

    def test_bit_identical_per_seed(self):
        scene = generate_scene(5, SceneConfig())
        a = rasterize(scene, 0.02, rng_seed=9)
        b = rasterize(scene, 0.02, rng_seed=9)
        assert np.array_equal(a, b)


class TestManifest:
    def test_regeneration_is_bit_exact(self):
        m = DatasetManifest(seed=3, num_train=5, num_test=4, scene_config=SceneConfig())
        m2 = DatasetManifest.from_json(m.to_json())
        assert m.to_json() == m2.to_json()
        for split in ("train", "test"):
            for i in range(m.split_size(split)):
                assert m.scene(split, i) == m2.scene(split, i)
                assert np.array_equal(m.image(split, i), m2.image(split, i))

    def test_unsupported_version_rejected(self):
        with pytest.raises(ValueError):
            DatasetManifest.from_json('{"format_version": 99}')

    def test_train_test_seeds_disjoint(self):
        m = DatasetManifest(seed=1, num_train=10, num_test=10, scene_config=SceneConfig())
        train = {m.scene_seed("train", i) for i in range(10)}
        test = {m.scene_seed("test", i) for i in range(10)}
        assert not train & test


def test_class_signatures_separable():
    """A pixel-histogram nearest-prototype classifier on un-occluded crops
    must clear 95%: the sanity floor that the detection task is learnable."""
    cfg = SceneConfig(occlusion_prob=0.0, truncation_prob=0.0,
                      min_objects=1, max_objects=1, noise_level=0.02)
    bins = np.linspace(0.0, 1.0, 21)

    def histogram(crop):
        hist, _ = np.histogram(crop, bins=bins, density=True)
        return hist

    crops = []
    for seed in range(400):
        scene = generate_scene(seed, cfg)
        img = rasterize(scene, cfg.noise_level, rng_seed=seed)
        obj = scene.objects[0]
        x1, y1, x2, y2 = (int(round(v)) for v in obj.box)
        crop = img[0, 0, max(y1, 0):y2, max(x1, 0):x2]
        if crop.size:
            crops.append((obj.class_id, histogram(crop)))

    # leave-one-out nearest prototype on class-mean histograms
    classes = sorted({c for c, _ in crops})
    correct = 0
    for i, (c, h) in enumerate(crops):
        protos = {}
        for cl in classes:
            rest = [hh for j, (cc, hh) in enumerate(crops) if cc == cl and j != i]
            protos[cl] = np.mean(rest, axis=0)
        pred = min(protos, key=lambda cl: np.sum((protos[cl] - h) ** 2))
        correct += pred == c
    assert correct / len(crops) >= 0.95
