"""
Unit tests for scene sampling and dataset assembly.
"""

from pathlib import Path
import sys

import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from spot_rotation.config import preset_settings
from spot_rotation.errors import ConfigError, GenerationError
from spot_rotation.rotation import ParkClass
from spot_rotation.scene import (
    DatasetManifest,
    GenConfig,
    assemble_dataset,
    camera_seed,
    image_seed,
    plan_dataset,
    sample_scene,
    scene_class_histogram,
    train_count,
)


def test_sample_scene_is_deterministic():
    cfg = GenConfig()
    assert sample_scene(cfg, 1234) == sample_scene(cfg, 1234)
    assert sample_scene(cfg, 1234) != sample_scene(cfg, 1235)


def test_scene_constraints():
    """Bikes stay in the spot, keep their spacing and distractors stay out."""
    cfg = GenConfig()
    for seed in range(25):
        scene = sample_scene(cfg, seed)
        lo, hi = cfg.bike_count_range
        assert lo <= len(scene.bikes) <= hi
        assert scene.min_bike_spacing() >= cfg.min_spacing_m
        assert -30.0 <= scene.spot.heading_deg <= 30.0
        for bike in scene.bikes:
            assert scene.spot.contains(*bike.pos_in_spot)
            assert bike.model_id in cfg.model_pool
        for d in scene.distractors:
            u, v = scene.spot.to_spot(d.pose[0], d.pose[1])
            assert not scene.spot.contains(u, v)
        assert scene.ground_texture_id in cfg.texture_pool


def test_spot_frame_round_trip():
    scene = sample_scene(GenConfig(), 7)
    spot = scene.spot
    x, y, _ = spot.to_world(1.5, -0.75)
    u, v = spot.to_spot(x, y)
    assert abs(u - 1.5) < 1e-12
    assert abs(v + 0.75) < 1e-12


def test_histogram_counts_every_bike():
    scene = sample_scene(GenConfig(), 99)
    histogram = scene_class_histogram(scene)
    assert set(histogram) == set(ParkClass)
    assert sum(histogram.values()) == len(scene.bikes)


def test_generation_error_when_spot_too_small():
    cfg = GenConfig(bike_count_range=(10, 10), spot_length_m=1.0, spot_width_m=1.0, min_spacing_m=0.8)
    with pytest.raises(GenerationError):
        sample_scene(cfg, 0)


def test_gen_config_validation():
    with pytest.raises(ConfigError):
        GenConfig(class_mix=(0.5, 0.5, 0.5))
    with pytest.raises(ConfigError):
        GenConfig(bike_count_range=(5, 3))
    with pytest.raises(ConfigError):
        GenConfig(camera_mode="drone")


def test_train_count():
    """Split sizes round half up."""
    assert train_count(10, 0.9) == 9
    assert train_count(500, 0.9) == 450
    assert train_count(4441, 0.9034) == 4012
    assert train_count(4441, 0.903) == 4010


def test_plan_dataset():
    plan = plan_dataset(GenConfig(), 10, master_seed=42)
    assert plan.split_sizes() == (9, 1)
    assert [e.index for e in plan.entries] == list(range(10))
    assert plan.entries[3].image_path == "images/000003.png"
    assert plan.entries[3].label_path == "labels/000003.txt"
    assert plan.entries[3].scene_path == "scenes/000003.json"
    assert plan.entries[3].seed == image_seed(42, 3)
    assert len({e.seed for e in plan.entries}) == 10

    again = plan_dataset(GenConfig(), 10, master_seed=42)
    assert again.to_jsonl() == plan.to_jsonl()
    assert DatasetManifest.from_jsonl(plan.to_jsonl(), 42).entries == plan.entries


def test_seeds_independent_of_order():
    assert image_seed(5, 17) == image_seed(5, 17)
    assert image_seed(5, 17) != image_seed(6, 17)
    assert camera_seed(image_seed(5, 17)) != image_seed(5, 17)


def test_plan_rejects_empty_dataset():
    with pytest.raises(ConfigError):
        plan_dataset(GenConfig(), 0, master_seed=1)


def test_challenging_dataset_structure():
    """500 challenging scenes: 450/50 split, 3..20 bikes, class mix near 42/35/23."""
    cfg = GenConfig.from_settings(preset_settings("challenging"))
    assert cfg.bike_count_range == (3, 20)

    dataset = assemble_dataset(cfg, 500, master_seed=2024)
    assert dataset.split_sizes() == (450, 50)
    assert len(dataset.scenes) == 500

    totals = {cls: 0 for cls in ParkClass}
    for scene in dataset.scenes:
        assert 3 <= len(scene.bikes) <= 20
        for cls, n in scene_class_histogram(scene, cfg.thresholds).items():
            totals[cls] += n

    n_bikes = sum(totals.values())
    assert n_bikes >= 1500
    for cls, expected in zip(ParkClass, (0.42, 0.35, 0.23)):
        assert abs(totals[cls] / n_bikes - expected) <= 0.03, (cls, totals[cls] / n_bikes)


if __name__ == '__main__':
    print("Testing scene sampling...\n")
    test_sample_scene_is_deterministic()
    test_scene_constraints()
    test_spot_frame_round_trip()
    test_histogram_counts_every_bike()
    test_train_count()
    test_plan_dataset()
    test_seeds_independent_of_order()
    test_challenging_dataset_structure()
    print("✅ All scene tests passed!")
