"""
Randomized parametric parking scenes and dataset assembly.
Every sample is a pure function of (GenConfig, seed).
"""

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import (
    DISTRACTOR_RETRIES,
    DISTRACTOR_RING_M,
    FALLEN_JITTER_DEG,
    PLACEMENT_RETRIES,
    STANDING_LEAN_JITTER_DEG,
)
from .errors import ConfigError, GenerationError
from .rotation import Angle, ClassThresholds, ParkClass, RotationPair, derive_class

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1

Vec3 = Tuple[float, float, float]
RGB = Tuple[int, int, int]

CAMERA_MODES = ("free", "vertical_free", "restricted")
DISTRACTOR_KINDS = ("vehicle", "pedestrian", "tree", "pole", "bin")

# (min, max) extents in meters per distractor kind: length, width, height
DISTRACTOR_SIZES: Dict[str, Tuple[Vec3, Vec3]] = {
    "vehicle": ((3.8, 1.6, 1.4), (4.8, 1.9, 1.9)),
    "pedestrian": ((0.3, 0.4, 1.2), (0.5, 0.6, 1.95)),
    "tree": ((1.5, 1.5, 3.0), (3.5, 3.5, 7.0)),
    "pole": ((0.12, 0.12, 2.5), (0.25, 0.25, 5.0)),
    "bin": ((0.5, 0.5, 0.8), (0.8, 0.8, 1.2)),
}

DISTRACTOR_COLORS: Dict[str, Tuple[RGB, ...]] = {
    "vehicle": ((180, 20, 20), (30, 60, 140), (200, 200, 205), (25, 25, 25), (90, 90, 95)),
    "pedestrian": ((60, 60, 160), (160, 60, 60), (50, 120, 50), (200, 170, 120)),
    "tree": ((40, 110, 40), (60, 130, 50), (30, 90, 35)),
    "pole": ((110, 110, 115), (60, 60, 60)),
    "bin": ((30, 90, 40), (70, 70, 70), (20, 60, 140)),
}


@dataclass(frozen=True)
class SpotFrame:
    """Parking spot reference frame: origin, heading about world z, extent."""
    origin: Vec3
    heading_deg: float
    length_m: float
    width_m: float

    def __post_init__(self):
        if self.length_m <= 0 or self.width_m <= 0:
            raise ValueError(f"spot extent must be positive, got {self.length_m} x {self.width_m}")
        object.__setattr__(self, "origin", tuple(float(c) for c in self.origin))
        object.__setattr__(self, "heading_deg", Angle(self.heading_deg).signed_deg)

    def contains(self, u: float, v: float) -> bool:
        """True when spot-plane coordinates lie inside the rectangle."""
        return abs(u) <= self.length_m / 2 and abs(v) <= self.width_m / 2

    def to_world(self, u: float, v: float) -> Vec3:
        """Spot-plane (u, v) to world coordinates on the ground."""
        h = math.radians(self.heading_deg)
        c, s = math.cos(h), math.sin(h)
        ox, oy, oz = self.origin
        return (ox + c * u - s * v, oy + s * u + c * v, oz)

    def to_spot(self, x: float, y: float) -> Tuple[float, float]:
        """World ground coordinates to spot-plane (u, v)."""
        h = math.radians(self.heading_deg)
        c, s = math.cos(h), math.sin(h)
        dx, dy = x - self.origin[0], y - self.origin[1]
        return (c * dx + s * dy, -s * dx + c * dy)


@dataclass(frozen=True)
class BikeInstance:
    """One bike placed in the spot with a spot-relative rotation."""
    model_id: int
    pos_in_spot: Tuple[float, float]
    rot: RotationPair
    scale: float
    color: RGB

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"bike scale must be positive, got {self.scale}")
        object.__setattr__(self, "pos_in_spot", tuple(float(c) for c in self.pos_in_spot))
        object.__setattr__(self, "color", tuple(int(c) for c in self.color))


@dataclass(frozen=True)
class Distractor:
    """Non-bike object placed around the spot. pose = (x, y, heading_deg)."""
    kind: str
    pose: Vec3
    size: Vec3
    color: RGB

    def __post_init__(self):
        if self.kind not in DISTRACTOR_KINDS:
            raise ValueError(f"unknown distractor kind '{self.kind}'")
        object.__setattr__(self, "pose", tuple(float(c) for c in self.pose))
        object.__setattr__(self, "size", tuple(float(c) for c in self.size))
        object.__setattr__(self, "color", tuple(int(c) for c in self.color))


@dataclass(frozen=True)
class Light:
    azimuth_deg: float
    elevation_deg: float
    intensity: float

    def direction(self) -> Vec3:
        """Unit vector pointing from the scene toward the light."""
        az = math.radians(self.azimuth_deg)
        el = math.radians(self.elevation_deg)
        return (math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el))


@dataclass(frozen=True)
class Scene:
    """Full parametric description of one generated parking scene."""
    spot: SpotFrame
    bikes: Tuple[BikeInstance, ...]
    distractors: Tuple[Distractor, ...]
    light: Light
    ground_texture_id: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "bikes", tuple(self.bikes))
        object.__setattr__(self, "distractors", tuple(self.distractors))
        for i, bike in enumerate(self.bikes):
            if not self.spot.contains(*bike.pos_in_spot):
                raise ValueError(f"bike {i} at {bike.pos_in_spot} lies outside the spot")

    def min_bike_spacing(self) -> float:
        """Smallest pairwise center distance (inf for fewer than two bikes)."""
        best = math.inf
        for i in range(len(self.bikes)):
            for j in range(i + 1, len(self.bikes)):
                (u1, v1), (u2, v2) = self.bikes[i].pos_in_spot, self.bikes[j].pos_in_spot
                best = min(best, math.hypot(u1 - u2, v1 - v2))
        return best


def _check_range(name: str, rng: Sequence[float]) -> Tuple[float, float]:
    lo, hi = rng
    if hi < lo:
        raise ConfigError(f"{name} is empty: [{lo}, {hi}]")
    return lo, hi


@dataclass(frozen=True)
class CameraRanges:
    """Camera offsets relative to the spot center, per axis (x lateral, y depth, z up)."""
    x_range: Tuple[float, float] = (-6.0, 6.0)
    y_range: Tuple[float, float] = (-16.0, -7.0)
    z_range: Tuple[float, float] = (2.5, 9.0)
    restricted_pose: Vec3 = (0.0, -11.0, 6.0)
    fov_deg: float = 60.0

    def __post_init__(self):
        _check_range("camera_x_range", self.x_range)
        _check_range("camera_y_range", self.y_range)
        lo, _ = _check_range("camera_z_range", self.z_range)
        if lo <= 0:
            raise ConfigError(f"camera_z_range must stay above ground, got {self.z_range}")
        if self.restricted_pose[2] <= 0:
            raise ConfigError("restricted_pose must be above ground")
        if not (20.0 < self.fov_deg < 120.0):
            raise ConfigError(f"fov_deg must lie in (20, 120), got {self.fov_deg}")


@dataclass(frozen=True)
class GenConfig:
    """Scene generation settings (one dataset preset plus overrides)."""
    bike_count_range: Tuple[int, int] = (3, 15)
    class_mix: Tuple[float, float, float] = (0.42, 0.35, 0.23)
    camera_mode: str = "free"
    split_ratio: float = 0.9
    min_spacing_m: float = 0.8
    thresholds: ClassThresholds = ClassThresholds()
    spot_length_m: float = 12.0
    spot_width_m: float = 4.0
    spot_heading_range: Tuple[float, float] = (-30.0, 30.0)
    distractor_count_range: Tuple[int, int] = (2, 8)
    model_pool: Tuple[int, ...] = (0, 1, 2, 3)
    palette: Tuple[RGB, ...] = ((200, 30, 30), (30, 30, 30), (230, 230, 230), (20, 80, 200))
    texture_pool: Tuple[int, ...] = (0, 1, 2, 3, 4, 5)
    lean_target: str = "continuous"
    camera: CameraRanges = field(default_factory=CameraRanges)

    def __post_init__(self):
        lo, hi = self.bike_count_range
        if lo < 1 or hi < lo:
            raise ConfigError(f"bike_count_range must satisfy 1 <= min <= max, got {self.bike_count_range}")
        dlo, dhi = self.distractor_count_range
        if dlo < 0 or dhi < dlo:
            raise ConfigError(f"distractor_count_range invalid: {self.distractor_count_range}")
        if len(self.class_mix) != 3 or any(p < 0 for p in self.class_mix):
            raise ConfigError(f"class_mix needs three nonnegative entries, got {self.class_mix}")
        if abs(sum(self.class_mix) - 1.0) > 1e-9:
            raise ConfigError(f"class_mix must sum to 1, got {sum(self.class_mix)}")
        if self.camera_mode not in CAMERA_MODES:
            raise ConfigError(f"camera_mode must be one of {CAMERA_MODES}, got {self.camera_mode}")
        if not (0.0 < self.split_ratio < 1.0):
            raise ConfigError(f"split_ratio must lie in (0, 1), got {self.split_ratio}")
        if self.min_spacing_m < 0:
            raise ConfigError("min_spacing_m must be nonnegative")
        if self.spot_length_m <= 0 or self.spot_width_m <= 0:
            raise ConfigError("spot extent must be positive")
        _check_range("spot_heading_range", self.spot_heading_range)
        if not self.model_pool or not self.palette or not self.texture_pool:
            raise ConfigError("model, palette and texture pools must be nonempty")
        if self.lean_target not in ("continuous", "three_state"):
            raise ConfigError(f"lean_target must be continuous or three_state, got {self.lean_target}")

    @classmethod
    def from_settings(cls, settings: Dict[str, Any]) -> "GenConfig":
        """Build from resolved config settings (see config.resolve_settings)."""
        try:
            thresholds = ClassThresholds(settings["theta_fallen"], settings["theta_rotated"])
        except ValueError as e:
            raise ConfigError(str(e)) from e
        camera = CameraRanges(
            x_range=tuple(settings["camera_x_range"]),
            y_range=tuple(settings["camera_y_range"]),
            z_range=tuple(settings["camera_z_range"]),
            restricted_pose=tuple(settings["restricted_pose"]),
            fov_deg=settings["fov_deg"],
        )
        return cls(
            bike_count_range=tuple(settings["bike_count_range"]),
            class_mix=tuple(settings["class_mix"]),
            camera_mode=settings["camera_mode"],
            split_ratio=settings["split_ratio"],
            min_spacing_m=settings["min_spacing_m"],
            thresholds=thresholds,
            spot_length_m=settings["spot_length_m"],
            spot_width_m=settings["spot_width_m"],
            spot_heading_range=tuple(settings["spot_heading_range"]),
            distractor_count_range=tuple(settings["distractor_count_range"]),
            model_pool=tuple(settings["model_pool"]),
            palette=tuple(tuple(c) for c in settings["palette"]),
            texture_pool=tuple(settings["texture_pool"]),
            lean_target=settings["lean_target"],
            camera=camera,
        )


def _sample_rotation(rng: np.random.Generator, target: ParkClass, th: ClassThresholds) -> RotationPair:
    """Draw (ry, rz) uniformly from the angular region of the target class."""
    lean_jitter = min(STANDING_LEAN_JITTER_DEG, th.theta_fallen / 2)

    if target == ParkClass.FALLEN:
        sign = 1.0 if rng.random() < 0.5 else -1.0
        magnitude = 90.0 + rng.uniform(-FALLEN_JITTER_DEG, FALLEN_JITTER_DEG)
        ry = sign * max(magnitude, th.theta_fallen)
        rz = rng.uniform(-180.0, 180.0)
    elif target == ParkClass.ROTATED:
        ry = rng.uniform(-lean_jitter, lean_jitter)
        sign = 1.0 if rng.random() < 0.5 else -1.0
        rz = sign * rng.uniform(th.theta_rotated, 180.0)
    else:
        ry = rng.uniform(-lean_jitter, lean_jitter)
        rz = rng.uniform(-th.theta_rotated, th.theta_rotated)

    return RotationPair.from_degrees(float(ry), float(rz))


def _sample_distractor(
    rng: np.random.Generator, spot: SpotFrame
) -> Optional[Distractor]:
    kind = DISTRACTOR_KINDS[int(rng.integers(len(DISTRACTOR_KINDS)))]
    lo, hi = DISTRACTOR_SIZES[kind]
    size = tuple(float(rng.uniform(a, b)) for a, b in zip(lo, hi))
    colors = DISTRACTOR_COLORS[kind]
    color = colors[int(rng.integers(len(colors)))]
    radius = 0.5 * math.hypot(size[0], size[1])
    reach_u = spot.length_m / 2 + DISTRACTOR_RING_M[1]
    reach_v = spot.width_m / 2 + DISTRACTOR_RING_M[1]
    margin = DISTRACTOR_RING_M[0]

    for _ in range(DISTRACTOR_RETRIES):
        u = float(rng.uniform(-reach_u, reach_u))
        v = float(rng.uniform(-reach_v, reach_v))
        # Inflated-rectangle test: the footprint circle must clear the spot
        if abs(u) < spot.length_m / 2 + radius + margin and abs(v) < spot.width_m / 2 + radius + margin:
            continue
        x, y, _ = spot.to_world(u, v)
        heading = float(rng.uniform(-180.0, 180.0))
        return Distractor(kind, (x, y, Angle(heading).signed_deg), size, color)
    return None


def sample_scene(cfg: GenConfig, seed: int) -> Scene:
    """
    Sample one randomized parking scene.

    Args:
        cfg: Generation settings
        seed: 64-bit seed; the scene is a pure function of (cfg, seed)

    Returns:
        Scene: Sampled scene

    Raises:
        GenerationError: Fewer than the minimum bikes could be placed
    """
    rng = np.random.default_rng(int(seed) & MASK64)
    lo, hi = cfg.bike_count_range

    heading = float(rng.uniform(*cfg.spot_heading_range))
    spot = SpotFrame((0.0, 0.0, 0.0), heading, cfg.spot_length_m, cfg.spot_width_m)

    n_target = int(rng.integers(lo, hi + 1))
    positions: List[Tuple[float, float]] = []
    bikes: List[BikeInstance] = []
    mix = np.asarray(cfg.class_mix, dtype=np.float64)

    for i in range(n_target):
        placed = None
        for _ in range(PLACEMENT_RETRIES):
            u = float(rng.uniform(-spot.length_m / 2, spot.length_m / 2))
            v = float(rng.uniform(-spot.width_m / 2, spot.width_m / 2))
            if all(math.hypot(u - pu, v - pv) >= cfg.min_spacing_m for pu, pv in positions):
                placed = (u, v)
                break
        if placed is None:
            logger.debug(f"Seed {seed}: bike {i} could not be placed, stopping at {len(bikes)} bikes")
            break

        target = ParkClass(int(rng.choice(3, p=mix)))
        rot = _sample_rotation(rng, target, cfg.thresholds)
        model_id = cfg.model_pool[int(rng.integers(len(cfg.model_pool)))]
        scale = float(rng.uniform(0.8, 1.2))
        color = cfg.palette[int(rng.integers(len(cfg.palette)))]

        positions.append(placed)
        bikes.append(BikeInstance(model_id, placed, rot, scale, color))

    if len(bikes) < lo:
        raise GenerationError(
            f"Seed {seed}: placed only {len(bikes)} bikes, minimum is {lo} "
            f"(spacing {cfg.min_spacing_m} m in {spot.length_m} x {spot.width_m} m)"
        )

    dlo, dhi = cfg.distractor_count_range
    distractors = []
    for _ in range(int(rng.integers(dlo, dhi + 1))):
        distractor = _sample_distractor(rng, spot)
        if distractor is not None:
            distractors.append(distractor)

    light = Light(
        azimuth_deg=float(rng.uniform(0.0, 360.0)),
        elevation_deg=float(rng.uniform(25.0, 75.0)),
        intensity=float(rng.uniform(0.6, 1.2)),
    )
    texture = cfg.texture_pool[int(rng.integers(len(cfg.texture_pool)))]

    return Scene(spot, tuple(bikes), tuple(distractors), light, int(texture), int(seed))


def scene_class_histogram(
    scene: Scene, th: ClassThresholds = ClassThresholds()
) -> Dict[ParkClass, int]:
    """Count bikes per parking class."""
    counts = {cls: 0 for cls in ParkClass}
    for bike in scene.bikes:
        counts[derive_class(bike.rot, th)] += 1
    return counts


def _stable_hash(*parts: Any) -> int:
    key = ":".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def image_seed(master_seed: int, index: int) -> int:
    """Per-image 64-bit seed, independent of generation order."""
    return _stable_hash("image", int(master_seed), int(index))


def camera_seed(scene_seed: int) -> int:
    """Camera seed derived from a scene seed."""
    return _stable_hash("camera", int(scene_seed))


@dataclass(frozen=True)
class ManifestEntry:
    index: int
    seed: int
    split: str
    image_path: str
    label_path: str
    scene_path: str

    def to_dict(self) -> dict:
        """Convert entry to dictionary."""
        return asdict(self)

    def to_json(self) -> str:
        """Convert entry to a canonical JSON line."""
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, json_str: str) -> "ManifestEntry":
        """Create entry from JSON string."""
        return cls(**json.loads(json_str))


@dataclass(frozen=True)
class DatasetManifest:
    """Image list with seeds, split assignment and (optionally) sampled scenes."""
    master_seed: int
    entries: Tuple[ManifestEntry, ...]
    scenes: Tuple[Scene, ...] = ()

    def split_sizes(self) -> Tuple[int, int]:
        train = sum(1 for e in self.entries if e.split == "train")
        return train, len(self.entries) - train

    def to_jsonl(self) -> str:
        return "".join(entry.to_json() + "\n" for entry in self.entries)

    @classmethod
    def from_jsonl(cls, text: str, master_seed: int = 0) -> "DatasetManifest":
        entries = tuple(ManifestEntry.from_json(line) for line in text.splitlines() if line.strip())
        return cls(master_seed, entries)


def train_count(n_images: int, split_ratio: float) -> int:
    """round(n * ratio), halves rounded up."""
    return int(math.floor(n_images * split_ratio + 0.5))


def plan_dataset(
    cfg: GenConfig, n_images: int, master_seed: int, image_ext: str = "png"
) -> DatasetManifest:
    """
    Seeds, file names and train/test split for a dataset, without sampling scenes.

    Args:
        cfg: Generation settings (split ratio)
        n_images: Number of images, at least 1
        master_seed: Dataset seed
        image_ext: Image file extension

    Returns:
        DatasetManifest: Entries in index order
    """
    if n_images < 1:
        raise ConfigError(f"n_images must be at least 1, got {n_images}")

    n_train = train_count(n_images, cfg.split_ratio)
    order = sorted(range(n_images), key=lambda i: (_stable_hash("split", master_seed, i), i))
    train = set(order[:n_train])

    entries = []
    for i in range(n_images):
        stem = f"{i:06d}"
        entries.append(ManifestEntry(
            index=i,
            seed=image_seed(master_seed, i),
            split="train" if i in train else "test",
            image_path=f"images/{stem}.{image_ext}",
            label_path=f"labels/{stem}.txt",
            scene_path=f"scenes/{stem}.json",
        ))
    logger.info(f"Planned {n_images} images: {n_train} train / {n_images - n_train} test")
    return DatasetManifest(int(master_seed), tuple(entries))


def assemble_dataset(cfg: GenConfig, n_images: int, master_seed: int) -> DatasetManifest:
    """Plan a dataset and sample every scene in index order."""
    plan = plan_dataset(cfg, n_images, master_seed)
    scenes = tuple(sample_scene(cfg, entry.seed) for entry in plan.entries)
    return DatasetManifest(plan.master_seed, plan.entries, scenes)
