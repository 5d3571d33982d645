"""
Camera sampling, pinhole projection and ground-truth annotation.

Boxes come from projecting each bike's oriented 3D bounding box; rotations
come only from the bike's spot-relative pose, so they never depend on the rig.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import MIN_RETAINED_FRACTION, MIN_VISIBLE_AREA, NEAR_PLANE_M
from .errors import BehindCameraError, ConfigError, DegenerateModelError
from .rotation import ClassThresholds, UnitRotation, derive_class, quantize_lean, to_unit
from .scene import MASK64, BikeInstance, CameraRanges, Scene, SpotFrame, Vec3

logger = logging.getLogger(__name__)

# Corner index pairs of a box whose corners are enumerated by (ix, iy, iz) bits
BOX_EDGES = (
    (0, 1), (2, 3), (4, 5), (6, 7),
    (0, 2), (1, 3), (4, 6), (5, 7),
    (0, 4), (1, 5), (2, 6), (3, 7),
)


@dataclass(frozen=True)
class BikeModel:
    """Oriented bounding box of a bike model, meters at scale 1."""
    name: str
    length: float
    width: float
    height: float
    wheel_radius: float


BIKE_MODELS: Dict[int, BikeModel] = {
    0: BikeModel("road", 1.75, 0.45, 1.00, 0.34),
    1: BikeModel("city", 1.85, 0.60, 1.10, 0.35),
    2: BikeModel("kids", 1.30, 0.45, 0.80, 0.25),
    3: BikeModel("cargo", 2.30, 0.70, 1.10, 0.30),
}


@dataclass(frozen=True)
class CameraRig:
    """Pinhole camera looking from position toward look_at, world z up."""
    position: Vec3
    look_at: Vec3
    vertical_fov_deg: float
    mode: str

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))
        object.__setattr__(self, "look_at", tuple(float(c) for c in self.look_at))
        if self.position[2] <= 0:
            raise ValueError(f"camera must be above ground, got z={self.position[2]}")
        if not (20.0 < self.vertical_fov_deg < 120.0):
            raise ValueError(f"vertical fov must lie in (20, 120), got {self.vertical_fov_deg}")
        if self.position == self.look_at:
            raise ValueError("camera position and look_at coincide")

    def basis(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Right, up and forward unit vectors in world coordinates."""
        forward = np.subtract(self.look_at, self.position, dtype=np.float64)
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, (0.0, 0.0, 1.0))
        if np.linalg.norm(right) < 1e-9:
            # Looking straight up or down: fall back to world y as up
            right = np.cross(forward, (0.0, 1.0, 0.0))
        right /= np.linalg.norm(right)
        up = np.cross(right, forward)
        return right, up, forward

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        """World points (N, 3) to camera coordinates (x right, y up, z forward)."""
        right, up, forward = self.basis()
        rel = np.asarray(points, dtype=np.float64) - np.asarray(self.position)
        return np.stack([rel @ right, rel @ up, rel @ forward], axis=-1)

    def focal_px(self, image_h: int) -> float:
        return (image_h / 2.0) / math.tan(math.radians(self.vertical_fov_deg) / 2.0)

    def to_dict(self) -> dict:
        return {
            "position": list(self.position),
            "look_at": list(self.look_at),
            "vertical_fov_deg": self.vertical_fov_deg,
            "mode": self.mode,
        }


@dataclass(frozen=True)
class BBox2D:
    """Axis-aligned box as fractions of the image: center, width, height."""
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("cx", "cy"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"box {name} must lie in [0, 1], got {value}")
        for name in ("w", "h"):
            value = getattr(self, name)
            if not (0.0 < value <= 1.0):
                raise ValueError(f"box {name} must lie in (0, 1], got {value}")

    @classmethod
    def from_pixels(cls, x0: float, y0: float, x1: float, y1: float, image_wh: Tuple[int, int]) -> "BBox2D":
        width, height = image_wh
        return cls(
            cx=(x0 + x1) / 2.0 / width,
            cy=(y0 + y1) / 2.0 / height,
            w=(x1 - x0) / width,
            h=(y1 - y0) / height,
        )

    def to_xyxy(self) -> Tuple[float, float, float, float]:
        return (self.cx - self.w / 2, self.cy - self.h / 2, self.cx + self.w / 2, self.cy + self.h / 2)

    def to_pixels(self, image_wh: Tuple[int, int]) -> Tuple[float, float, float, float]:
        width, height = image_wh
        x0, y0, x1, y1 = self.to_xyxy()
        return (x0 * width, y0 * height, x1 * width, y1 * height)


@dataclass(frozen=True)
class AnnotationRecord:
    """Extended YOLO ground truth: class, box and two unit rotations."""
    class_id: int
    box: BBox2D
    ry_u: float
    rz_u: float

    def __post_init__(self):
        if self.class_id not in (0, 1, 2):
            raise ValueError(f"class_id must be 0, 1 or 2, got {self.class_id}")
        object.__setattr__(self, "ry_u", UnitRotation(self.ry_u).u)
        object.__setattr__(self, "rz_u", UnitRotation(self.rz_u).u)


def _uniform(rng: np.random.Generator, bounds: Tuple[float, float]) -> float:
    lo, hi = bounds
    if hi < lo:
        raise ConfigError(f"empty camera range [{lo}, {hi}]")
    return float(rng.uniform(lo, hi))


def sample_camera(
    mode: str,
    ranges: CameraRanges,
    seed: int,
    target: Vec3 = (0.0, 0.0, 0.0),
) -> CameraRig:
    """
    Sample a camera rig for one camera mode.

    Args:
        mode: free, vertical_free or restricted
        ranges: Offsets relative to the target point
        seed: 64-bit seed
        target: Spot center the camera looks at

    Returns:
        CameraRig: Deterministic per (mode, ranges, seed, target)
    """
    rng = np.random.default_rng(int(seed) & MASK64)
    tx, ty, tz = (float(c) for c in target)

    if mode == "free":
        position = (tx + _uniform(rng, ranges.x_range),
                    ty + _uniform(rng, ranges.y_range),
                    tz + _uniform(rng, ranges.z_range))
    elif mode == "vertical_free":
        position = (tx,
                    ty + _uniform(rng, ranges.y_range),
                    tz + _uniform(rng, ranges.z_range))
    elif mode == "restricted":
        px, py, pz = ranges.restricted_pose
        position = (tx + px, ty + py, tz + pz)
    else:
        raise ConfigError(f"Unknown camera mode '{mode}'")

    return CameraRig(position, (tx, ty, tz), ranges.fov_deg, mode)


def project_point(rig: CameraRig, p: Sequence[float], image_wh: Tuple[int, int]) -> Tuple[float, float]:
    """
    Perspective projection with the principal point at the image center.

    Raises:
        BehindCameraError: Point at or behind the camera plane
    """
    x, y, z = rig.to_camera(np.asarray(p, dtype=np.float64)[None, :])[0]
    if z <= 0.0:
        raise BehindCameraError(f"point {tuple(p)} lies behind the camera (depth {z:.4f})")
    width, height = image_wh
    f = rig.focal_px(height)
    return (width / 2.0 + f * x / z, height / 2.0 - f * y / z)


def project_camera_points(cam: np.ndarray, image_wh: Tuple[int, int], focal: float) -> np.ndarray:
    """Project camera-space points (N, 3) with positive depth to pixels (N, 2)."""
    width, height = image_wh
    u = width / 2.0 + focal * cam[:, 0] / cam[:, 2]
    v = height / 2.0 - focal * cam[:, 1] / cam[:, 2]
    return np.stack([u, v], axis=-1)


def model_extent(bike: BikeInstance, models: Dict[int, BikeModel] = BIKE_MODELS) -> Tuple[float, float, float]:
    """Scaled (length, width, height) of a bike's model."""
    model = models.get(bike.model_id)
    if model is None:
        raise DegenerateModelError(f"unknown bike model {bike.model_id}")
    extent = (model.length * bike.scale, model.width * bike.scale, model.height * bike.scale)
    if min(extent) <= 0:
        raise DegenerateModelError(f"bike model {bike.model_id} has zero-size extent {extent}")
    return extent


def box_corners(length: float, width: float, height: float) -> np.ndarray:
    """Corners (8, 3) of the local box; index bits are (x, y, z)."""
    xs = (-length / 2, length / 2)
    ys = (-width / 2, width / 2)
    zs = (0.0, height)
    return np.array([(xs[i & 1], ys[(i >> 1) & 1], zs[(i >> 2) & 1]) for i in range(8)], dtype=np.float64)


def bike_transform(
    bike: BikeInstance, spot: SpotFrame, models: Dict[int, BikeModel] = BIKE_MODELS
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Rigid transform (R, t) taking bike-local points to world: world = R @ p + t.

    Local frame: x forward, y left, z up, wheels on z=0. The lean turns about
    the forward axis (positive falls left), the heading about world z; the
    leaned box is lifted so its lowest corner rests on the ground.
    """
    length, width, height = model_extent(bike, models)
    lean = math.radians(bike.rot.ry.signed_deg)
    cl, sl = math.cos(lean), math.sin(lean)
    # Rotation about +x by -lean
    r_lean = np.array([[1.0, 0.0, 0.0], [0.0, cl, sl], [0.0, -sl, cl]])

    heading = math.radians(spot.heading_deg + bike.rot.rz.signed_deg)
    ch, sh = math.cos(heading), math.sin(heading)
    r_heading = np.array([[ch, -sh, 0.0], [sh, ch, 0.0], [0.0, 0.0, 1.0]])

    leaned = box_corners(length, width, height) @ r_lean.T
    lift = -float(leaned[:, 2].min())
    x, y, z = spot.to_world(*bike.pos_in_spot)
    return r_heading @ r_lean, np.array([x, y, z + lift])


def bike_corners(bike: BikeInstance, spot: SpotFrame, models: Dict[int, BikeModel] = BIKE_MODELS) -> np.ndarray:
    """World-space corners (8, 3) of the bike's oriented bounding box."""
    rotation, translation = bike_transform(bike, spot, models)
    return box_corners(*model_extent(bike, models)) @ rotation.T + translation


def _near_clipped(cam: np.ndarray) -> np.ndarray:
    """Box corners in front of the near plane plus edge crossings of it."""
    front = cam[:, 2] >= NEAR_PLANE_M
    points = [cam[front]]
    for a, b in BOX_EDGES:
        if front[a] != front[b]:
            za, zb = cam[a, 2], cam[b, 2]
            t = (NEAR_PLANE_M - za) / (zb - za)
            points.append((cam[a] + t * (cam[b] - cam[a]))[None, :])
    return np.concatenate(points, axis=0)


def bike_bbox(
    rig: CameraRig,
    bike: BikeInstance,
    spot: SpotFrame,
    image_wh: Tuple[int, int],
    models: Dict[int, BikeModel] = BIKE_MODELS,
) -> Optional[BBox2D]:
    """
    Image-space box of a bike, or None when it is not visible.

    A bike is not visible when its clipped box covers less than 1% of the
    image or keeps less than 25% of its unclipped projection.
    """
    cam = rig.to_camera(bike_corners(bike, spot, models))
    if not np.any(cam[:, 2] >= NEAR_PLANE_M):
        return None

    width, height = image_wh
    pix = project_camera_points(_near_clipped(cam), image_wh, rig.focal_px(height))
    x0, y0 = pix.min(axis=0)
    x1, y1 = pix.max(axis=0)
    full_area = (x1 - x0) * (y1 - y0)
    if full_area <= 0:
        return None

    cx0, cy0 = max(x0, 0.0), max(y0, 0.0)
    cx1, cy1 = min(x1, float(width)), min(y1, float(height))
    if cx1 <= cx0 or cy1 <= cy0:
        return None
    clipped_area = (cx1 - cx0) * (cy1 - cy0)

    if clipped_area < MIN_VISIBLE_AREA * width * height:
        return None
    if clipped_area < MIN_RETAINED_FRACTION * full_area:
        return None

    return BBox2D.from_pixels(float(cx0), float(cy0), float(cx1), float(cy1), image_wh)


def annotate_scene(
    scene: Scene,
    rig: CameraRig,
    image_wh: Tuple[int, int],
    th: ClassThresholds = ClassThresholds(),
    lean_target: str = "continuous",
) -> List[AnnotationRecord]:
    """
    Ground-truth records for every visible bike, in bike order.

    Args:
        scene: Scene to annotate
        rig: Camera rig (affects boxes only)
        image_wh: Image size in pixels
        th: Class thresholds
        lean_target: continuous, or three_state to snap ry to {-90, 0, 90}

    Returns:
        List[AnnotationRecord]: One record per visible bike
    """
    records = []
    for i, bike in enumerate(scene.bikes):
        box = bike_bbox(rig, bike, scene.spot, image_wh)
        if box is None:
            logger.debug(f"Scene {scene.seed}: bike {i} not visible")
            continue
        ry = quantize_lean(bike.rot.ry) if lean_target == "three_state" else bike.rot.ry
        records.append(AnnotationRecord(
            class_id=int(derive_class(bike.rot, th)),
            box=box,
            ry_u=to_unit(ry).u,
            rz_u=to_unit(bike.rot.rz).u,
        ))
    return records
