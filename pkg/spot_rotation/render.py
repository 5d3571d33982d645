"""
Deterministic software rasterizer and scene-description export.

Triangles are snapped to a 1/16 pixel fixed-point grid and filled with
integer edge functions under the top-left rule, so output bytes do not
depend on platform float quirks. Depth is tested on interpolated 1/z.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .annotate import BIKE_MODELS, CameraRig, bike_transform, model_extent, project_camera_points
from .config import NEAR_PLANE_M
from .errors import ConfigError
from .rotation import RotationPair
from .scene import BikeInstance, Distractor, Light, Scene, SpotFrame

logger = logging.getLogger(__name__)

SUBPIXEL = 16
AMBIENT = 0.35
MAX_PIXELS = 4096 * 4096

SCENE_SCHEMA = "spot-rotation/scene"
SCENE_SCHEMA_VERSION = 1

BACKGROUND_COLORS = (
    (150, 185, 220), (200, 205, 210), (120, 140, 170), (225, 215, 195),
)

# (color a, color b, tile size m): asphalt, pavement, grass, gravel, brick, concrete
GROUND_TEXTURES = (
    ((70, 70, 75), (82, 82, 86), 4.0),
    ((150, 145, 140), (165, 160, 152), 2.0),
    ((70, 120, 50), (85, 135, 60), 6.0),
    ((125, 115, 100), (140, 128, 112), 3.0),
    ((140, 70, 55), (155, 85, 65), 2.0),
    ((175, 175, 170), (190, 190, 184), 5.0),
)
GROUND_EXTENT_M = 60.0
SPOT_LINE_COLOR = (235, 235, 235)
SPOT_LINE_WIDTH_M = 0.12

WHEEL_COLOR = (25, 25, 25)
METAL_COLOR = (150, 150, 155)
TRUNK_COLOR = (90, 60, 35)
SKIN_COLOR = (210, 170, 140)


@dataclass(frozen=True)
class RenderConfig:
    """Raster output settings."""
    width: int = 640
    height: int = 360
    background_id: int = 0
    shading: str = "lambert"
    output_format: str = "png"
    jpeg_quality: int = 98
    draw_ground: bool = True

    def __post_init__(self):
        if self.width < 64 or self.height < 64:
            raise ConfigError(f"image must be at least 64x64, got {self.width}x{self.height}")
        if self.width * self.height > MAX_PIXELS:
            raise ConfigError(f"image {self.width}x{self.height} exceeds {MAX_PIXELS} pixels")
        if self.shading not in ("flat", "lambert"):
            raise ConfigError(f"shading must be flat or lambert, got {self.shading}")
        if self.output_format not in ("png", "jpeg"):
            raise ConfigError(f"output_format must be png or jpeg, got {self.output_format}")
        if not (1 <= self.jpeg_quality <= 100):
            raise ConfigError(f"jpeg_quality must lie in [1, 100], got {self.jpeg_quality}")

    @property
    def image_wh(self) -> Tuple[int, int]:
        return (self.width, self.height)

    @property
    def extension(self) -> str:
        return "png" if self.output_format == "png" else "jpg"

    @classmethod
    def from_settings(cls, settings: Dict[str, Any]) -> "RenderConfig":
        return cls(
            width=settings["width"],
            height=settings["height"],
            background_id=settings["background_id"],
            shading=settings["shading"],
            output_format=settings["output_format"],
            jpeg_quality=settings["jpeg_quality"],
        )


@dataclass
class MeshPrimitive:
    """Triangle soup (N, 3, 3) in meters with one RGB color per face."""
    triangles: np.ndarray
    colors: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.uint8))

    def __post_init__(self):
        tris = np.asarray(self.triangles, dtype=np.float64).reshape(-1, 3, 3)
        colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
        if len(colors) != len(tris):
            raise ValueError(f"{len(tris)} triangles but {len(colors)} colors")
        cross = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
        keep = np.linalg.norm(cross, axis=1) > 1e-12
        self.triangles = tris[keep]
        self.colors = colors[keep]

    def __len__(self) -> int:
        return len(self.triangles)

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> "MeshPrimitive":
        return MeshPrimitive(self.triangles @ rotation.T + translation, self.colors)

    @classmethod
    def concat(cls, meshes: List["MeshPrimitive"]) -> "MeshPrimitive":
        meshes = [m for m in meshes if len(m)]
        if not meshes:
            return cls(np.zeros((0, 3, 3)), np.zeros((0, 3), dtype=np.uint8))
        return cls(
            np.concatenate([m.triangles for m in meshes]),
            np.concatenate([m.colors for m in meshes]),
        )


def _quads_to_mesh(quads: List[Tuple[np.ndarray, ...]], color) -> MeshPrimitive:
    tris = []
    for a, b, c, d in quads:
        tris.append((a, b, c))
        tris.append((a, c, d))
    return MeshPrimitive(np.array(tris), np.tile(np.asarray(color, dtype=np.uint8), (len(tris), 1)))


def box_mesh(center, size, color) -> MeshPrimitive:
    """Axis-aligned box given its center and full extents."""
    cx, cy, cz = center
    hx, hy, hz = (s / 2.0 for s in size)
    c = np.array([(cx + sx * hx, cy + sy * hy, cz + sz * hz)
                  for sz in (-1, 1) for sy in (-1, 1) for sx in (-1, 1)])
    faces = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    return _quads_to_mesh([tuple(c[i] for i in face) for face in faces], color)


def wheel_mesh(center, radius: float, thickness: float, color, sides: int = 8) -> MeshPrimitive:
    """Prism approximating a wheel; axle along local y."""
    cx, cy, cz = center
    angles = [2.0 * math.pi * k / sides for k in range(sides)]
    ring = [(cx + radius * math.cos(a), cz + radius * math.sin(a)) for a in angles]
    left = [np.array((x, cy + thickness / 2, z)) for x, z in ring]
    right = [np.array((x, cy - thickness / 2, z)) for x, z in ring]
    quads = [(left[k], left[(k + 1) % sides], right[(k + 1) % sides], right[k]) for k in range(sides)]
    tris = [t for q in quads for t in ((q[0], q[1], q[2]), (q[0], q[2], q[3]))]
    for cap in (left, right):
        tris.extend((cap[0], cap[k], cap[k + 1]) for k in range(1, sides - 1))
    return MeshPrimitive(np.array(tris), np.tile(np.asarray(color, dtype=np.uint8), (len(tris), 1)))


def bike_mesh(bike: BikeInstance, spot: SpotFrame) -> MeshPrimitive:
    """Parametric bike assembly posed in the world; stays inside the bike's bounding box."""
    length, width, height = model_extent(bike)
    radius = BIKE_MODELS[bike.model_id].wheel_radius * bike.scale
    tube = 0.05 * bike.scale
    rear_x, front_x = -length / 2 + radius, length / 2 - radius
    bar_z = 0.94 * height

    parts = [
        wheel_mesh((rear_x, 0.0, radius), radius, min(tube, width), WHEEL_COLOR),
        wheel_mesh((front_x, 0.0, radius), radius, min(tube, width), WHEEL_COLOR),
        # Top tube and down tube
        box_mesh((0.0, 0.0, 0.72 * height), (front_x - rear_x, tube, tube), bike.color),
        box_mesh((0.0, 0.0, radius), (front_x - rear_x, tube, tube), bike.color),
        # Seat tube and saddle
        box_mesh((-0.15 * length, 0.0, (radius + 0.85 * height) / 2), (tube, tube, 0.85 * height - radius), bike.color),
        box_mesh((-0.15 * length, 0.0, 0.88 * height), (0.16 * length, 0.6 * width, 0.06 * height), WHEEL_COLOR),
        # Fork and handlebar
        box_mesh((front_x, 0.0, (radius + bar_z) / 2), (tube, tube, bar_z - radius), METAL_COLOR),
        box_mesh((front_x, 0.0, bar_z), (tube, width, 0.06 * height), METAL_COLOR),
    ]
    if bike.model_id == 3:
        parts.append(box_mesh((0.12 * length, 0.0, 0.45 * height), (0.3 * length, 0.9 * width, 0.3 * height), bike.color))

    rotation, translation = bike_transform(bike, spot)
    return MeshPrimitive.concat(parts).transformed(rotation, translation)


def distractor_mesh(d: Distractor) -> MeshPrimitive:
    """Box assembly for a distractor, posed by its (x, y, heading)."""
    sx, sy, sz = d.size
    if d.kind == "vehicle":
        parts = [
            box_mesh((0.0, 0.0, 0.3 * sz), (sx, sy, 0.5 * sz), d.color),
            box_mesh((-0.05 * sx, 0.0, 0.775 * sz), (0.55 * sx, 0.9 * sy, 0.45 * sz), d.color),
        ]
    elif d.kind == "pedestrian":
        parts = [
            box_mesh((0.0, 0.0, 0.425 * sz), (sx, sy, 0.85 * sz), d.color),
            box_mesh((0.0, 0.0, 0.925 * sz), (0.6 * sx, 0.6 * sy, 0.15 * sz), SKIN_COLOR),
        ]
    elif d.kind == "tree":
        parts = [
            box_mesh((0.0, 0.0, 0.225 * sz), (0.15 * sx, 0.15 * sy, 0.45 * sz), TRUNK_COLOR),
            box_mesh((0.0, 0.0, 0.725 * sz), (sx, sy, 0.55 * sz), d.color),
        ]
    else:
        parts = [box_mesh((0.0, 0.0, sz / 2), (sx, sy, sz), d.color)]

    x, y, heading = d.pose
    h = math.radians(heading)
    rotation = np.array([[math.cos(h), -math.sin(h), 0.0], [math.sin(h), math.cos(h), 0.0], [0.0, 0.0, 1.0]])
    return MeshPrimitive.concat(parts).transformed(rotation, np.array([x, y, 0.0]))


def ground_mesh(scene: Scene) -> MeshPrimitive:
    """Two-tone tiled ground centered on the spot."""
    color_a, color_b, tile = GROUND_TEXTURES[scene.ground_texture_id % len(GROUND_TEXTURES)]
    n = max(1, int(round(GROUND_EXTENT_M / tile)))
    half = n * tile / 2.0
    ox, oy, _ = scene.spot.origin
    tiles = []
    for i in range(n):
        for j in range(n):
            x0, y0 = ox - half + i * tile, oy - half + j * tile
            quad = (np.array((x0, y0, 0.0)), np.array((x0 + tile, y0, 0.0)),
                    np.array((x0 + tile, y0 + tile, 0.0)), np.array((x0, y0 + tile, 0.0)))
            tiles.append(_quads_to_mesh([quad], color_a if (i + j) % 2 == 0 else color_b))
    return MeshPrimitive.concat(tiles)


def spot_marking_mesh(spot: SpotFrame) -> MeshPrimitive:
    """Painted outline of the spot rectangle, just above the ground."""
    hl, hw, lw, z = spot.length_m / 2, spot.width_m / 2, SPOT_LINE_WIDTH_M, 0.01
    strips = [
        (-hl, -hw, hl, -hw + lw), (-hl, hw - lw, hl, hw),
        (-hl, -hw, -hl + lw, hw), (hl - lw, -hw, hl, hw),
    ]
    quads = []
    for u0, v0, u1, v1 in strips:
        corners = [spot.to_world(u, v) for u, v in ((u0, v0), (u1, v0), (u1, v1), (u0, v1))]
        quads.append(tuple(np.array((x, y, z)) for x, y, _ in corners))
    return _quads_to_mesh(quads, SPOT_LINE_COLOR)


def scene_mesh(scene: Scene, cfg: RenderConfig) -> MeshPrimitive:
    parts = []
    if cfg.draw_ground:
        parts.append(ground_mesh(scene))
        parts.append(spot_marking_mesh(scene.spot))
    parts.extend(bike_mesh(bike, scene.spot) for bike in scene.bikes)
    parts.extend(distractor_mesh(d) for d in scene.distractors)
    return MeshPrimitive.concat(parts)


def shade(mesh: MeshPrimitive, light: Light, shading: str) -> np.ndarray:
    """Per-face colors after two-sided Lambert shading (or unchanged for flat)."""
    if shading == "flat" or len(mesh) == 0:
        return mesh.colors.copy()
    tris = mesh.triangles
    normals = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    cosine = np.abs(normals @ np.asarray(light.direction()))
    factor = AMBIENT + (1.0 - AMBIENT) * np.minimum(1.0, light.intensity * cosine)
    shaded = np.floor(mesh.colors.astype(np.float64) * factor[:, None] + 0.5)
    return np.clip(shaded, 0, 255).astype(np.uint8)


def _clip_near(tri: np.ndarray) -> List[np.ndarray]:
    """Clip a camera-space triangle against z >= near; returns 0-2 triangles."""
    inside = tri[:, 2] >= NEAR_PLANE_M
    if inside.all():
        return [tri]
    if not inside.any():
        return []
    polygon = []
    for k in range(3):
        a, b = tri[k], tri[(k + 1) % 3]
        a_in, b_in = inside[k], inside[(k + 1) % 3]
        if a_in:
            polygon.append(a)
        if a_in != b_in:
            t = (NEAR_PLANE_M - a[2]) / (b[2] - a[2])
            point = a + t * (b - a)
            point[2] = NEAR_PLANE_M
            polygon.append(point)
    return [np.array((polygon[0], polygon[k], polygon[k + 1])) for k in range(1, len(polygon) - 1)]


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _is_top_left(ax, ay, bx, by) -> bool:
    dx, dy = bx - ax, by - ay
    return (dy == 0 and dx > 0) or dy < 0


def fill_triangle(
    fixed: np.ndarray, depth: np.ndarray, color: np.ndarray,
    zbuf: np.ndarray, image: np.ndarray,
) -> None:
    """Z-buffered fill of one projected triangle given 1/16-pixel vertices."""
    (x0, y0), (x1, y1), (x2, y2) = (tuple(int(c) for c in v) for v in fixed)
    z0, z1, z2 = (float(z) for z in depth)
    area = _edge(x0, y0, x1, y1, x2, y2)
    if area == 0:
        return
    if area < 0:
        x1, y1, x2, y2 = x2, y2, x1, y1
        z1, z2 = z2, z1
        area = -area

    height, width = zbuf.shape
    i0 = max(0, min(x0, x1, x2) // SUBPIXEL - 1)
    i1 = min(width - 1, max(x0, x1, x2) // SUBPIXEL + 1)
    j0 = max(0, min(y0, y1, y2) // SUBPIXEL - 1)
    j1 = min(height - 1, max(y0, y1, y2) // SUBPIXEL + 1)
    if i0 > i1 or j0 > j1:
        return

    px = (np.arange(i0, i1 + 1, dtype=np.int64) * SUBPIXEL + SUBPIXEL // 2)[None, :]
    py = (np.arange(j0, j1 + 1, dtype=np.int64) * SUBPIXEL + SUBPIXEL // 2)[:, None]

    w0 = _edge(x1, y1, x2, y2, px, py)
    w1 = _edge(x2, y2, x0, y0, px, py)
    w2 = _edge(x0, y0, x1, y1, px, py)
    inside = (
        ((w0 > 0) | ((w0 == 0) & _is_top_left(x1, y1, x2, y2)))
        & ((w1 > 0) | ((w1 == 0) & _is_top_left(x2, y2, x0, y0)))
        & ((w2 > 0) | ((w2 == 0) & _is_top_left(x0, y0, x1, y1)))
    )
    if not inside.any():
        return

    inv_z = (w0 / z0 + w1 / z1 + w2 / z2) / area
    region = zbuf[j0:j1 + 1, i0:i1 + 1]
    win = inside & (inv_z > region)
    region[win] = inv_z[win]
    image[j0:j1 + 1, i0:i1 + 1][win] = color


def render_mesh(
    mesh: MeshPrimitive, face_colors: np.ndarray, rig: CameraRig, cfg: RenderConfig
) -> np.ndarray:
    """Rasterize pre-shaded triangles over the background color."""
    width, height = cfg.image_wh
    background = BACKGROUND_COLORS[cfg.background_id % len(BACKGROUND_COLORS)]
    image = np.empty((height, width, 3), dtype=np.uint8)
    image[:, :] = background
    zbuf = np.zeros((height, width), dtype=np.float64)
    if len(mesh) == 0:
        return image

    focal = rig.focal_px(height)
    cam = rig.to_camera(mesh.triangles.reshape(-1, 3)).reshape(-1, 3, 3)
    for tri, color in zip(cam, face_colors):
        for piece in _clip_near(tri):
            pix = project_camera_points(piece, cfg.image_wh, focal)
            fixed = np.rint(pix * SUBPIXEL).astype(np.int64)
            fill_triangle(fixed, piece[:, 2], color, zbuf, image)
    return image


def rasterize(scene: Scene, rig: CameraRig, cfg: RenderConfig = RenderConfig()) -> np.ndarray:
    """
    Render a scene to an 8-bit RGB image (height, width, 3).

    Args:
        scene: Scene to draw
        rig: Camera rig
        cfg: Raster settings

    Returns:
        np.ndarray: Row-major RGB image; identical bytes for identical inputs
    """
    mesh = scene_mesh(scene, cfg)
    colors = shade(mesh, scene.light, cfg.shading)
    logger.debug(f"Rasterizing scene {scene.seed}: {len(mesh)} triangles at {cfg.width}x{cfg.height}")
    return render_mesh(mesh, colors, rig, cfg)


def scene_to_dict(scene: Scene) -> dict:
    return {
        "seed": scene.seed,
        "spot": {
            "origin": list(scene.spot.origin),
            "heading_deg": scene.spot.heading_deg,
            "length_m": scene.spot.length_m,
            "width_m": scene.spot.width_m,
        },
        "bikes": [
            {
                "model_id": b.model_id,
                "pos_in_spot": list(b.pos_in_spot),
                "ry_deg": b.rot.ry.signed_deg,
                "rz_deg": b.rot.rz.signed_deg,
                "scale": b.scale,
                "color": list(b.color),
            }
            for b in scene.bikes
        ],
        "distractors": [
            {"kind": d.kind, "pose": list(d.pose), "size": list(d.size), "color": list(d.color)}
            for d in scene.distractors
        ],
        "light": {
            "azimuth_deg": scene.light.azimuth_deg,
            "elevation_deg": scene.light.elevation_deg,
            "intensity": scene.light.intensity,
        },
        "ground_texture_id": scene.ground_texture_id,
    }


def scene_from_dict(data: dict) -> Scene:
    spot = data["spot"]
    return Scene(
        spot=SpotFrame(tuple(spot["origin"]), spot["heading_deg"], spot["length_m"], spot["width_m"]),
        bikes=tuple(
            BikeInstance(
                model_id=b["model_id"],
                pos_in_spot=tuple(b["pos_in_spot"]),
                rot=RotationPair.from_degrees(b["ry_deg"], b["rz_deg"]),
                scale=b["scale"],
                color=tuple(b["color"]),
            )
            for b in data["bikes"]
        ),
        distractors=tuple(
            Distractor(d["kind"], tuple(d["pose"]), tuple(d["size"]), tuple(d["color"]))
            for d in data["distractors"]
        ),
        light=Light(**data["light"]),
        ground_texture_id=data["ground_texture_id"],
        seed=data["seed"],
    )


def export_scene(scene: Scene, rig: CameraRig) -> str:
    """
    Versioned JSON description of a scene and its camera for external renderers.
    Rotations are stored as signed degrees; floats round-trip exactly.
    """
    document = {
        "schema": SCENE_SCHEMA,
        "version": SCENE_SCHEMA_VERSION,
        "scene": scene_to_dict(scene),
        "camera": rig.to_dict(),
    }
    return json.dumps(document, indent=2, sort_keys=True) + "\n"


def parse_scene(text: str) -> Tuple[Scene, Optional[CameraRig]]:
    """Inverse of export_scene."""
    document = json.loads(text)
    if document.get("schema") != SCENE_SCHEMA:
        raise ValueError(f"not a scene document (schema={document.get('schema')!r})")
    if document.get("version") != SCENE_SCHEMA_VERSION:
        raise ValueError(f"unsupported scene schema version {document.get('version')}")
    camera = document.get("camera")
    rig = None
    if camera is not None:
        rig = CameraRig(tuple(camera["position"]), tuple(camera["look_at"]),
                        camera["vertical_fov_deg"], camera["mode"])
    return scene_from_dict(document["scene"]), rig
