"""
Unit tests for the software rasterizer and scene export.
"""

from pathlib import Path
import json
import sys

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from spot_rotation.annotate import CameraRig, bike_bbox, sample_camera
from spot_rotation.errors import ConfigError
from spot_rotation.render import (
    BACKGROUND_COLORS,
    SUBPIXEL,
    MeshPrimitive,
    RenderConfig,
    _clip_near,
    bike_mesh,
    box_mesh,
    export_scene,
    fill_triangle,
    parse_scene,
    rasterize,
    render_mesh,
)
from spot_rotation.config import NEAR_PLANE_M
from spot_rotation.rotation import RotationPair
from spot_rotation.scene import BikeInstance, GenConfig, Light, Scene, SpotFrame, sample_scene

SMALL = RenderConfig(width=160, height=96)


def _rig() -> CameraRig:
    return CameraRig((0.0, -5.0, 1.0), (0.0, 0.0, 1.0), 60.0, "restricted")


def _single_bike_scene(ry=10.0, rz=25.0) -> Scene:
    spot = SpotFrame((0.0, 0.0, 0.0), 0.0, 12.0, 4.0)
    bike = BikeInstance(1, (0.3, -0.2), RotationPair.from_degrees(ry, rz), 1.0, (200, 30, 30))
    return Scene(spot, (bike,), (), Light(30.0, 50.0, 1.0), 0, 3)


def test_render_config_validation():
    with pytest.raises(ConfigError):
        RenderConfig(width=32)
    with pytest.raises(ConfigError):
        RenderConfig(jpeg_quality=0)
    with pytest.raises(ConfigError):
        RenderConfig(shading="phong")
    assert RenderConfig().image_wh == (640, 360)
    assert RenderConfig(output_format="jpeg").extension == "jpg"


def test_empty_scene_is_pure_background():
    spot = SpotFrame((0.0, 0.0, 0.0), 0.0, 12.0, 4.0)
    scene = Scene(spot, (), (), Light(0.0, 45.0, 1.0), 0, 0)
    cfg = RenderConfig(width=96, height=64, background_id=2, draw_ground=False)
    image = rasterize(scene, _rig(), cfg)
    assert image.shape == (64, 96, 3)
    assert image.dtype == np.uint8
    assert (image == np.array(BACKGROUND_COLORS[2], dtype=np.uint8)).all()


def test_rasterize_is_deterministic():
    cfg = GenConfig()
    scene = sample_scene(cfg, 21)
    rig = sample_camera("free", cfg.camera, 21)
    first = rasterize(scene, rig, SMALL)
    second = rasterize(scene, rig, SMALL)
    assert first.tobytes() == second.tobytes()
    assert len(np.unique(first.reshape(-1, 3), axis=0)) > 2


def test_bike_pixels_inside_annotated_box():
    """Every bike pixel center lies in the annotated box (within fixed-point snapping)."""
    scene = _single_bike_scene()
    rig = _rig()
    cfg = RenderConfig(width=320, height=180, shading="flat", draw_ground=False)
    image = rasterize(scene, rig, cfg)

    background = np.array(BACKGROUND_COLORS[0], dtype=np.uint8)
    ys, xs = np.nonzero((image != background).any(axis=2))
    assert len(xs) > 0

    box = bike_bbox(rig, scene.bikes[0], scene.spot, cfg.image_wh)
    x0, y0, x1, y1 = box.to_pixels(cfg.image_wh)
    slack = 1.0 / SUBPIXEL
    assert (xs + 0.5).min() >= x0 - slack
    assert (xs + 0.5).max() <= x1 + slack
    assert (ys + 0.5).min() >= y0 - slack
    assert (ys + 0.5).max() <= y1 + slack


def test_nearer_quad_wins():
    """Two parallel quads: the nearer one is drawn wherever they overlap, in either order."""
    near = box_mesh((0.0, 0.0, 1.0), (2.0, 0.02, 2.0), (255, 0, 0))
    far = box_mesh((0.0, 3.0, 1.0), (4.0, 0.02, 4.0), (0, 0, 255))
    cfg = RenderConfig(width=640, height=360)
    rig = _rig()

    for parts in ((near, far), (far, near)):
        mesh = MeshPrimitive.concat(list(parts))
        image = render_mesh(mesh, mesh.colors, rig, cfg)
        assert tuple(image[180, 320]) == (255, 0, 0)
        # Column 390 sees past the near quad's edge onto the far quad
        assert tuple(image[180, 390]) == (0, 0, 255)


def test_shared_edge_covered_once():
    """Two triangles splitting a square cover each pixel exactly once."""
    a, b, c, d = (np.array(p) * SUBPIXEL for p in ((10, 10), (20, 10), (20, 20), (10, 20)))
    coverage = np.zeros((32, 32), dtype=np.int64)
    for tri in ((a, b, c), (a, c, d)):
        zbuf = np.zeros((32, 32))
        image = np.zeros((32, 32, 3), dtype=np.uint8)
        fill_triangle(np.array(tri), np.ones(3), np.array((255, 255, 255), dtype=np.uint8), zbuf, image)
        coverage += zbuf > 0

    assert coverage.max() == 1
    assert coverage[10:20, 10:20].sum() == 100
    assert coverage.sum() == 100


def test_degenerate_triangles_dropped():
    tris = np.array([
        [[0, 0, 0], [1, 0, 0], [0, 1, 0]],
        [[0, 0, 0], [1, 1, 1], [2, 2, 2]],
    ], dtype=np.float64)
    mesh = MeshPrimitive(tris, np.array([[1, 2, 3], [4, 5, 6]], dtype=np.uint8))
    assert len(mesh) == 1
    assert tuple(mesh.colors[0]) == (1, 2, 3)


def test_near_plane_clipping():
    tri = np.array([[0.0, 0.0, -1.0], [1.0, 0.0, 2.0], [-1.0, 0.0, 2.0]])
    pieces = _clip_near(tri)
    assert pieces
    for piece in pieces:
        assert (piece[:, 2] >= NEAR_PLANE_M - 1e-12).all()
    assert _clip_near(tri - np.array([0.0, 0.0, 5.0])) == []


def test_bike_mesh_has_faces():
    scene = _single_bike_scene()
    assert len(bike_mesh(scene.bikes[0], scene.spot)) > 50


def test_export_parse_round_trip():
    cfg = GenConfig()
    for seed in (1, 2, 3):
        scene = sample_scene(cfg, seed)
        rig = sample_camera("free", cfg.camera, seed)
        parsed_scene, parsed_rig = parse_scene(export_scene(scene, rig))
        assert parsed_scene == scene
        assert parsed_rig == rig


def test_export_document_fields():
    spot = SpotFrame((0.0, 0.0, 0.0), 12.5, 12.0, 4.0)
    bikes = tuple(
        BikeInstance(0, (u, 0.0), RotationPair.from_degrees(ry, rz), 1.0, (10, 20, 30))
        for u, ry, rz in ((-3.0, 0.0, 0.0), (0.0, 90.0, -45.0), (3.0, 2.0, 330.0))
    )
    scene = Scene(spot, bikes, (), Light(90.0, 40.0, 0.8), 2, 77)
    document = json.loads(export_scene(scene, _rig()))

    assert document["schema"] == "spot-rotation/scene"
    assert document["version"] == 1
    assert len(document["scene"]["bikes"]) == 3
    assert [b["rz_deg"] for b in document["scene"]["bikes"]] == [0.0, -45.0, -30.0]
    assert document["scene"]["spot"]["heading_deg"] == 12.5
    assert document["scene"]["ground_texture_id"] == 2
    assert document["camera"]["position"] == [0.0, -5.0, 1.0]


def test_parse_rejects_foreign_documents():
    with pytest.raises(ValueError):
        parse_scene(json.dumps({"schema": "other", "version": 1}))
    with pytest.raises(ValueError):
        parse_scene(json.dumps({"schema": "spot-rotation/scene", "version": 99}))


if __name__ == '__main__':
    print("Testing rasterizer...\n")
    test_render_config_validation()
    test_empty_scene_is_pure_background()
    test_rasterize_is_deterministic()
    test_bike_pixels_inside_annotated_box()
    test_nearer_quad_wins()
    test_shared_edge_covered_once()
    test_export_parse_round_trip()
    test_export_document_fields()
    print("✅ All render tests passed!")
