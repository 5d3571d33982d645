"""
Unit tests for atomic writes, image codecs and run manifests.
"""

from pathlib import Path
import json
import sys

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from spot_rotation import __version__
from spot_rotation.storage import (
    RUN_MANIFEST_NAME,
    OutputTracker,
    RunManifest,
    atomic_write_text,
    encode_image,
    format_for_path,
    list_images,
    read_image,
    write_image,
)


def _image() -> np.ndarray:
    rng = np.random.default_rng(0)
    return rng.integers(0, 256, size=(24, 32, 3), dtype=np.uint8)


def test_atomic_write_creates_parents_and_overwrites(tmp_path):
    path = tmp_path / "nested" / "dir" / "file.txt"
    atomic_write_text(path, "first")
    atomic_write_text(path, "second")
    assert path.read_text() == "second"
    assert [p.name for p in path.parent.iterdir()] == ["file.txt"]


def test_png_encoding_is_deterministic(tmp_path):
    image = _image()
    assert encode_image(image) == encode_image(image.copy())

    path = write_image(tmp_path / "000000.png", image)
    assert np.array_equal(read_image(path), image)


def test_jpeg_path_and_bad_format(tmp_path):
    assert format_for_path("a.JPG") == "jpeg"
    assert format_for_path("a.png") == "png"
    path = write_image(tmp_path / "000000.jpg", _image())
    assert read_image(path).shape == (24, 32, 3)
    with pytest.raises(ValueError):
        encode_image(_image(), "tiff")


def test_read_image_rejects_garbage(tmp_path):
    path = tmp_path / "broken.png"
    path.write_bytes(b"not an image")
    with pytest.raises(OSError):
        read_image(path)
    with pytest.raises(OSError):
        read_image(tmp_path / "missing.png")


def test_list_images(tmp_path):
    for name in ("b.png", "a.jpg", "c.txt"):
        (tmp_path / name).write_bytes(b"")
    assert [p.name for p in list_images(tmp_path)] == ["a.jpg", "b.png"]


def test_tracker_rolls_back_on_failure(tmp_path):
    kept = tmp_path / "existing.txt"
    kept.write_text("keep me")
    with pytest.raises(RuntimeError):
        with OutputTracker() as outputs:
            outputs.write_text(tmp_path / "a.txt", "a")
            outputs.write_bytes(tmp_path / "sub" / "b.bin", b"b")
            raise RuntimeError("boom")
    assert not (tmp_path / "a.txt").exists()
    assert not (tmp_path / "sub" / "b.bin").exists()
    assert kept.exists()


def test_tracker_keeps_files_on_success(tmp_path):
    with OutputTracker() as outputs:
        outputs.write_text(tmp_path / "a.txt", "a")
    assert (tmp_path / "a.txt").read_text() == "a"
    assert outputs.paths == [tmp_path / "a.txt"]


def test_run_manifest(tmp_path):
    run = RunManifest(command="generate", config_hash="abc", master_seed=7)
    run.outputs["images"] = "images"
    path = run.finish("ok", tmp_path)

    assert path == tmp_path / RUN_MANIFEST_NAME
    document = json.loads(path.read_text())
    assert document["status"] == "ok"
    assert document["tool_version"] == __version__
    assert document["finished_at"] is not None
    assert RunManifest.from_json(path.read_text()) == run


if __name__ == '__main__':
    import tempfile

    print("Testing storage...\n")
    try:
        for test in (test_atomic_write_creates_parents_and_overwrites, test_png_encoding_is_deterministic,
                     test_tracker_rolls_back_on_failure, test_run_manifest):
            with tempfile.TemporaryDirectory() as tmp:
                test(Path(tmp))
            print(f"✓ {test.__name__} passed")
        print("\n✅ All storage tests passed!")
    except Exception as e:
        print(f"\n❌ Test failed: {e}")
