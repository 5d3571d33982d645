"""
End-to-end tests for the command-line interface.
"""

from pathlib import Path
import json
import sys

import numpy as np
import pytest
from click.testing import CliRunner

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from spot_rotation.cli import main
from spot_rotation.config import WORKERS_ENV
from spot_rotation.storage import RUN_MANIFEST_NAME, read_image, write_image

SMALL_CONFIG = "WIDTH=96\nHEIGHT=64\nBIKE_COUNT_MIN=3\nBIKE_COUNT_MAX=4\nDISTRACTOR_COUNT_MIN=0\nDISTRACTOR_COUNT_MAX=1\n"


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    """Run inside tmp_path (log files land there) with a small dataset config."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv(WORKERS_ENV, "1")
    (tmp_path / "small.env").write_text(SMALL_CONFIG)
    return tmp_path


def _generate(root: Path, out: str, n: int = 10, seed: int = 7):
    return CliRunner().invoke(
        main, ["generate", "--config", str(root / "small.env"), "--seed", str(seed), "--n", str(n), "--out", out]
    )


def _dataset_files(directory: Path):
    return {
        p.relative_to(directory).as_posix(): p.read_bytes()
        for p in sorted(directory.rglob("*"))
        if p.is_file() and p.name != RUN_MANIFEST_NAME
    }


def _run_manifest(directory: Path) -> dict:
    return json.loads((directory / RUN_MANIFEST_NAME).read_text())


def test_generate_layout(workspace):
    result = _generate(workspace, "data")
    assert result.exit_code == 0, result.output

    data = workspace / "data"
    assert len(list((data / "images").glob("*.png"))) == 10
    assert len(list((data / "labels").glob("*.txt"))) == 10
    assert len(list((data / "scenes").glob("*.json"))) == 10

    entries = [json.loads(line) for line in (data / "manifest.jsonl").read_text().splitlines()]
    assert len(entries) == 10
    assert sum(1 for e in entries if e["split"] == "train") == 9

    run = _run_manifest(data)
    assert run["status"] == "ok"
    assert run["master_seed"] == 7
    assert run["details"]["train"] == 9 and run["details"]["test"] == 1
    assert read_image(data / "images" / "000000.png").shape == (64, 96, 3)


def test_generate_is_reproducible(workspace):
    assert _generate(workspace, "first").exit_code == 0
    assert _generate(workspace, "second").exit_code == 0
    assert _dataset_files(workspace / "first") == _dataset_files(workspace / "second")
    assert _run_manifest(workspace / "first")["config_hash"] == _run_manifest(workspace / "second")["config_hash"]


def test_generate_independent_of_workers(workspace, monkeypatch):
    assert _generate(workspace, "serial", n=4).exit_code == 0
    monkeypatch.setenv(WORKERS_ENV, "2")
    assert _generate(workspace, "parallel", n=4).exit_code == 0
    assert _dataset_files(workspace / "serial") == _dataset_files(workspace / "parallel")


def test_generate_rejects_bad_config(workspace):
    (workspace / "bad.env").write_text("NOT_A_KEY=1\n")
    result = CliRunner().invoke(main, ["generate", "--config", "bad.env", "--n", "2", "--out", "data"])
    assert result.exit_code == 1
    assert _run_manifest(workspace / "data")["status"] == "failed"
    assert not (workspace / "data" / "images").exists()


def _write_inputs(directory: Path):
    rng = np.random.default_rng(1)
    for name in ("a.png", "b.png"):
        write_image(directory / name, rng.integers(0, 256, size=(32, 48, 3), dtype=np.uint8))


def test_smooth_presets(workspace):
    _write_inputs(workspace / "in")
    runner = CliRunner()

    result = runner.invoke(main, ["smooth", "--in", "in", "--preset", "none", "--out", "copy"])
    assert result.exit_code == 0, result.output
    assert (workspace / "copy" / "a.png").read_bytes() == (workspace / "in" / "a.png").read_bytes()

    result = runner.invoke(main, ["smooth", "--in", "in", "--preset", "gauss5", "--out", "blurred"])
    assert result.exit_code == 0, result.output
    blurred = read_image(workspace / "blurred" / "b.png")
    original = read_image(workspace / "in" / "b.png")
    assert blurred.shape == original.shape
    assert blurred.std() < original.std()
    assert _run_manifest(workspace / "blurred")["details"]["preset"] == "gauss5"


def test_smooth_unknown_preset(workspace):
    _write_inputs(workspace / "in")
    result = CliRunner().invoke(main, ["smooth", "--in", "in", "--preset", "sharpen", "--out", "out"])
    assert result.exit_code == 1


def test_smooth_skips_unreadable(workspace):
    _write_inputs(workspace / "in")
    (workspace / "in" / "c.png").write_bytes(b"not an image")
    result = CliRunner().invoke(main, ["smooth", "--in", "in", "--preset", "median5", "--out", "out"])
    assert result.exit_code == 1
    assert (workspace / "out" / "a.png").exists()
    assert not (workspace / "out" / "c.png").exists()
    assert _run_manifest(workspace / "out")["status"] == "partial"


LABELS = {
    "000000": "0 0.250000 0.300000 0.200000 0.200000 0.500000 0.500000\n"
              "2 0.700000 0.600000 0.300000 0.200000 0.750000 0.400000\n",
    "000001": "1 0.500000 0.500000 0.400000 0.400000 0.520000 0.650000\n",
}


def _write_labels(directory: Path, suffix: str = ""):
    directory.mkdir(parents=True, exist_ok=True)
    for stem, text in LABELS.items():
        (directory / f"{stem}.txt").write_text("".join(line + suffix + "\n" for line in text.splitlines()))


def test_eval_perfect_predictions(workspace):
    _write_labels(workspace / "truth")
    _write_labels(workspace / "pred", suffix=" 0.900000")
    result = CliRunner().invoke(main, ["eval", "--pred", "pred", "--truth", "truth", "--out", "report"])
    assert result.exit_code == 0, result.output

    report = json.loads((workspace / "report" / "report.json").read_text())
    assert report["map"] == 1.0
    assert report["rotation_mse"] == 0.0
    assert report["matched_pairs"] == 3
    for name in ("f1_confidence.csv", "precision_confidence.csv", "recall_confidence.csv",
                 "precision_recall.csv", "curves.csv"):
        assert len((workspace / "report" / name).read_text().splitlines()) == 102


def test_eval_mismatched_stems(workspace):
    _write_labels(workspace / "truth")
    _write_labels(workspace / "pred", suffix=" 0.900000")
    (workspace / "pred" / "000001.txt").rename(workspace / "pred" / "000009.txt")
    result = CliRunner().invoke(main, ["eval", "--pred", "pred", "--truth", "truth", "--out", "report"])
    assert result.exit_code == 1
    assert not (workspace / "report" / "report.json").exists()


def test_eval_malformed_prediction(workspace):
    _write_labels(workspace / "truth")
    _write_labels(workspace / "pred")  # no confidence column
    result = CliRunner().invoke(main, ["eval", "--pred", "pred", "--truth", "truth", "--out", "report"])
    assert result.exit_code == 1
    assert "000000.txt:1" in _run_manifest(workspace / "report")["details"]["error"]


def test_eval_rejects_bad_iou(workspace):
    _write_labels(workspace / "truth")
    result = CliRunner().invoke(main, ["eval", "--pred", "truth", "--truth", "truth", "--iou", "1.5", "--out", "r"])
    assert result.exit_code == 1


def test_viz(workspace):
    rng = np.random.default_rng(2)
    for stem in LABELS:
        write_image(workspace / "images" / f"{stem}.png", rng.integers(0, 256, size=(60, 80, 3), dtype=np.uint8))
    _write_labels(workspace / "labels")
    (workspace / "labels" / "000001.txt").write_text("")

    result = CliRunner().invoke(main, ["viz", "--images", "images", "--labels", "labels", "--out", "viz", "--svg"])
    assert result.exit_code == 0, result.output

    assert (workspace / "viz" / "000001.png").read_bytes() == (workspace / "images" / "000001.png").read_bytes()
    drawn = read_image(workspace / "viz" / "000000.png")
    assert not np.array_equal(drawn, read_image(workspace / "images" / "000000.png"))
    svg = (workspace / "viz" / "000000.svg").read_text()
    assert svg.count("<rect") == 2


def test_stats(workspace):
    assert _generate(workspace, "data").exit_code == 0
    result = CliRunner().invoke(main, ["stats", "--data", "data"])
    assert result.exit_code == 0, result.output

    stats = json.loads((workspace / "data" / "stats" / "stats.json").read_text())
    assert stats["total"]["images"] == 10
    assert stats["splits"]["train"]["images"] == 9
    assert stats["total"]["bikes"] == sum(stats["total"][c] for c in ("parked", "rotated", "fallen"))
    assert 30 <= stats["total"]["bikes"] <= 40


def test_version(workspace):
    result = CliRunner().invoke(main, ["--version"])
    assert result.exit_code == 0
    assert "spot-rotation" in result.output
