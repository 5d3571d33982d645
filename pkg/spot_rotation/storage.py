"""
File persistence: atomic writes, image codecs and run manifests.
"""

import io
import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from PIL import Image

from . import __version__

logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")
RUN_MANIFEST_NAME = "run_manifest.json"

PathLike = Union[str, Path]


def atomic_write_bytes(path: PathLike, data: bytes) -> Path:
    """Write to a temp file in the target directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path: PathLike, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def encode_image(image: np.ndarray, output_format: str = "png", jpeg_quality: int = 98) -> bytes:
    """
    Encode an RGB uint8 array.

    PNG output carries no metadata, so equal arrays give equal bytes.
    """
    buffer = io.BytesIO()
    pil = Image.fromarray(np.asarray(image, dtype=np.uint8))
    if output_format == "png":
        pil.save(buffer, format="PNG", optimize=False)
    elif output_format == "jpeg":
        pil.convert("RGB").save(buffer, format="JPEG", quality=int(jpeg_quality))
    else:
        raise ValueError(f"unsupported image format '{output_format}'")
    return buffer.getvalue()


def format_for_path(path: PathLike) -> str:
    return "jpeg" if Path(path).suffix.lower() in (".jpg", ".jpeg") else "png"


def write_image(path: PathLike, image: np.ndarray, jpeg_quality: int = 98) -> Path:
    """Atomically write an image; the format follows the file extension."""
    return atomic_write_bytes(path, encode_image(image, format_for_path(path), jpeg_quality))


def read_image(path: PathLike) -> np.ndarray:
    """
    Load an image as RGB uint8 (H, W, 3).

    Raises:
        OSError: File is missing or not a decodable image
    """
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8).copy()


def list_images(directory: PathLike) -> List[Path]:
    """Image files of a directory, sorted by name."""
    return sorted(
        p for p in Path(directory).iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    )


class OutputTracker:
    """
    Records files written by a command and deletes them if the command fails.

    Usage:
        with OutputTracker() as outputs:
            outputs.write_text(path, text)
    """

    def __init__(self):
        self.paths: List[Path] = []

    def __enter__(self) -> "OutputTracker":
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc_type is not None:
            self.rollback()
        return False

    def track(self, path: PathLike) -> Path:
        path = Path(path)
        self.paths.append(path)
        return path

    def write_bytes(self, path: PathLike, data: bytes) -> Path:
        return self.track(atomic_write_bytes(path, data))

    def write_text(self, path: PathLike, text: str) -> Path:
        return self.track(atomic_write_text(path, text))

    def rollback(self) -> None:
        removed = 0
        for path in reversed(self.paths):
            if path.exists():
                path.unlink()
                removed += 1
        logger.warning(f"Removed {removed} partial output file(s)")
        self.paths.clear()


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """Record of one command invocation, written once per run."""
    command: str
    config_hash: str
    master_seed: Optional[int] = None
    started_at: str = field(default_factory=utc_now)
    finished_at: Optional[str] = None
    status: str = "running"
    outputs: Dict[str, str] = field(default_factory=dict)
    details: Dict[str, Any] = field(default_factory=dict)
    tool_version: str = __version__

    def to_dict(self) -> dict:
        """Convert manifest to dictionary."""
        return asdict(self)

    def to_json(self) -> str:
        """Convert manifest to JSON string."""
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, json_str: str) -> "RunManifest":
        """Create manifest from JSON string."""
        return cls(**json.loads(json_str))

    def finish(self, status: str, out_dir: PathLike) -> Path:
        """Stamp the end time and write run_manifest.json into out_dir."""
        self.status = status
        self.finished_at = utc_now()
        path = atomic_write_text(Path(out_dir) / RUN_MANIFEST_NAME, self.to_json())
        logger.info(f"Wrote run manifest to {path} (status: {status})")
        return path
