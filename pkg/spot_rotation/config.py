"""
Configuration management for the spot rotation toolkit.
Centralized defaults, dataset presets and the key/value config file loader.
"""

import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Union

from dotenv import dotenv_values, find_dotenv, load_dotenv

from .errors import ConfigError

logger = logging.getLogger(__name__)

# Rotation Configuration
THETA_FALLEN_DEG = 45.0  # |ry| at or above this is fallen
THETA_ROTATED_DEG = 10.0  # |rz| at or above this is rotated (when standing)
FALLEN_JITTER_DEG = 15.0  # fallen bikes lie within ±15° of ±90°
STANDING_LEAN_JITTER_DEG = 5.0  # lean of parked / rotated bikes

# Scene Sampling Configuration
PLACEMENT_RETRIES = 64  # attempts per bike before the count is reduced
DISTRACTOR_RING_M = (1.0, 12.0)  # distance band around the spot for distractors
DISTRACTOR_RETRIES = 32

# Camera / Projection Configuration
NEAR_PLANE_M = 0.05
MIN_VISIBLE_AREA = 0.01  # fraction of the image area
MIN_RETAINED_FRACTION = 0.25  # clipped / unclipped projected area

# Evaluation Configuration
DEFAULT_IOU_THRESHOLD = 0.5
CURVE_POINTS = 101  # confidence thresholds 0.00 ... 1.00
BCE_EPS = 1e-7
DEFAULT_LOSS_WEIGHTS = (0.7, 0.05, 0.3, 0.05)  # obj, bbox, cls, ryz
GAMMA_RYZ_SWEEP = (0.3, 0.1, 0.05, 0.02)

# Smoothing Configuration
BILATERAL_SIGMA_SPACE = 2.0
BILATERAL_SIGMA_COLOR = 25.0

# Logging Configuration
LOG_LEVEL = "INFO"
LOG_DIR = "logs"
LOG_FILE_NAME = "spot_rotation.log"

# Runtime Configuration
WORKERS_ENV = "SPOT_ROTATION_WORKERS"
DEFAULT_WORKERS = 1

DEFAULT_PALETTE = (
    (200, 30, 30), (30, 30, 30), (230, 230, 230), (20, 80, 200),
    (240, 200, 20), (40, 150, 60), (120, 60, 160), (250, 120, 20),
)

# Base settings; every preset starts from here
DEFAULT_SETTINGS: Dict[str, Any] = {
    "bike_count_range": (3, 15),
    "class_mix": (0.42, 0.35, 0.23),
    "camera_mode": "free",
    "split_ratio": 0.9,
    "min_spacing_m": 0.8,
    "theta_fallen": THETA_FALLEN_DEG,
    "theta_rotated": THETA_ROTATED_DEG,
    "spot_length_m": 12.0,
    "spot_width_m": 4.0,
    "spot_heading_range": (-30.0, 30.0),
    "distractor_count_range": (2, 8),
    "model_pool": (0, 1, 2, 3),
    "palette": DEFAULT_PALETTE,
    "texture_pool": (0, 1, 2, 3, 4, 5),
    "lean_target": "continuous",
    "camera_x_range": (-6.0, 6.0),
    "camera_y_range": (-16.0, -7.0),
    "camera_z_range": (2.5, 9.0),
    "restricted_pose": (0.0, -11.0, 6.0),
    "fov_deg": 60.0,
    "width": 640,
    "height": 360,
    "shading": "lambert",
    "output_format": "png",
    "jpeg_quality": 98,
    "background_id": 0,
}

# One preset per row of the published dataset table
PRESETS: Dict[str, Dict[str, Any]] = {
    "challenging": {
        "bike_count_range": (3, 20),
        "min_spacing_m": 0.5,
        "spot_length_m": 10.0,
        "camera_mode": "free",
    },
    "regular-free": {
        "camera_mode": "free",
    },
    "regular-vertical-free": {
        "camera_mode": "vertical_free",
    },
    "regular-restricted": {
        "camera_mode": "restricted",
    },
}

DEFAULT_PRESET = "regular-free"


def _split(raw: str) -> list:
    return [part.strip() for part in raw.split(",") if part.strip()]


def _float_pair(raw: str) -> Tuple[float, float]:
    parts = _split(raw)
    if len(parts) != 2:
        raise ValueError("expected two comma-separated numbers")
    return float(parts[0]), float(parts[1])


def _float_triple(raw: str) -> Tuple[float, float, float]:
    parts = _split(raw)
    if len(parts) != 3:
        raise ValueError("expected three comma-separated numbers")
    return float(parts[0]), float(parts[1]), float(parts[2])


def _int_list(raw: str) -> Tuple[int, ...]:
    values = tuple(int(p) for p in _split(raw))
    if not values:
        raise ValueError("expected at least one integer")
    return values


def _palette(raw: str) -> Tuple[Tuple[int, int, int], ...]:
    colors = []
    for chunk in raw.split(";"):
        if not chunk.strip():
            continue
        rgb = tuple(int(p) for p in _split(chunk))
        if len(rgb) != 3 or any(c < 0 or c > 255 for c in rgb):
            raise ValueError(f"bad RGB triplet '{chunk}'")
        colors.append(rgb)
    if not colors:
        raise ValueError("empty palette")
    return tuple(colors)


def _choice(*allowed: str) -> Callable[[str], str]:
    def parse(raw: str) -> str:
        value = raw.strip().lower()
        if value not in allowed:
            raise ValueError(f"expected one of {', '.join(allowed)}")
        return value
    return parse


# KEY -> (settings field, parser) for single-valued keys
_SCALAR_KEYS: Dict[str, Tuple[str, Callable[[str], Any]]] = {
    "CLASS_MIX": ("class_mix", _float_triple),
    "CAMERA_MODE": ("camera_mode", _choice("free", "vertical_free", "restricted")),
    "SPLIT_RATIO": ("split_ratio", float),
    "MIN_SPACING_M": ("min_spacing_m", float),
    "THETA_FALLEN": ("theta_fallen", float),
    "THETA_ROTATED": ("theta_rotated", float),
    "SPOT_LENGTH_M": ("spot_length_m", float),
    "SPOT_WIDTH_M": ("spot_width_m", float),
    "SPOT_HEADING_RANGE": ("spot_heading_range", _float_pair),
    "MODEL_POOL": ("model_pool", _int_list),
    "PALETTE": ("palette", _palette),
    "TEXTURE_POOL": ("texture_pool", _int_list),
    "LEAN_TARGET": ("lean_target", _choice("continuous", "three_state")),
    "CAMERA_X_RANGE": ("camera_x_range", _float_pair),
    "CAMERA_Y_RANGE": ("camera_y_range", _float_pair),
    "CAMERA_Z_RANGE": ("camera_z_range", _float_pair),
    "RESTRICTED_POSE": ("restricted_pose", _float_triple),
    "FOV_DEG": ("fov_deg", float),
    "WIDTH": ("width", int),
    "HEIGHT": ("height", int),
    "SHADING": ("shading", _choice("flat", "lambert")),
    "OUTPUT_FORMAT": ("output_format", _choice("png", "jpeg")),
    "JPEG_QUALITY": ("jpeg_quality", int),
    "BACKGROUND_ID": ("background_id", int),
}

# Keys that set one end of a pair
_PAIR_KEYS: Dict[str, Tuple[str, int]] = {
    "BIKE_COUNT_MIN": ("bike_count_range", 0),
    "BIKE_COUNT_MAX": ("bike_count_range", 1),
    "DISTRACTOR_COUNT_MIN": ("distractor_count_range", 0),
    "DISTRACTOR_COUNT_MAX": ("distractor_count_range", 1),
}

DOCUMENTED_KEYS = ("PRESET",) + tuple(_PAIR_KEYS) + tuple(_SCALAR_KEYS)


def resolve_settings(
    overrides: Optional[Dict[str, Optional[str]]] = None,
) -> Dict[str, Any]:
    """
    Resolve raw KEY=VALUE pairs against the preset table.

    Args:
        overrides: Raw string values keyed by documented config keys

    Returns:
        dict: Fully typed settings

    Raises:
        ConfigError: Unknown key, unknown preset or unparsable value
    """
    overrides = dict(overrides or {})
    preset = (overrides.pop("PRESET", None) or DEFAULT_PRESET).strip().lower()
    if preset not in PRESETS:
        raise ConfigError(f"Unknown preset '{preset}'. Choose from: {', '.join(PRESETS)}")

    settings = dict(DEFAULT_SETTINGS)
    settings.update(PRESETS[preset])
    settings["preset"] = preset

    for key, raw in overrides.items():
        if raw is None:
            raise ConfigError(f"Config key {key} has no value")
        try:
            if key in _SCALAR_KEYS:
                field, parse = _SCALAR_KEYS[key]
                settings[field] = parse(raw)
            elif key in _PAIR_KEYS:
                field, slot = _PAIR_KEYS[key]
                pair = list(settings[field])
                pair[slot] = int(raw)
                settings[field] = tuple(pair)
            else:
                raise ConfigError(f"Unknown config key '{key}'")
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"Bad value for {key}: {raw!r} ({e})") from e

    return settings


def load_settings(
    config_path: Optional[Union[str, Path]] = None, preset: Optional[str] = None
) -> Dict[str, Any]:
    """
    Load a flat KEY=VALUE config file and resolve it.

    Args:
        config_path: Config file path; None resolves defaults only
        preset: Preset name that replaces the file's PRESET key

    Returns:
        dict: Fully typed settings
    """
    raw: Dict[str, Optional[str]] = {}
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {config_path}")
        raw = dict(dotenv_values(path))
        logger.info(f"Loaded {len(raw)} config keys from {path}")
    if preset is not None:
        raw["PRESET"] = preset

    settings = resolve_settings(raw)
    logger.info(f"Using preset '{settings['preset']}'")
    return settings


def preset_settings(name: str) -> Dict[str, Any]:
    """Resolve a named preset with no overrides."""
    return resolve_settings({"PRESET": name})


def config_hash(settings: Dict[str, Any]) -> str:
    """Stable sha256 digest of resolved settings."""
    canonical = json.dumps(settings, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def worker_count() -> int:
    """
    Worker count from the environment (a .env file is honoured).

    Returns:
        int: Number of worker processes, at least 1
    """
    load_dotenv(find_dotenv(usecwd=True))
    raw = os.environ.get(WORKERS_ENV, str(DEFAULT_WORKERS))
    try:
        workers = int(raw)
    except ValueError as e:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from e
    return max(1, workers)
