"""
Smoothing filters applied to real-world images before detection.

Every filter works on 8-bit images (H, W) or (H, W, C), pads borders by
reflection and returns an image of the same shape and dtype. Linear filters
accumulate kernel taps in row-major order so results are reproducible tap
for tap.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .config import BILATERAL_SIGMA_COLOR, BILATERAL_SIGMA_SPACE
from .errors import ConfigError

logger = logging.getLogger(__name__)

KERNEL_KINDS = ("conv2d_box", "lowpass_box", "gaussian", "median", "bilateral")


@dataclass(frozen=True)
class KernelSpec:
    """
    Filter kind, odd window size and per-kind parameters.

    sigma applies to gaussian (None means derived from size);
    sigma_space / sigma_color apply to bilateral.
    """
    kind: str
    size: int
    sigma: Optional[float] = None
    sigma_space: float = BILATERAL_SIGMA_SPACE
    sigma_color: float = BILATERAL_SIGMA_COLOR

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ConfigError(f"Unknown kernel kind '{self.kind}'. Choose from: {', '.join(KERNEL_KINDS)}")
        if self.size < 3 or self.size % 2 == 0:
            raise ConfigError(f"kernel size must be odd and >= 3, got {self.size}")
        if self.sigma is not None and self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.sigma_space <= 0 or self.sigma_color <= 0:
            raise ConfigError("bilateral sigmas must be positive")

    @property
    def radius(self) -> int:
        return self.size // 2


# Named presets exposed on the command line; "none" copies images unchanged
PRESETS: Dict[str, Optional[KernelSpec]] = {
    "none": None,
    "conv5": KernelSpec("conv2d_box", 5),
    "lowpass3": KernelSpec("lowpass_box", 3),
    "gauss5": KernelSpec("gaussian", 5),
    "median5": KernelSpec("median", 5),
    "bilateral5": KernelSpec("bilateral", 5),
}


def preset_spec(name: str) -> Optional[KernelSpec]:
    """Look up a named preset (None for the identity preset)."""
    if name not in PRESETS:
        raise ConfigError(f"Unknown smoothing preset '{name}'. Choose from: {', '.join(PRESETS)}")
    return PRESETS[name]


def gaussian_sigma_from_size(size: int) -> float:
    """Auto sigma for a Gaussian window: 0.3 * ((size - 1) / 2 - 1) + 0.8."""
    if size < 3 or size % 2 == 0:
        raise ConfigError(f"kernel size must be odd and >= 3, got {size}")
    return 0.3 * ((size - 1) / 2 - 1) + 0.8


def gaussian_kernel(size: int, sigma: Optional[float] = None) -> np.ndarray:
    """Normalized 1-D Gaussian taps of odd length."""
    if sigma is None:
        sigma = gaussian_sigma_from_size(size)
    r = size // 2
    offsets = np.arange(-r, r + 1, dtype=np.float64)
    taps = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def bilateral_weights(spec: KernelSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    Lookup tables for the bilateral filter.

    Returns:
        Tuple: (space weights of shape (size, size), range weights indexed by |difference| 0..255)
    """
    r = spec.radius
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1].astype(np.float64)
    space = np.exp(-(dx ** 2 + dy ** 2) / (2.0 * spec.sigma_space ** 2))
    diff = np.arange(256, dtype=np.float64)
    color = np.exp(-(diff ** 2) / (2.0 * spec.sigma_color ** 2))
    return space, color


def _as_channels(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise ValueError(f"expected an 8-bit image, got dtype {image.dtype}")
    if image.ndim == 2:
        return image[:, :, None]
    if image.ndim == 3:
        return image
    raise ValueError(f"expected (H, W) or (H, W, C) image, got shape {image.shape}")


def _pad(channels: np.ndarray, r: int) -> np.ndarray:
    return np.pad(channels, ((r, r), (r, r), (0, 0)), mode="reflect")


def _round_clamp(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def _box(channels: np.ndarray, size: int) -> np.ndarray:
    h, w = channels.shape[:2]
    padded = _pad(channels, size // 2).astype(np.int64)
    total = np.zeros(channels.shape, dtype=np.int64)
    for dy in range(size):
        for dx in range(size):
            total += padded[dy:dy + h, dx:dx + w]
    area = size * size
    # Integer form of floor(total / area + 0.5)
    return np.clip((2 * total + area) // (2 * area), 0, 255).astype(np.uint8)


def _gaussian(channels: np.ndarray, spec: KernelSpec) -> np.ndarray:
    taps = gaussian_kernel(spec.size, spec.sigma)
    h, w = channels.shape[:2]
    padded = _pad(channels, spec.radius).astype(np.float64)

    rows = np.zeros((padded.shape[0], w, channels.shape[2]), dtype=np.float64)
    for k, weight in enumerate(taps):
        rows += weight * padded[:, k:k + w]
    out = np.zeros(channels.shape, dtype=np.float64)
    for k, weight in enumerate(taps):
        out += weight * rows[k:k + h]
    return _round_clamp(out)


def _median(channels: np.ndarray, size: int) -> np.ndarray:
    padded = _pad(channels, size // 2)
    windows = sliding_window_view(padded, (size, size), axis=(0, 1))
    flat = windows.reshape(windows.shape[:3] + (size * size,))
    return np.sort(flat, axis=-1)[..., (size * size) // 2].astype(np.uint8)


def _bilateral(channels: np.ndarray, spec: KernelSpec) -> np.ndarray:
    space, color = bilateral_weights(spec)
    h, w = channels.shape[:2]
    padded = _pad(channels, spec.radius).astype(np.int64)
    center = channels.astype(np.int64)

    num = np.zeros(channels.shape, dtype=np.float64)
    den = np.zeros(channels.shape, dtype=np.float64)
    for dy in range(spec.size):
        for dx in range(spec.size):
            neighbor = padded[dy:dy + h, dx:dx + w]
            weight = space[dy, dx] * color[np.abs(neighbor - center)]
            num += weight * neighbor
            den += weight
    return _round_clamp(num / den)


def smooth(image: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """
    Apply one smoothing filter.

    Args:
        image: uint8 array (H, W) or (H, W, C), nonempty
        spec: Filter specification

    Returns:
        np.ndarray: Filtered image with the input's shape
    """
    channels = _as_channels(image)
    if channels.size == 0:
        raise ValueError("cannot smooth an empty image")

    if spec.kind in ("conv2d_box", "lowpass_box"):
        out = _box(channels, spec.size)
    elif spec.kind == "gaussian":
        out = _gaussian(channels, spec)
    elif spec.kind == "median":
        out = _median(channels, spec.size)
    else:
        out = _bilateral(channels, spec)

    logger.debug(f"Applied {spec.kind} {spec.size}x{spec.size} to image {image.shape}")
    return out.reshape(np.shape(image))


def describe_preset(name: str) -> str:
    spec = preset_spec(name)
    if spec is None:
        return "identity"
    if spec.kind == "gaussian":
        sigma = spec.sigma if spec.sigma is not None else gaussian_sigma_from_size(spec.size)
        return f"gaussian {spec.size}x{spec.size}, sigma {sigma:.3f}"
    if spec.kind == "bilateral":
        return f"bilateral {spec.size}x{spec.size}, sigma_space {spec.sigma_space}, sigma_color {spec.sigma_color}"
    if spec.kind in ("conv2d_box", "lowpass_box"):
        return f"{spec.kind} 1/{spec.size * spec.size} x ({spec.size}x{spec.size})"
    return f"{spec.kind} {spec.size}x{spec.size}"
