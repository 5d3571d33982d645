"""
Unit tests for smoothing filters against naive per-pixel oracles.
"""

from pathlib import Path
import math
import sys

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from spot_rotation.errors import ConfigError
from spot_rotation.imgproc import (
    PRESETS,
    KernelSpec,
    bilateral_weights,
    gaussian_kernel,
    gaussian_sigma_from_size,
    preset_spec,
    smooth,
)

SIZE = 64


def _fixtures():
    constant = np.full((SIZE, SIZE), 100, dtype=np.uint8)
    impulse = np.zeros((SIZE, SIZE), dtype=np.uint8)
    impulse[32, 32] = 255
    gradient = np.tile((np.arange(SIZE) * 4).astype(np.uint8), (SIZE, 1))
    return {"constant": constant, "impulse": impulse, "gradient": gradient}


def _box_kernel(size: int) -> np.ndarray:
    return np.full((size, size), 1.0 / (size * size))


def _reflect(i: int, n: int) -> int:
    if i < 0:
        return -i
    if i >= n:
        return 2 * (n - 1) - i
    return i


def _window(img, y, x, r):
    h, w = img.shape
    return [[int(img[_reflect(y + dy, h), _reflect(x + dx, w)]) for dx in range(-r, r + 1)]
            for dy in range(-r, r + 1)]


def _oracle(img: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Direct per-pixel evaluation of each filter."""
    h, w = img.shape
    r = spec.radius
    out = np.zeros_like(img)
    taps = gaussian_kernel(spec.size, spec.sigma) if spec.kind == "gaussian" else None
    space, color = bilateral_weights(spec)
    kernel = _box_kernel(spec.size)

    for y in range(h):
        for x in range(w):
            win = _window(img, y, x, r)
            if spec.kind in ("conv2d_box", "lowpass_box"):
                acc = 0.0
                for dy in range(spec.size):
                    for dx in range(spec.size):
                        acc += kernel[dy, dx] * win[dy][dx]
                value = math.floor(acc + 0.5)
            elif spec.kind == "gaussian":
                acc = 0.0
                for ky in range(spec.size):
                    row = 0.0
                    for kx in range(spec.size):
                        row += taps[kx] * float(win[ky][kx])
                    acc += taps[ky] * row
                value = math.floor(acc + 0.5)
            elif spec.kind == "median":
                value = sorted(v for line in win for v in line)[(spec.size * spec.size) // 2]
            else:
                center = int(img[y, x])
                num = den = 0.0
                for dy in range(spec.size):
                    for dx in range(spec.size):
                        weight = space[dy, dx] * color[abs(win[dy][dx] - center)]
                        num += weight * win[dy][dx]
                        den += weight
                value = math.floor(num / den + 0.5)
            out[y, x] = min(255, max(0, value))
    return out


@pytest.mark.parametrize("preset", ["conv5", "lowpass3", "gauss5", "median5", "bilateral5"])
def test_presets_match_oracle(preset):
    spec = preset_spec(preset)
    for name, img in _fixtures().items():
        assert np.array_equal(smooth(img, spec), _oracle(img, spec)), (preset, name)


def test_constant_image_unchanged():
    img = np.full((20, 30, 3), 77, dtype=np.uint8)
    for name, spec in PRESETS.items():
        if spec is not None:
            assert np.array_equal(smooth(img, spec), img), name


def test_impulse_through_box():
    img = _fixtures()["impulse"]
    out = smooth(img, KernelSpec("conv2d_box", 5))
    expected = np.zeros_like(img)
    expected[30:35, 30:35] = 10  # round(255 / 25)
    assert np.array_equal(out, expected)


def test_mean_preserved():
    img = _fixtures()["gradient"]
    for preset in ("conv5", "lowpass3", "gauss5"):
        out = smooth(img, preset_spec(preset))
        assert abs(out.mean() - img.mean()) <= 0.5, preset


def test_shape_preserved():
    rng = np.random.default_rng(3)
    for shape in ((17, 23), (17, 23, 3), (5, 5, 1)):
        img = rng.integers(0, 256, size=shape, dtype=np.uint8)
        for spec in PRESETS.values():
            if spec is not None:
                assert smooth(img, spec).shape == shape


def test_gaussian_sigma_from_size():
    assert abs(gaussian_sigma_from_size(5) - 1.1) < 1e-12
    assert abs(gaussian_sigma_from_size(3) - 0.8) < 1e-12
    assert gaussian_sigma_from_size(7) > gaussian_sigma_from_size(5)
    assert abs(gaussian_kernel(5).sum() - 1.0) < 1e-12


def test_box_weights_sum_to_one():
    assert abs(_box_kernel(5).sum() - 1.0) < 1e-12
    img = np.zeros((SIZE, SIZE), dtype=np.uint8)
    img[32, 32] = 250
    out = smooth(img, preset_spec("conv5"))
    assert int(out.astype(np.int64).sum()) == 250


def test_reflect_padding_on_narrow_images():
    """Windows wider than the image keep reflecting without repeating the edge pixel."""
    img = np.array([[0, 250]], dtype=np.uint8)
    assert smooth(img, KernelSpec("conv2d_box", 5)).tolist() == [[100, 150]]


def test_invalid_specs_rejected():
    with pytest.raises(ConfigError):
        KernelSpec("median", 4)
    with pytest.raises(ConfigError):
        KernelSpec("gaussian", 5, sigma=0.0)
    with pytest.raises(ConfigError):
        KernelSpec("sharpen", 3)
    with pytest.raises(ConfigError):
        preset_spec("sharpen")
    with pytest.raises(ValueError):
        smooth(np.zeros((8, 8), dtype=np.float32), KernelSpec("median", 3))


if __name__ == '__main__':
    print("Testing smoothing filters...\n")
    for preset_name in ("conv5", "lowpass3", "gauss5", "median5", "bilateral5"):
        test_presets_match_oracle(preset_name)
    test_constant_image_unchanged()
    test_impulse_through_box()
    test_mean_preserved()
    test_shape_preserved()
    test_gaussian_sigma_from_size()
    test_box_weights_sum_to_one()
    test_reflect_padding_on_narrow_images()
    print("✅ All smoothing tests passed!")
