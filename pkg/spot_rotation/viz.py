"""
Nested-dial rotation overlays.

Each bike gets a class-colored box and two dials at the box center: the
outer dial sweeps from 0 to the lean (ry), the inner dial from 0 to the
heading (rz). 0 degrees points up and positive angles turn clockwise.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .annotate import AnnotationRecord
from .metrics import Detection
from .rotation import Angle, ParkClass, from_unit

logger = logging.getLogger(__name__)

RGB = Tuple[int, int, int]
Overlayable = Union[AnnotationRecord, Detection]

CLASS_COLORS: Dict[ParkClass, RGB] = {
    ParkClass.PARKED: (0, 200, 0),
    ParkClass.ROTATED: (0, 90, 255),
    ParkClass.FALLEN: (255, 140, 0),
}
RING_COLOR = (220, 220, 220)


@dataclass(frozen=True)
class DialStyle:
    """Dial layout: outer circle shows y (lean), inner circle shows z (heading)."""
    radius_px: float = 18.0
    inner_ratio: float = 0.6
    line_width: int = 2
    colors: Dict[ParkClass, RGB] = field(default_factory=lambda: dict(CLASS_COLORS))
    outer_axis: str = "y"
    inner_axis: str = "z"
    show_labels: bool = True

    def __post_init__(self):
        if self.radius_px <= 0:
            raise ValueError(f"radius_px must be positive, got {self.radius_px}")
        if not (0.0 < self.inner_ratio < 1.0):
            raise ValueError(f"inner radius must be smaller than the outer one, got ratio {self.inner_ratio}")
        if len(set(self.colors.values())) != len(self.colors):
            raise ValueError("class colors must be distinct")

    @property
    def inner_radius_px(self) -> float:
        return self.radius_px * self.inner_ratio


def dial_geometry(angle: Angle, radius_px: float, center: Tuple[float, float] = (0.0, 0.0)) -> Tuple[float, float]:
    """
    Endpoint of a dial needle.

    Args:
        angle: Signed angle; 0 points up, positive turns clockwise
        radius_px: Needle length
        center: Dial center in pixels (y grows downward)

    Returns:
        Tuple: (x, y) pixel coordinates of the endpoint
    """
    if radius_px <= 0:
        raise ValueError(f"radius_px must be positive, got {radius_px}")
    theta = angle.radians
    return (center[0] + radius_px * math.sin(theta), center[1] - radius_px * math.cos(theta))


def _dial_angles(item: Overlayable) -> Tuple[Angle, Angle]:
    return from_unit(item.ry_u), from_unit(item.rz_u)


def _box_pixels(item: Overlayable, image_wh: Tuple[int, int]) -> Tuple[float, float, float, float]:
    return item.box.to_pixels(image_wh)


def _draw_dial(draw: ImageDraw.ImageDraw, center, radius: float, angle: Angle, color: RGB, width: int) -> None:
    cx, cy = center
    bounds = [cx - radius, cy - radius, cx + radius, cy + radius]
    draw.ellipse(bounds, outline=RING_COLOR, width=1)
    sweep = angle.signed_deg
    # PIL measures arcs clockwise from 3 o'clock
    if sweep > 0:
        draw.arc(bounds, start=-90.0, end=sweep - 90.0, fill=color, width=width)
    elif sweep < 0:
        draw.arc(bounds, start=sweep - 90.0, end=-90.0, fill=color, width=width)
    draw.line([center, dial_geometry(angle, radius, center)], fill=color, width=width)


def draw_overlay(
    image: np.ndarray,
    items: Sequence[Overlayable],
    style: Optional[DialStyle] = None,
) -> np.ndarray:
    """
    Draw boxes and nested rotation dials on a copy of an RGB image.

    Args:
        image: uint8 array (H, W, 3)
        items: Ground-truth records or detections
        style: Dial style

    Returns:
        np.ndarray: New image; the input image and items are left untouched
    """
    style = style or DialStyle()
    if not items:
        return np.array(image, dtype=np.uint8, copy=True)

    canvas = Image.fromarray(np.asarray(image, dtype=np.uint8)).convert("RGB")
    draw = ImageDraw.Draw(canvas)
    font = ImageFont.load_default()
    image_wh = canvas.size

    for item in items:
        color = style.colors[ParkClass(item.class_id)]
        x0, y0, x1, y1 = _box_pixels(item, image_wh)
        draw.rectangle([x0, y0, x1, y1], outline=color, width=style.line_width)

        ry, rz = _dial_angles(item)
        center = ((x0 + x1) / 2.0, (y0 + y1) / 2.0)
        _draw_dial(draw, center, style.radius_px, ry, color, style.line_width)
        _draw_dial(draw, center, style.inner_radius_px, rz, color, style.line_width)

        if style.show_labels:
            label = f"y {ry.signed_deg:+.0f} z {rz.signed_deg:+.0f}"
            draw.text((x0 + 2, max(0.0, y0 - 12)), label, fill=color, font=font)

    logger.debug(f"Drew {len(items)} overlays on {image_wh[0]}x{image_wh[1]} image")
    return np.asarray(canvas, dtype=np.uint8)


def _hex(color: RGB) -> str:
    return "#{:02x}{:02x}{:02x}".format(*color)


def _svg_dial(center, radius: float, angle: Angle, color: RGB, width: int) -> List[str]:
    cx, cy = center
    start = dial_geometry(Angle(0.0), radius, center)
    end = dial_geometry(angle, radius, center)
    parts = [
        f'<circle cx="{cx:.3f}" cy="{cy:.3f}" r="{radius:.3f}" fill="none" stroke="{_hex(RING_COLOR)}" stroke-width="1"/>'
    ]
    sweep = angle.signed_deg
    if sweep != 0.0:
        sweep_flag = 1 if sweep > 0 else 0
        parts.append(
            f'<path d="M {start[0]:.3f} {start[1]:.3f} A {radius:.3f} {radius:.3f} 0 0 {sweep_flag} '
            f'{end[0]:.3f} {end[1]:.3f}" fill="none" stroke="{_hex(color)}" stroke-width="{width}"/>'
        )
    parts.append(
        f'<line x1="{cx:.3f}" y1="{cy:.3f}" x2="{end[0]:.3f}" y2="{end[1]:.3f}" '
        f'stroke="{_hex(color)}" stroke-width="{width}"/>'
    )
    return parts


def overlay_svg(
    items: Sequence[Overlayable],
    image_wh: Tuple[int, int],
    style: Optional[DialStyle] = None,
    image_href: Optional[str] = None,
) -> str:
    """Vector version of draw_overlay with the same geometry."""
    style = style or DialStyle()
    width, height = image_wh
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">'
    ]
    if image_href:
        lines.append(f'<image xlink:href="{image_href}" x="0" y="0" width="{width}" height="{height}"/>')

    for item in items:
        color = style.colors[ParkClass(item.class_id)]
        x0, y0, x1, y1 = _box_pixels(item, image_wh)
        lines.append(
            f'<rect x="{x0:.3f}" y="{y0:.3f}" width="{x1 - x0:.3f}" height="{y1 - y0:.3f}" '
            f'fill="none" stroke="{_hex(color)}" stroke-width="{style.line_width}"/>'
        )
        ry, rz = _dial_angles(item)
        center = ((x0 + x1) / 2.0, (y0 + y1) / 2.0)
        lines.extend(_svg_dial(center, style.radius_px, ry, color, style.line_width))
        lines.extend(_svg_dial(center, style.inner_radius_px, rz, color, style.line_width))
        if style.show_labels:
            lines.append(
                f'<text x="{x0 + 2:.3f}" y="{max(0.0, y0 - 2):.3f}" fill="{_hex(color)}" font-size="10">'
                f'y {ry.signed_deg:+.0f} z {rz.signed_deg:+.0f}</text>'
            )

    lines.append("</svg>")
    return "\n".join(lines) + "\n"
