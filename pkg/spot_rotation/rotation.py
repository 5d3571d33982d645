"""
Object-to-spot rotation semantics.

Angles are signed degrees in (-180, 180]. The network target space is
u = (radians + pi) / (2 pi) in [0, 1], so the well-parked angle sits at 0.5.
"""

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Union

from .config import THETA_FALLEN_DEG, THETA_ROTATED_DEG


class ParkClass(IntEnum):
    """Parking status of a bike; values are the label class ids."""
    PARKED = 0
    ROTATED = 1
    FALLEN = 2


def _require_finite(value: float, name: str) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    return value


def _wrap(raw_deg: float) -> float:
    if -180.0 < raw_deg <= 180.0:
        return raw_deg
    wrapped = raw_deg % 360.0
    if wrapped > 180.0:
        wrapped -= 360.0
    return wrapped


@dataclass(frozen=True)
class Angle:
    """Signed angle in degrees, always normalised into (-180, 180]."""
    signed_deg: float

    def __post_init__(self):
        value = _require_finite(self.signed_deg, "angle")
        object.__setattr__(self, "signed_deg", _wrap(value))

    @property
    def radians(self) -> float:
        return math.radians(self.signed_deg)

    def __abs__(self) -> float:
        return abs(self.signed_deg)


@dataclass(frozen=True)
class RotationPair:
    """
    Spot-relative rotation of one bike.

    ry is the lean about the bike's depth axis (back view, +90 fallen left),
    rz the heading about the vertical axis (top view).
    """
    ry: Angle
    rz: Angle

    @classmethod
    def from_degrees(cls, ry_deg: float, rz_deg: float) -> "RotationPair":
        return cls(Angle(ry_deg), Angle(rz_deg))


@dataclass(frozen=True)
class UnitRotation:
    """Rotation in the [0, 1] target space."""
    u: float

    def __post_init__(self):
        value = _require_finite(self.u, "unit rotation")
        if value < 0.0 or value > 1.0:
            raise ValueError(f"unit rotation must lie in [0, 1], got {value}")
        object.__setattr__(self, "u", value)


@dataclass(frozen=True)
class ClassThresholds:
    """Angular boundaries between parked, rotated and fallen."""
    theta_fallen: float = THETA_FALLEN_DEG
    theta_rotated: float = THETA_ROTATED_DEG

    def __post_init__(self):
        if not (0.0 < self.theta_rotated < self.theta_fallen <= 90.0):
            raise ValueError(
                f"thresholds must satisfy 0 < theta_rotated < theta_fallen <= 90, "
                f"got rotated={self.theta_rotated}, fallen={self.theta_fallen}"
            )


def wrap_signed(raw_deg: float) -> Angle:
    """
    Wrap any finite degree value into (-180, 180].

    Args:
        raw_deg: Angle in degrees

    Returns:
        Angle: Equivalent angle modulo 360
    """
    return Angle(_require_finite(raw_deg, "raw_deg"))


def to_unit(angle: Angle) -> UnitRotation:
    """Map a signed angle to the [0, 1] target space."""
    return UnitRotation((angle.radians + math.pi) / (2.0 * math.pi))


def from_unit(unit: Union[UnitRotation, float]) -> Angle:
    """
    Inverse of to_unit. Both u=0 and u=1 decode to 180 degrees.

    Args:
        unit: UnitRotation or a raw float in [0, 1]

    Returns:
        Angle: Decoded signed angle
    """
    if not isinstance(unit, UnitRotation):
        unit = UnitRotation(unit)
    return Angle(math.degrees(unit.u * 2.0 * math.pi - math.pi))


def relative_rotation(object_heading_deg: float, spot_heading_deg: float) -> Angle:
    """Rotation of an object measured against the spot heading."""
    obj = _require_finite(object_heading_deg, "object_heading_deg")
    spot = _require_finite(spot_heading_deg, "spot_heading_deg")
    return wrap_signed(obj - spot)


def quantize_lean(ry: Angle) -> Angle:
    """
    Snap a lean angle to the three lean states {-90, 0, 90}.
    Ties resolve toward 0 (standing).
    """
    value = ry.signed_deg
    if abs(value) <= 45.0:
        return Angle(0.0)
    return Angle(90.0 if value > 0 else -90.0)


def derive_class(rot: RotationPair, th: ClassThresholds = ClassThresholds()) -> ParkClass:
    """
    Parking class of a spot-relative rotation.

    Args:
        rot: Spot-relative rotation pair
        th: Class thresholds

    Returns:
        ParkClass: fallen beats rotated beats parked
    """
    if abs(rot.ry) >= th.theta_fallen:
        return ParkClass.FALLEN
    if abs(rot.rz) >= th.theta_rotated:
        return ParkClass.ROTATED
    return ParkClass.PARKED
