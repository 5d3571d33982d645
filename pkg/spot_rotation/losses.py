"""
Multi-task detection loss terms and their analytic gradients.

The loss combines objectness BCE, box loss (1 - IoU), class BCE and the
rotation MSE on normalized (ry_u, rz_u) targets, each scaled by a raw gamma
weight.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import List, Sequence, Tuple

from .annotate import BBox2D
from .config import BCE_EPS, DEFAULT_LOSS_WEIGHTS, GAMMA_RYZ_SWEEP
from .errors import SubgradientPointError

logger = logging.getLogger(__name__)

XYWH = Tuple[float, float, float, float]
RotPair = Tuple[float, float]


@dataclass(frozen=True)
class LossWeights:
    """Gamma weights for the obj, bbox, cls and rotation terms."""
    g_obj: float = DEFAULT_LOSS_WEIGHTS[0]
    g_bbox: float = DEFAULT_LOSS_WEIGHTS[1]
    g_cls: float = DEFAULT_LOSS_WEIGHTS[2]
    g_ryz: float = DEFAULT_LOSS_WEIGHTS[3]

    def __post_init__(self):
        values = (self.g_obj, self.g_bbox, self.g_cls, self.g_ryz)
        if any(not math.isfinite(v) or v < 0 for v in values):
            raise ValueError(f"loss weights must be finite and nonnegative, got {values}")
        if all(v == 0 for v in values):
            raise ValueError("at least one loss weight must be positive")


@dataclass(frozen=True)
class LossTerms:
    l_obj: float
    l_bbox: float
    l_cls: float
    l_ryz: float

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {value}")


@dataclass(frozen=True)
class LossBreakdown:
    l_obj: float
    l_bbox: float
    l_cls: float
    l_ryz: float
    total: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LossInputs:
    """Raw values the loss is differentiated against."""
    obj_p: float
    obj_y: int
    cls_p: float
    cls_y: int
    pred_box: XYWH
    true_box: XYWH
    pred_rot: RotPair
    true_rot: RotPair


@dataclass(frozen=True)
class LossGradients:
    """Partial derivatives of the weighted total."""
    d_obj_p: float
    d_cls_p: float
    d_pred_box: XYWH  # w.r.t. (cx, cy, w, h) of the predicted box
    d_pred_rot: RotPair
    d_terms: Tuple[float, float, float, float]  # w.r.t. (l_obj, l_bbox, l_cls, l_ryz)


def _corners(box: XYWH) -> Tuple[float, float, float, float]:
    cx, cy, w, h = box
    return (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)


def iou_xywh(a: XYWH, b: XYWH) -> float:
    """IoU of two (cx, cy, w, h) boxes with positive extents."""
    ax1, ay1, ax2, ay2 = _corners(a)
    bx1, by1, bx2, by2 = _corners(b)
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return min(1.0, max(0.0, inter / union))


def iou(a: BBox2D, b: BBox2D) -> float:
    """
    Intersection over union of two image boxes.

    Args:
        a: First box
        b: Second box

    Returns:
        float: Value in [0, 1]; symmetric in its arguments
    """
    return iou_xywh((a.cx, a.cy, a.w, a.h), (b.cx, b.cy, b.w, b.h))


def _clamp_p(p: float) -> float:
    return min(max(float(p), BCE_EPS), 1.0 - BCE_EPS)


def bce(p: float, y: int) -> float:
    """Binary cross-entropy with p clamped to [eps, 1 - eps]."""
    if y not in (0, 1):
        raise ValueError(f"BCE target must be 0 or 1, got {y}")
    p = _clamp_p(p)
    return -(y * math.log(p) + (1 - y) * math.log(1.0 - p))


def rotation_mse(pred: RotPair, truth: RotPair) -> float:
    """Mean squared error over the (ry_u, rz_u) pair, in normalized units."""
    d_ry = pred[0] - truth[0]
    d_rz = pred[1] - truth[1]
    return (d_ry * d_ry + d_rz * d_rz) / 2.0


def total_loss(terms: LossTerms, w: LossWeights = LossWeights()) -> LossBreakdown:
    """
    Weighted sum of the four loss terms.

    Args:
        terms: Term values (l_bbox is 1 - IoU)
        w: Gamma weights, used as raw multipliers

    Returns:
        LossBreakdown: Terms plus their weighted total
    """
    total = w.g_obj * terms.l_obj + w.g_bbox * terms.l_bbox + w.g_cls * terms.l_cls + w.g_ryz * terms.l_ryz
    return LossBreakdown(terms.l_obj, terms.l_bbox, terms.l_cls, terms.l_ryz, total)


def loss_terms(inputs: LossInputs) -> LossTerms:
    """Evaluate the four terms from raw inputs."""
    return LossTerms(
        l_obj=bce(inputs.obj_p, inputs.obj_y),
        l_bbox=1.0 - iou_xywh(inputs.pred_box, inputs.true_box),
        l_cls=bce(inputs.cls_p, inputs.cls_y),
        l_ryz=rotation_mse(inputs.pred_rot, inputs.true_rot),
    )


def _bce_grad(p: float, y: int) -> float:
    p = _clamp_p(p)
    return -y / p + (1 - y) / (1.0 - p)


def iou_gradient(pred: XYWH, truth: XYWH) -> XYWH:
    """
    d IoU / d (cx, cy, w, h) of the predicted box.

    Raises:
        SubgradientPointError: An edge of the overlap coincides with a box
            edge, or the boxes touch with zero-width overlap
    """
    px1, py1, px2, py2 = _corners(pred)
    tx1, ty1, tx2, ty2 = _corners(truth)
    iw = min(px2, tx2) - max(px1, tx1)
    ih = min(py2, ty2) - max(py1, ty1)
    if iw < 0 or ih < 0:
        return (0.0, 0.0, 0.0, 0.0)
    if iw == 0 or ih == 0:
        raise SubgradientPointError(f"boxes {pred} and {truth} touch without overlap")
    if px1 == tx1 or px2 == tx2 or py1 == ty1 or py2 == ty2:
        raise SubgradientPointError(f"boxes {pred} and {truth} share an edge")

    pw, ph = px2 - px1, py2 - py1
    inter = iw * ih
    union = pw * ph + (tx2 - tx1) * (ty2 - ty1) - inter

    # Overlap derivatives w.r.t. the predicted corner coordinates
    d_x1 = -ih if px1 > tx1 else 0.0
    d_x2 = ih if px2 < tx2 else 0.0
    d_y1 = -iw if py1 > ty1 else 0.0
    d_y2 = iw if py2 < ty2 else 0.0

    d_inter = (
        d_x1 + d_x2,                # cx
        d_y1 + d_y2,                # cy
        (d_x2 - d_x1) / 2.0,        # w
        (d_y2 - d_y1) / 2.0,        # h
    )
    d_area = (0.0, 0.0, ph, pw)

    grads = []
    for di, da in zip(d_inter, d_area):
        d_union = da - di
        grads.append((di * union - inter * d_union) / (union * union))
    return tuple(grads)


def loss_gradients(inputs: LossInputs, w: LossWeights = LossWeights()) -> LossGradients:
    """
    Analytic gradient of the weighted total loss.

    Args:
        inputs: Raw probabilities, boxes and unit rotations
        w: Gamma weights

    Returns:
        LossGradients: Partial derivatives w.r.t. every raw input

    Raises:
        SubgradientPointError: IoU is not differentiable at the given boxes
    """
    d_iou = iou_gradient(inputs.pred_box, inputs.true_box)
    return LossGradients(
        d_obj_p=w.g_obj * _bce_grad(inputs.obj_p, inputs.obj_y),
        d_cls_p=w.g_cls * _bce_grad(inputs.cls_p, inputs.cls_y),
        d_pred_box=tuple(-w.g_bbox * d for d in d_iou),
        d_pred_rot=(
            w.g_ryz * (inputs.pred_rot[0] - inputs.true_rot[0]),
            w.g_ryz * (inputs.pred_rot[1] - inputs.true_rot[1]),
        ),
        d_terms=(w.g_obj, w.g_bbox, w.g_cls, w.g_ryz),
    )


def weighted_loss(inputs: LossInputs, w: LossWeights = LossWeights()) -> float:
    """Total loss straight from raw inputs."""
    return total_loss(loss_terms(inputs), w).total


def gamma_sweep(
    terms: LossTerms,
    g_ryz_values: Sequence[float] = GAMMA_RYZ_SWEEP,
    base: LossWeights = LossWeights(),
) -> List[Tuple[float, LossBreakdown]]:
    """Total loss for each rotation weight, other weights held at base."""
    results = []
    for g_ryz in g_ryz_values:
        weights = LossWeights(base.g_obj, base.g_bbox, base.g_cls, g_ryz)
        results.append((g_ryz, total_loss(terms, weights)))
        logger.debug(f"g_ryz={g_ryz}: total={results[-1][1].total:.6f}")
    return results
