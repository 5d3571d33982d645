"""
Detection evaluation: greedy matching, AP / mAP, rotation MSE and
confidence-sweep curves, plus report and CSV writers.
"""

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .annotate import AnnotationRecord, BBox2D
from .config import CURVE_POINTS, DEFAULT_IOU_THRESHOLD
from .losses import iou, rotation_mse
from .rotation import ParkClass, UnitRotation

logger = logging.getLogger(__name__)

CURVE_FILES = {
    "f1_confidence.csv": ("threshold", "f1"),
    "precision_confidence.csv": ("threshold", "precision"),
    "recall_confidence.csv": ("threshold", "recall"),
    "precision_recall.csv": ("threshold", "recall", "precision"),
    "curves.csv": ("threshold", "precision", "recall", "f1"),
}


@dataclass(frozen=True)
class Detection:
    """One predicted bike: class, box, confidence and unit rotations."""
    class_id: int
    box: BBox2D
    confidence: float
    ry_u: float
    rz_u: float

    def __post_init__(self):
        if self.class_id not in (0, 1, 2):
            raise ValueError(f"class_id must be 0, 1 or 2, got {self.class_id}")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")
        object.__setattr__(self, "ry_u", UnitRotation(self.ry_u).u)
        object.__setattr__(self, "rz_u", UnitRotation(self.rz_u).u)


@dataclass(frozen=True)
class MatchResult:
    """Matched (detection, truth, iou) triples in matching order plus leftovers."""
    pairs: Tuple[Tuple[int, int, float], ...]
    unmatched_dets: Tuple[int, ...]
    unmatched_truths: Tuple[int, ...]


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    precision: float
    recall: float
    f1: float


@dataclass
class EvalReport:
    """Dataset-level evaluation; None marks an undefined value."""
    iou_threshold: float
    ap: Dict[int, Optional[float]]
    map: Optional[float]
    rotation_mse: Optional[float]
    matched_pairs: int
    per_class_matches: Dict[int, int]
    per_class_truths: Dict[int, int]
    curves: List[CurvePoint] = field(default_factory=list)
    mse_units: str = "normalized"

    def to_dict(self) -> dict:
        """Convert report to dictionary (class keys by name)."""
        return {
            "iou_threshold": self.iou_threshold,
            "ap": {ParkClass(c).name.lower(): v for c, v in sorted(self.ap.items())},
            "map": self.map,
            "rotation_mse": self.rotation_mse,
            "mse_units": self.mse_units,
            "matched_pairs": self.matched_pairs,
            "per_class_matches": {ParkClass(c).name.lower(): n for c, n in sorted(self.per_class_matches.items())},
            "per_class_truths": {ParkClass(c).name.lower(): n for c, n in sorted(self.per_class_truths.items())},
            "curve_points": len(self.curves),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def match_detections(
    dets: Sequence[Detection],
    truths: Sequence[AnnotationRecord],
    iou_thresh: float = DEFAULT_IOU_THRESHOLD,
) -> MatchResult:
    """
    Greedy class-aware matching of one image's detections to its truths.

    Detections are visited by descending confidence (stable on input order);
    each claims the unmatched same-class truth with the highest IoU at or
    above iou_thresh, lower truth index on ties.
    """
    if not (0.0 < iou_thresh < 1.0):
        raise ValueError(f"iou_thresh must lie in (0, 1), got {iou_thresh}")

    order = sorted(range(len(dets)), key=lambda i: -dets[i].confidence)
    taken = [False] * len(truths)
    pairs = []
    unmatched = []
    for d in order:
        best, best_iou = -1, -1.0
        for t, truth in enumerate(truths):
            if taken[t] or truth.class_id != dets[d].class_id:
                continue
            overlap = iou(dets[d].box, truth.box)
            if overlap >= iou_thresh and overlap > best_iou:
                best, best_iou = t, overlap
        if best < 0:
            unmatched.append(d)
        else:
            taken[best] = True
            pairs.append((d, best, best_iou))

    return MatchResult(
        pairs=tuple(pairs),
        unmatched_dets=tuple(sorted(unmatched)),
        unmatched_truths=tuple(t for t in range(len(truths)) if not taken[t]),
    )


def envelope_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    """All-point AP: area under the monotone precision envelope."""
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(mpre.size - 1, 0, -1):
        mpre[i - 1] = max(mpre[i - 1], mpre[i])
    idx = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


def _class_ap(scored: List[Tuple[float, bool]], n_truths: int) -> Optional[float]:
    """AP of one class from (confidence, is_tp) in dataset order."""
    if n_truths == 0:
        return None
    if not scored:
        return 0.0
    ranked = sorted(scored, key=lambda s: -s[0])
    tp = np.cumsum([1.0 if hit else 0.0 for _, hit in ranked])
    fp = np.cumsum([0.0 if hit else 1.0 for _, hit in ranked])
    return envelope_ap(tp / n_truths, tp / (tp + fp))


def _mean_ap(ap: Dict[int, Optional[float]]) -> Optional[float]:
    defined = [v for _, v in sorted(ap.items()) if v is not None]
    if not defined:
        return None
    return sum(defined) / len(defined)


def _scored_by_class(
    images: Sequence[Tuple[Sequence[Detection], MatchResult]],
) -> Dict[int, List[Tuple[float, bool]]]:
    scored: Dict[int, List[Tuple[float, bool]]] = {int(c): [] for c in ParkClass}
    for dets, match in images:
        hits = {d for d, _, _ in match.pairs}
        for i, det in enumerate(dets):
            scored[det.class_id].append((det.confidence, i in hits))
    return scored


def average_precision(
    dets: Sequence[Detection],
    truths: Sequence[AnnotationRecord],
    iou_thresh: float = DEFAULT_IOU_THRESHOLD,
) -> Tuple[Dict[int, Optional[float]], Optional[float]]:
    """
    Per-class AP and mAP for a single image.

    Returns:
        Tuple: ({class_id: AP or None when the class has no truths}, mAP or None)
    """
    match = match_detections(dets, truths, iou_thresh)
    scored = _scored_by_class([(dets, match)])
    ap = {}
    for c in ParkClass:
        n_truths = sum(1 for t in truths if t.class_id == c)
        ap[int(c)] = _class_ap(scored[int(c)], n_truths)
    return ap, _mean_ap(ap)


def curve_thresholds(points: int = CURVE_POINTS) -> List[float]:
    """Evenly spaced confidence thresholds 0.00 ... 1.00."""
    return [i / (points - 1) for i in range(points)]


def confidence_curves(
    images: Sequence[Tuple[Sequence[Detection], MatchResult]],
    n_truths: int,
    points: int = CURVE_POINTS,
) -> List[CurvePoint]:
    """
    Precision, recall and F1 over all classes for detections with confidence >= t.
    Precision is 0 where no detection survives the threshold.
    """
    scored = [s for per_class in _scored_by_class(images).values() for s in per_class]
    curves = []
    for t in curve_thresholds(points):
        kept = [hit for conf, hit in scored if conf >= t]
        tp = sum(1 for hit in kept if hit)
        precision = tp / len(kept) if kept else 0.0
        recall = tp / n_truths if n_truths else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        curves.append(CurvePoint(t, precision, recall, f1))
    return curves


def eval_dataset(
    dets_per_image: Sequence[Sequence[Detection]],
    truths_per_image: Sequence[Sequence[AnnotationRecord]],
    iou_thresh: float = DEFAULT_IOU_THRESHOLD,
) -> EvalReport:
    """
    Evaluate aligned per-image detection and truth lists.

    Args:
        dets_per_image: Detections for each image
        truths_per_image: Ground truth for each image, same order
        iou_thresh: Matching threshold in (0, 1)

    Returns:
        EvalReport: AP per class, mAP, rotation MSE over matched pairs, curves
    """
    if len(dets_per_image) != len(truths_per_image):
        raise ValueError(
            f"{len(dets_per_image)} detection lists but {len(truths_per_image)} truth lists"
        )

    images = []
    mse_sum = 0.0
    n_pairs = 0
    per_class_matches = {int(c): 0 for c in ParkClass}
    per_class_truths = {int(c): 0 for c in ParkClass}

    for dets, truths in zip(dets_per_image, truths_per_image):
        match = match_detections(dets, truths, iou_thresh)
        images.append((dets, match))
        for truth in truths:
            per_class_truths[truth.class_id] += 1
        for d, t, _ in match.pairs:
            det, truth = dets[d], truths[t]
            mse_sum += rotation_mse((det.ry_u, det.rz_u), (truth.ry_u, truth.rz_u))
            n_pairs += 1
            per_class_matches[det.class_id] += 1

    scored = _scored_by_class(images)
    ap = {c: _class_ap(scored[c], per_class_truths[c]) for c in sorted(per_class_truths)}
    report = EvalReport(
        iou_threshold=iou_thresh,
        ap=ap,
        map=_mean_ap(ap),
        rotation_mse=mse_sum / n_pairs if n_pairs else None,
        matched_pairs=n_pairs,
        per_class_matches=per_class_matches,
        per_class_truths=per_class_truths,
        curves=confidence_curves(images, sum(per_class_truths.values())),
    )
    logger.info(
        f"Evaluated {len(images)} images: mAP={report.map}, "
        f"rotation MSE={report.rotation_mse} over {n_pairs} pairs"
    )
    return report


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def curve_tables(report: EvalReport) -> Dict[str, str]:
    """CSV text of the four panel tables plus the combined curves.csv, keyed by file name."""
    tables = {}
    for name, columns in CURVE_FILES.items():
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(columns)
        for point in report.curves:
            writer.writerow([_fmt(getattr(point, col)) for col in columns])
        tables[name] = buffer.getvalue()
    return tables
