"""
Label and prediction text files.

Label line:      class_id cx cy w h ry_u rz_u
Prediction line: class_id cx cy w h ry_u rz_u confidence

Floats are written with six decimals; one file per image, named by stem.
"""

import logging
from pathlib import Path
from typing import List, Sequence, Tuple, Union

from .annotate import AnnotationRecord, BBox2D
from .errors import LabelFormatError, PairingError
from .metrics import Detection

logger = logging.getLogger(__name__)

LABEL_FIELDS = 7
PREDICTION_FIELDS = 8


def _f(value: float) -> str:
    return f"{value:.6f}"


def format_record(record: AnnotationRecord) -> str:
    """One label line (no newline)."""
    b = record.box
    return " ".join([str(record.class_id), _f(b.cx), _f(b.cy), _f(b.w), _f(b.h),
                     _f(record.ry_u), _f(record.rz_u)])


def format_detection(det: Detection) -> str:
    """One prediction line: the label fields plus confidence."""
    b = det.box
    return " ".join([str(det.class_id), _f(b.cx), _f(b.cy), _f(b.w), _f(b.h),
                     _f(det.ry_u), _f(det.rz_u), _f(det.confidence)])


def labels_text(records: Sequence[AnnotationRecord]) -> str:
    return "".join(format_record(r) + "\n" for r in records)


def predictions_text(dets: Sequence[Detection]) -> str:
    return "".join(format_detection(d) + "\n" for d in dets)


def _parse_fields(parts: List[str], path: str, line_no: int):
    try:
        class_id = int(parts[0])
        values = [float(p) for p in parts[1:]]
    except ValueError as e:
        raise LabelFormatError(path, line_no, f"non-numeric field ({e})") from e
    return class_id, values


def parse_label_line(line: str, path: str = "<string>", line_no: int = 1) -> AnnotationRecord:
    parts = line.split()
    if len(parts) != LABEL_FIELDS:
        raise LabelFormatError(path, line_no, f"expected {LABEL_FIELDS} fields, got {len(parts)}")
    class_id, (cx, cy, w, h, ry_u, rz_u) = _parse_fields(parts, path, line_no)
    try:
        return AnnotationRecord(class_id, BBox2D(cx, cy, w, h), ry_u, rz_u)
    except ValueError as e:
        raise LabelFormatError(path, line_no, str(e)) from e


def parse_prediction_line(line: str, path: str = "<string>", line_no: int = 1) -> Detection:
    parts = line.split()
    if len(parts) != PREDICTION_FIELDS:
        raise LabelFormatError(path, line_no, f"expected {PREDICTION_FIELDS} fields, got {len(parts)}")
    class_id, (cx, cy, w, h, ry_u, rz_u, conf) = _parse_fields(parts, path, line_no)
    try:
        return Detection(class_id, BBox2D(cx, cy, w, h), conf, ry_u, rz_u)
    except ValueError as e:
        raise LabelFormatError(path, line_no, str(e)) from e


def read_labels(path: Union[str, Path]) -> List[AnnotationRecord]:
    """
    Load a label file; blank lines are skipped.

    Raises:
        LabelFormatError: A line is malformed (message names file and line)
    """
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if line.strip():
                records.append(parse_label_line(line, str(path), line_no))
    return records


def read_predictions(path: Union[str, Path]) -> List[Detection]:
    """Load a prediction file; blank lines are skipped."""
    dets = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if line.strip():
                dets.append(parse_prediction_line(line, str(path), line_no))
    return dets


def text_files(directory: Union[str, Path]) -> List[Path]:
    """*.txt files of a directory, sorted by name."""
    return sorted(p for p in Path(directory).glob("*.txt") if p.is_file())


def pair_by_stem(
    left: Sequence[Path], right: Sequence[Path], left_name: str = "left", right_name: str = "right"
) -> List[Tuple[str, Path, Path]]:
    """
    Pair two file lists by file stem, sorted by stem.

    Raises:
        PairingError: A stem exists on one side only, or twice on one side
    """
    by_stem = []
    for files, name in ((left, left_name), (right, right_name)):
        stems = {}
        for path in files:
            if path.stem in stems:
                raise PairingError(f"Duplicate stem '{path.stem}' in {name}: {stems[path.stem].name}, {path.name}")
            stems[path.stem] = path
        by_stem.append(stems)
    left_map, right_map = by_stem

    only_left = sorted(set(left_map) - set(right_map))
    only_right = sorted(set(right_map) - set(left_map))
    if only_left or only_right:
        raise PairingError(
            f"Unpaired files: {len(only_left)} only in {left_name} {only_left[:5]}, "
            f"{len(only_right)} only in {right_name} {only_right[:5]}"
        )
    pairs = [(stem, left_map[stem], right_map[stem]) for stem in sorted(left_map)]
    logger.info(f"Paired {len(pairs)} files from {left_name} and {right_name}")
    return pairs
