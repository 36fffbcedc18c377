"""Annotation and prediction files, and corpus statistics.

Annotation files hold one image each; every line is ``class_id cx cy w h``
with geometry normalized to [0, 1]. The image id is the file stem.
Prediction files are JSON Lines with fields ``image_id, class_id, score,
x1, y1, x2, y2`` in absolute pixels.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .boxes import Box, Detection


class ParseError(ValueError):
    """A line could not be parsed; message carries file and line number."""


class ValidationError(ValueError):
    """A parsed value is out of its allowed range."""


@dataclass(frozen=True)
class AnnotationRecord:
    image_id: str
    class_id: int
    cx: float
    cy: float
    w: float
    h: float


def _parse_line(line: str, image_id: str, where: str) -> AnnotationRecord:
    fields = line.split()
    if len(fields) != 5:
        raise ParseError(f"{where}: expected 5 fields 'class_id cx cy w h', got {len(fields)}")
    try:
        class_id = int(fields[0])
        cx, cy, w, h = (float(f) for f in fields[1:])
    except ValueError as exc:
        raise ParseError(f"{where}: {exc}") from None
    if not all(0.0 <= v <= 1.0 for v in (cx, cy, w, h)):
        raise ValidationError(f"{where}: geometry must lie in [0, 1], got {cx} {cy} {w} {h}")
    if w <= 0 or h <= 0:
        raise ValidationError(f"{where}: width and height must be positive")
    if class_id < 0:
        raise ValidationError(f"{where}: negative class id {class_id}")
    return AnnotationRecord(image_id, class_id, cx, cy, w, h)


def parse_annotation_file(path) -> list[AnnotationRecord]:
    path = Path(path)
    records = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                records.append(_parse_line(line, path.stem, f"{path}:{lineno}"))
    return records


def annotation_files(source) -> list[Path]:
    """``source`` is a directory of ``*.txt`` files or an iterable of paths."""
    if isinstance(source, (str, Path)):
        root = Path(source)
        if not root.is_dir():
            raise FileNotFoundError(f"annotation directory not found: {root}")
        return sorted(root.glob("*.txt"))
    return sorted(Path(p) for p in source)


def parse_annotations(source) -> dict[str, list[AnnotationRecord]]:
    """Parse a corpus into ``image_id -> records``; empty files map to []."""
    return {p.stem: parse_annotation_file(p) for p in annotation_files(source)}


def boxes_from(record: AnnotationRecord, width: float, height: float) -> Box:
    return Box(
        (record.cx - record.w / 2) * width,
        (record.cy - record.h / 2) * height,
        (record.cx + record.w / 2) * width,
        (record.cy + record.h / 2) * height,
    )


def normalize_box(box: Box, width: float, height: float) -> tuple[float, float, float, float]:
    """Corner box in pixels -> normalized (cx, cy, w, h)."""
    return (
        (box.x1 + box.x2) / 2 / width,
        (box.y1 + box.y2) / 2 / height,
        (box.x2 - box.x1) / width,
        (box.y2 - box.y1) / height,
    )


def read_predictions(path) -> dict[str, list[Detection]]:
    path = Path(path)
    preds: dict[str, list[Detection]] = {}
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
                det = Detection(
                    Box(float(rec["x1"]), float(rec["y1"]), float(rec["x2"]), float(rec["y2"])),
                    float(rec["score"]),
                    int(rec["class_id"]),
                )
                image_id = str(rec["image_id"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"{where}: {exc.__class__.__name__}: {exc}") from None
            except ValueError as exc:
                raise ValidationError(f"{where}: {exc}") from None
            preds.setdefault(image_id, []).append(det)
    return preds


def write_predictions(path, preds: Mapping[str, Sequence[Detection]]) -> None:
    with Path(path).open("w") as fh:
        for image_id in sorted(preds):
            for d in preds[image_id]:
                fh.write(json.dumps({
                    "image_id": image_id, "class_id": d.class_id, "score": d.score,
                    "x1": d.box.x1, "y1": d.box.y1, "x2": d.box.x2, "y2": d.box.y2,
                }) + "\n")


HANDRAISE_BUCKETS = ("1-2", "3-5", "6+")


def _bucket(n: int) -> str | None:
    if n <= 0:
        return None
    if n <= 2:
        return "1-2"
    if n <= 5:
        return "3-5"
    return "6+"


@dataclass(frozen=True)
class DatasetStats:
    image_count: int
    label_count: int
    labels_per_image: float
    handraise_histogram: dict[str, int]

    def report(self) -> dict:
        return {
            "images": self.image_count,
            "labels": self.label_count,
            "labels_per_image": f"{self.labels_per_image:.2f}",
            "handraise_histogram": dict(self.handraise_histogram),
        }


def dataset_stats(records: Mapping[str, Iterable[AnnotationRecord]],
                  handraise_class: int | None = None) -> DatasetStats:
    """Corpus counts and the per-image hand-raise histogram.

    With ``handraise_class=None`` every label counts as a hand-raise.
    Images without hand-raise labels fall in no bucket.
    """
    hist = dict.fromkeys(HANDRAISE_BUCKETS, 0)
    labels = 0
    for recs in records.values():
        recs = list(recs)
        labels += len(recs)
        n = sum(1 for r in recs if handraise_class is None or r.class_id == handraise_class)
        b = _bucket(n)
        if b:
            hist[b] += 1
    images = len(records)
    return DatasetStats(images, labels, labels / images if images else 0.0, hist)
