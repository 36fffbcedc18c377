"""Detection scoring: matching, precision/recall and average precision."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .boxes import Box, Detection, iou


@dataclass(frozen=True)
class GroundTruth:
    box: Box
    class_id: int = 0


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError(f"negative count in {self}")


@dataclass
class PRCurve:
    """(recall, precision) after each prediction of the confidence sweep."""

    points: list[tuple[float, float]] = field(default_factory=list)

    @property
    def recall(self) -> np.ndarray:
        return np.array([r for r, _ in self.points], dtype=np.float64)

    @property
    def precision(self) -> np.ndarray:
        return np.array([p for _, p in self.points], dtype=np.float64)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def precision_recall(counts: ConfusionCounts) -> tuple[float, float]:
    """Returns ``(precision, recall)``; an empty denominator gives 0."""
    return _ratio(counts.tp, counts.tp + counts.fp), _ratio(counts.tp, counts.tp + counts.fn)


def match(preds: Sequence[Detection], gts: Sequence[Box], iou_thresh: float) -> list[bool]:
    """TP flags for one image and one class, aligned with ``preds``.

    Predictions are visited by descending score (ties in input order). Each
    takes its highest-IoU unmatched ground truth if that IoU reaches the
    threshold; otherwise it is a false positive.
    """
    flags = [False] * len(preds)
    taken = [False] * len(gts)
    for i in sorted(range(len(preds)), key=lambda i: -preds[i].score):
        best, best_j = -1.0, -1
        for j, gt in enumerate(gts):
            if taken[j]:
                continue
            v = iou(preds[i].box, gt)
            if v > best:
                best, best_j = v, j
        if best_j >= 0 and best >= iou_thresh:
            taken[best_j] = True
            flags[i] = True
    return flags


def _sweep(preds: Mapping[str, Sequence[Detection]], gts: Mapping[str, Sequence[Box]],
           iou_thresh: float) -> tuple[np.ndarray, int]:
    """TP flags of all predictions in global sweep order, and the GT total."""
    ranked = []
    for image_id in sorted(preds):
        dets = preds[image_id]
        flags = match(dets, gts.get(image_id, ()), iou_thresh)
        ranked.extend((-d.score, image_id, i, f) for i, (d, f) in enumerate(zip(dets, flags)))
    ranked.sort(key=lambda t: t[:3])
    n_gt = sum(len(v) for v in gts.values())
    return np.array([t[3] for t in ranked], dtype=bool), n_gt


def pr_curve(preds: Mapping[str, Sequence[Detection]], gts: Mapping[str, Sequence[Box]],
             iou_thresh: float = 0.5) -> PRCurve:
    flags, n_gt = _sweep(preds, gts, iou_thresh)
    tp = np.cumsum(flags)
    ranks = np.arange(1, len(flags) + 1)
    recall = tp / n_gt if n_gt else np.zeros(len(flags))
    precision = tp / ranks
    return PRCurve(points=list(zip(recall.tolist(), precision.tolist())))


def confusion(preds: Mapping[str, Sequence[Detection]], gts: Mapping[str, Sequence[Box]],
              iou_thresh: float = 0.5) -> ConfusionCounts:
    flags, n_gt = _sweep(preds, gts, iou_thresh)
    tp = int(flags.sum())
    return ConfusionCounts(tp=tp, fp=len(flags) - tp, fn=n_gt - tp)


def average_precision(preds: Mapping[str, Sequence[Detection]],
                      gts: Mapping[str, Sequence[Box]],
                      iou_thresh: float = 0.5, interp: str = "all") -> float:
    """Area under the precision envelope for a single class.

    ``preds`` and ``gts`` map image ids to that image's detections and
    ground-truth boxes. ``interp="all"`` integrates the step curve at every
    recall change; ``interp="101"`` averages the envelope at 101 evenly
    spaced recall levels.
    """
    curve = pr_curve(preds, gts, iou_thresh)
    if not curve.points or not any(len(v) for v in gts.values()):
        return 0.0
    recall, precision = curve.recall, curve.precision
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    if interp == "all":
        steps = np.diff(recall, prepend=0.0)
        return float(np.sum(steps * envelope))
    if interp == "101":
        levels = np.linspace(0.0, 1.0, 101)
        idx = np.searchsorted(recall, levels, side="left")
        values = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
        return float(values.mean())
    raise ValueError(f"unknown interpolation {interp!r}; use 'all' or '101'")


def mean_average_precision(preds: Mapping[str, Sequence[Detection]],
                           gts: Mapping[str, Sequence[GroundTruth]],
                           iou_thresh: float = 0.5, interp: str = "all") -> float:
    """Unweighted mean of per-class AP over the classes present in ``gts``."""
    classes = sorted({g.class_id for v in gts.values() for g in v})
    if not classes:
        return 0.0
    aps = []
    for cls in classes:
        p = {img: [d for d in v if d.class_id == cls] for img, v in preds.items()}
        g = {img: [x.box for x in v if x.class_id == cls] for img, v in gts.items()}
        aps.append(average_precision(p, g, iou_thresh, interp))
    return float(np.mean(aps))
