"""Fuse recorded behavior streams with track identities.

Three inputs are merged per second of video:

* tracks: per-frame boxes with identities from a tracker;
* continuous actions (sit, stand, read, ...), detected once per second on the
  keyframe and valid for every frame of that second;
* hand-raise detections from the 1 fps branch.

Events are matched to the tracks present on that second's keyframe by greedy
one-to-one IoU assignment. Labels landing on the same track are unioned;
events that match no track are kept as unassigned records.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .boxes import Box, iou
from .dataset import ParseError, ValidationError

ACTION_LABELS = frozenset({"sit", "stand", "read", "write", "talk", "listen", "walk"})
HANDRAISE = "hand-raising"
UNASSIGNED = None
UNASSIGNED_ID = -1  # serialized form


@dataclass(frozen=True)
class TrackEvent:
    frame: int
    track_id: int
    box: Box


@dataclass(frozen=True)
class ActionEvent:
    second: int
    box: Box
    labels: Mapping[str, float]

    def __post_init__(self):
        if not self.labels:
            raise ValidationError("action event needs at least one label")
        for name, score in self.labels.items():
            if name not in ACTION_LABELS:
                raise ValidationError(f"unknown action label {name!r}")
            if not 0.0 <= score <= 1.0:
                raise ValidationError(f"label score {score} outside [0, 1]")
        if self.second < 0:
            raise ValidationError(f"negative second {self.second}")


@dataclass(frozen=True)
class HandRaiseEvent:
    second: int
    box: Box
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"hand-raise score {self.score} outside [0, 1]")
        if self.second < 0:
            raise ValidationError(f"negative second {self.second}")


@dataclass(frozen=True)
class BehaviorRecord:
    track_id: int | None
    second: int
    behaviors: frozenset[str]
    box: Box
    sources: tuple[tuple[str, int], ...] = field(default=(), compare=False)
    """Contributing events as ``("action" | "handraise", input index)``."""


@dataclass(frozen=True)
class FusionConfig:
    fps: int = 30
    iou_min: float = 0.3

    def __post_init__(self):
        if self.fps < 1:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if not 0.0 <= self.iou_min <= 1.0:
            raise ValueError(f"iou_min {self.iou_min} outside [0, 1]")


def keyframe_of(second: int, fps: int = 30) -> int:
    return second * fps


def frames_covered(second: int, fps: int = 30) -> range:
    return range(second * fps, (second + 1) * fps)


def propagate(actions: Sequence[ActionEvent], fps: int = 30) -> dict[int, list[ActionEvent]]:
    """Frame -> action events valid on that frame."""
    coverage: dict[int, list[ActionEvent]] = defaultdict(list)
    for ev in actions:
        for f in frames_covered(ev.second, fps):
            coverage[f].append(ev)
    return dict(coverage)


def assign(boxes: Sequence[Box], tracks: Sequence[TrackEvent], iou_min: float) -> list[int | None]:
    """Greedy one-to-one matching of event boxes to tracks by descending IoU.

    Returns, per event, the position of its track in ``tracks`` or None.
    Equal IoUs resolve by event order, then track order (never by id).
    """
    pairs = sorted(
        ((iou(b, t.box), i, j) for i, b in enumerate(boxes) for j, t in enumerate(tracks)),
        key=lambda p: (-p[0], p[1], p[2]),
    )
    out: list[int | None] = [None] * len(boxes)
    used = set()
    for v, i, j in pairs:
        if v < iou_min:
            break
        if out[i] is None and j not in used:
            out[i] = j
            used.add(j)
    return out


def _index_tracks(tracks: Sequence[TrackEvent]) -> dict[int, list[TrackEvent]]:
    by_frame: dict[int, list[TrackEvent]] = defaultdict(list)
    seen = set()
    for t in tracks:
        key = (t.frame, t.track_id)
        if key in seen:
            raise ValidationError(f"duplicate track record: frame={t.frame} track_id={t.track_id}")
        seen.add(key)
        by_frame[t.frame].append(t)
    return by_frame


def fuse(tracks: Sequence[TrackEvent], actions: Sequence[ActionEvent],
         handraises: Sequence[HandRaiseEvent], config: FusionConfig = FusionConfig()
         ) -> list[BehaviorRecord]:
    by_frame = _index_tracks(tracks)
    act_by_sec: dict[int, list[int]] = defaultdict(list)
    hr_by_sec: dict[int, list[int]] = defaultdict(list)
    for i, ev in enumerate(actions):
        act_by_sec[ev.second].append(i)
    for i, ev in enumerate(handraises):
        hr_by_sec[ev.second].append(i)

    records: list[BehaviorRecord] = []
    for sec in sorted(set(act_by_sec) | set(hr_by_sec)):
        present = by_frame.get(keyframe_of(sec, config.fps), [])
        labels: dict[int, set[str]] = defaultdict(set)
        sources: dict[int, list[tuple[str, int]]] = defaultdict(list)
        loose: list[BehaviorRecord] = []

        a_idx = act_by_sec.get(sec, [])
        for i, j in zip(a_idx, assign([actions[i].box for i in a_idx], present, config.iou_min)):
            ev = actions[i]
            if j is None:
                loose.append(BehaviorRecord(UNASSIGNED, sec, frozenset(ev.labels), ev.box,
                                            (("action", i),)))
            else:
                labels[j].update(ev.labels)
                sources[j].append(("action", i))

        h_idx = hr_by_sec.get(sec, [])
        for i, j in zip(h_idx, assign([handraises[i].box for i in h_idx], present, config.iou_min)):
            ev = handraises[i]
            if j is None:
                loose.append(BehaviorRecord(UNASSIGNED, sec, frozenset({HANDRAISE}), ev.box,
                                            (("handraise", i),)))
            else:
                labels[j].add(HANDRAISE)
                sources[j].append(("handraise", i))

        matched = [
            BehaviorRecord(present[j].track_id, sec, frozenset(labels[j]), present[j].box,
                           tuple(sources[j]))
            for j in labels
        ]
        matched.sort(key=lambda r: r.track_id)
        records.extend(matched)
        records.extend(loose)
    return records


def record_to_dict(rec: BehaviorRecord) -> dict:
    return {
        "track_id": UNASSIGNED_ID if rec.track_id is UNASSIGNED else rec.track_id,
        "second": rec.second,
        "behaviors": ",".join(sorted(rec.behaviors)),
        "x1": float(rec.box.x1), "y1": float(rec.box.y1),
        "x2": float(rec.box.x2), "y2": float(rec.box.y2),
    }


def dumps_records(records: Sequence[BehaviorRecord]) -> str:
    return "".join(json.dumps(record_to_dict(r)) + "\n" for r in records)


def write_records(path, records: Sequence[BehaviorRecord]) -> None:
    Path(path).write_text(dumps_records(records))


def _read_jsonl(path, build):
    path = Path(path)
    out = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                out.append(build(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"{where}: {exc.__class__.__name__}: {exc}") from None
            except ValueError as exc:
                raise ValidationError(f"{where}: {exc}") from None
    return out


def _box(d) -> Box:
    return Box(float(d["x1"]), float(d["y1"]), float(d["x2"]), float(d["y2"]))


def _nonneg_int(v, name: str) -> int:
    if isinstance(v, bool) or int(v) != v or v < 0:
        raise ValidationError(f"{name} must be a non-negative integer, got {v!r}")
    return int(v)


def read_tracks(path) -> list[TrackEvent]:
    # -1 is reserved for unassigned records in the output file
    tracks = _read_jsonl(path, lambda d: TrackEvent(_nonneg_int(d["frame"], "frame"),
                                                    _nonneg_int(d["track_id"], "track_id"),
                                                    _box(d)))
    seen = {}
    for lineno, t in enumerate(tracks, 1):
        key = (t.frame, t.track_id)
        if key in seen:
            raise ValidationError(
                f"{path}: record {lineno}: duplicate track record frame={t.frame} "
                f"track_id={t.track_id} (first at record {seen[key]})"
            )
        seen[key] = lineno
    return tracks


def read_actions(path) -> list[ActionEvent]:
    def build(d):
        labels = d["labels"]
        if not isinstance(labels, dict):
            raise TypeError("labels must be an object mapping label to score")
        return ActionEvent(_nonneg_int(d["second"], "second"), _box(d),
                           {str(k): float(v) for k, v in labels.items()})
    return _read_jsonl(path, build)


def read_handraises(path) -> list[HandRaiseEvent]:
    return _read_jsonl(path, lambda d: HandRaiseEvent(_nonneg_int(d["second"], "second"),
                                                      _box(d), float(d["score"])))
