"""Domain types for clue-grounded audio-visual counting samples.

Everything here is a plain frozen dataclass (or enum) so values can be
shared freely across threads. Constructors do not validate; bad annotation
data is reported by :func:`validate_question` as violation records instead
of exceptions, so a validation pass over a dirty file never aborts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Union


class QueryModality(str, Enum):
    """Which modality locates the query interval vs. carries the counted content."""

    V = "V"
    A = "A"
    A2V = "A2V"
    V2A = "V2A"
    AV = "AV"


class CountTarget(str, Enum):
    EVENT = "Event"
    OBJECT = "Object"
    ATTRIBUTE = "Attribute"


class Setting(str, Enum):
    """Prediction settings: full-video, reference-trimmed, or grounded white-box."""

    LONG_ACC = "LongAcc"
    REF_ACC = "RefAcc"
    WHITE_BOX = "WhiteBox"


@dataclass(frozen=True)
class TimeInterval:
    """Closed time span in seconds. Valid iff 0 <= start_s <= end_s, both finite."""

    start_s: float
    end_s: float

    def is_valid(self) -> bool:
        return (
            math.isfinite(self.start_s)
            and math.isfinite(self.end_s)
            and 0.0 <= self.start_s <= self.end_s
        )

    def contains(self, other: "TimeInterval") -> bool:
        return self.start_s <= other.start_s and other.end_s <= self.end_s

    def length(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in original-resolution pixel coordinates (not normalized)."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def is_valid(self) -> bool:
        return (
            all(math.isfinite(v) for v in (self.x_min, self.y_min, self.x_max, self.y_max))
            and self.x_min <= self.x_max
            and self.y_min <= self.y_max
        )

    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)


@dataclass(frozen=True)
class FrameBox:
    """A first-appearance annotation: one box on one clue frame."""

    frame_id: str
    box: BoundingBox


@dataclass(frozen=True)
class EventClues:
    intervals: tuple[TimeInterval, ...]


@dataclass(frozen=True)
class ObjectClues:
    boxes: tuple[FrameBox, ...]


@dataclass(frozen=True)
class AttributeClues:
    """Object clues grouped by the query attribute; one cluster per attribute value."""

    clusters: dict[str, tuple[FrameBox, ...]]


ClueSet = Union[EventClues, ObjectClues, AttributeClues]


@dataclass(frozen=True)
class CountingQuestion:
    """One benchmark sample.

    ``gt_count`` equals the clue cardinality: number of intervals (Event),
    number of boxes (Object), or number of clusters (Attribute). For
    attribute questions the per-cluster instance counts matter only inside
    the white-box counting penalty.
    """

    id: str
    video_id: str
    question: str
    modality: QueryModality
    target: CountTarget
    reference_interval: TimeInterval
    gt_count: int
    clues: ClueSet
    clue_frames: tuple[str, ...] = ()


# --- parsed model answers ---------------------------------------------------


@dataclass(frozen=True)
class Count:
    value: int


@dataclass(frozen=True)
class EventSegments:
    segments: tuple[TimeInterval, ...]


@dataclass(frozen=True)
class ObjectBoxes:
    """Frame-keyed box predictions; keys are normalized frame ids.

    ``n_dropped`` counts malformed box items that were discarded rather
    than repaired (e.g. a 3-coordinate box).
    """

    by_frame: dict[str, tuple[BoundingBox, ...]]
    n_dropped: int = 0


@dataclass(frozen=True)
class AttributeBoxes:
    """Frame-keyed (box, label) predictions; ``n_dropped`` counts items missing a key."""

    by_frame: dict[str, tuple[tuple[BoundingBox, str], ...]]
    n_dropped: int = 0


@dataclass(frozen=True)
class ParseFailure:
    """Extraction failed; ``reason`` is a machine-readable code, never empty."""

    reason: str


ParsedAnswer = Union[Count, EventSegments, ObjectBoxes, AttributeBoxes, ParseFailure]


@dataclass(frozen=True)
class RawModelOutput:
    sample_id: str
    setting: Setting
    text: str


# --- validation ---------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    """One broken invariant: the offending field plus a human-readable rule."""

    field: str
    rule: str


def _check_interval(name: str, interval: TimeInterval, out: list[Violation]) -> None:
    if not interval.is_valid():
        out.append(
            Violation(name, f"invalid interval [{interval.start_s}, {interval.end_s}]: "
                            "need finite 0 <= start_s <= end_s")
        )


def _check_box(name: str, box: BoundingBox, out: list[Violation]) -> None:
    if not box.is_valid():
        out.append(
            Violation(name, f"invalid box [{box.x_min}, {box.y_min}, {box.x_max}, {box.y_max}]: "
                            "need finite x_min <= x_max and y_min <= y_max")
        )


def validate_question(q: CountingQuestion) -> list[Violation]:
    """Check every sample invariant, returning violations instead of raising.

    An empty list means the sample is consistent. Only event clues are
    required to lie inside the reference interval; object/attribute clue
    frames have no annotated timestamps to check against.
    """
    out: list[Violation] = []

    _check_interval("reference_interval", q.reference_interval, out)

    if q.gt_count < 0:
        out.append(Violation("gt_count", f"gt_count must be >= 0, got {q.gt_count}"))

    clue_frame_set = set(q.clue_frames)

    if q.target is CountTarget.EVENT:
        if not isinstance(q.clues, EventClues):
            out.append(Violation("clues", f"target is Event but clues are {type(q.clues).__name__}"))
            return out
        for i, interval in enumerate(q.clues.intervals):
            _check_interval(f"clues[{i}]", interval, out)
            if interval.is_valid() and q.reference_interval.is_valid() \
                    and not q.reference_interval.contains(interval):
                out.append(Violation(
                    f"clues[{i}]",
                    f"event clue [{interval.start_s}, {interval.end_s}] outside "
                    f"reference_interval [{q.reference_interval.start_s}, {q.reference_interval.end_s}]",
                ))
        n_clues = len(q.clues.intervals)
        if q.gt_count != n_clues:
            out.append(Violation(
                "gt_count", f"count/clue mismatch: gt_count={q.gt_count} but {n_clues} event clues"))

    elif q.target is CountTarget.OBJECT:
        if not isinstance(q.clues, ObjectClues):
            out.append(Violation("clues", f"target is Object but clues are {type(q.clues).__name__}"))
            return out
        for i, fb in enumerate(q.clues.boxes):
            _check_box(f"clues[{i}].box", fb.box, out)
            if fb.frame_id not in clue_frame_set:
                out.append(Violation(
                    f"clues[{i}].frame_id",
                    f"clue frame {fb.frame_id!r} not listed in clue_frames"))
        n_clues = len(q.clues.boxes)
        if q.gt_count != n_clues:
            out.append(Violation(
                "gt_count", f"count/clue mismatch: gt_count={q.gt_count} but {n_clues} object clues"))

    elif q.target is CountTarget.ATTRIBUTE:
        if not isinstance(q.clues, AttributeClues):
            out.append(Violation("clues", f"target is Attribute but clues are {type(q.clues).__name__}"))
            return out
        if not q.clues.clusters:
            out.append(Violation("clues", "attribute question needs at least one cluster"))
        for label, members in q.clues.clusters.items():
            if not members:
                out.append(Violation(f"clues[{label!r}]", "attribute cluster is empty"))
            for i, fb in enumerate(members):
                _check_box(f"clues[{label!r}][{i}].box", fb.box, out)
                if fb.frame_id not in clue_frame_set:
                    out.append(Violation(
                        f"clues[{label!r}][{i}].frame_id",
                        f"clue frame {fb.frame_id!r} not listed in clue_frames"))
        n_clusters = len(q.clues.clusters)
        if q.gt_count != n_clusters:
            out.append(Violation(
                "gt_count",
                f"count/clue mismatch: gt_count={q.gt_count} but {n_clusters} attribute clusters"))

    return out


# --- (de)serialization --------------------------------------------------------
# Wire shapes: intervals as [start_s, end_s], boxes as [x_min, y_min, x_max, y_max],
# object clues as {"frame_id": ..., "box": [...]}, attribute clues keyed by cluster label.


class SchemaError(ValueError):
    """Raised when a JSON document does not match the declared wire schema."""


def _as_interval(value: object, where: str) -> TimeInterval:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise SchemaError(f"{where}: expected [start_s, end_s], got {value!r}")
    try:
        return TimeInterval(float(value[0]), float(value[1]))
    except (TypeError, ValueError):
        raise SchemaError(f"{where}: non-numeric interval endpoints {value!r}") from None


def _as_box(value: object, where: str) -> BoundingBox:
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise SchemaError(f"{where}: expected [x_min, y_min, x_max, y_max], got {value!r}")
    try:
        return BoundingBox(float(value[0]), float(value[1]), float(value[2]), float(value[3]))
    except (TypeError, ValueError):
        raise SchemaError(f"{where}: non-numeric box coordinates {value!r}") from None


def _as_frame_box(value: object, where: str) -> FrameBox:
    if not isinstance(value, dict) or "frame_id" not in value or "box" not in value:
        raise SchemaError(f"{where}: expected {{'frame_id': ..., 'box': [...]}}, got {value!r}")
    return FrameBox(str(value["frame_id"]), _as_box(value["box"], f"{where}.box"))


def question_to_dict(q: CountingQuestion) -> dict:
    if isinstance(q.clues, EventClues):
        clues: object = [[iv.start_s, iv.end_s] for iv in q.clues.intervals]
    elif isinstance(q.clues, ObjectClues):
        clues = [
            {"frame_id": fb.frame_id, "box": [fb.box.x_min, fb.box.y_min, fb.box.x_max, fb.box.y_max]}
            for fb in q.clues.boxes
        ]
    else:
        clues = {
            label: [
                {"frame_id": fb.frame_id,
                 "box": [fb.box.x_min, fb.box.y_min, fb.box.x_max, fb.box.y_max]}
                for fb in members
            ]
            for label, members in q.clues.clusters.items()
        }
    return {
        "id": q.id,
        "video_id": q.video_id,
        "question": q.question,
        "modality": q.modality.value,
        "target": q.target.value,
        "reference_interval": [q.reference_interval.start_s, q.reference_interval.end_s],
        "gt_count": q.gt_count,
        "clues": clues,
        "clue_frames": list(q.clue_frames),
    }


def question_from_dict(doc: dict) -> CountingQuestion:
    if not isinstance(doc, dict):
        raise SchemaError(f"expected a JSON object per line, got {type(doc).__name__}")
    missing = {"id", "video_id", "question", "modality", "target",
               "reference_interval", "gt_count", "clues"} - doc.keys()
    if missing:
        raise SchemaError(f"missing fields: {sorted(missing)}")

    try:
        modality = QueryModality(doc["modality"])
    except ValueError:
        raise SchemaError(f"modality: unknown value {doc['modality']!r}") from None
    try:
        target = CountTarget(doc["target"])
    except ValueError:
        raise SchemaError(f"target: unknown value {doc['target']!r}") from None

    raw_clues = doc["clues"]
    if target is CountTarget.EVENT:
        if not isinstance(raw_clues, list):
            raise SchemaError("clues: Event clues must be a list of intervals")
        clues: ClueSet = EventClues(
            tuple(_as_interval(v, f"clues[{i}]") for i, v in enumerate(raw_clues)))
    elif target is CountTarget.OBJECT:
        if not isinstance(raw_clues, list):
            raise SchemaError("clues: Object clues must be a list of frame/box records")
        clues = ObjectClues(
            tuple(_as_frame_box(v, f"clues[{i}]") for i, v in enumerate(raw_clues)))
    else:
        if not isinstance(raw_clues, dict):
            raise SchemaError("clues: Attribute clues must map cluster label -> records")
        clusters: dict[str, tuple[FrameBox, ...]] = {}
        for label, members in raw_clues.items():
            if not isinstance(members, list):
                raise SchemaError(f"clues[{label!r}]: expected a list of frame/box records")
            clusters[str(label)] = tuple(
                _as_frame_box(v, f"clues[{label!r}][{i}]") for i, v in enumerate(members))
        clues = AttributeClues(clusters)

    gt_count = doc["gt_count"]
    if not isinstance(gt_count, int) or isinstance(gt_count, bool):
        raise SchemaError(f"gt_count: expected an integer, got {gt_count!r}")

    return CountingQuestion(
        id=str(doc["id"]),
        video_id=str(doc["video_id"]),
        question=str(doc["question"]),
        modality=modality,
        target=target,
        reference_interval=_as_interval(doc["reference_interval"], "reference_interval"),
        gt_count=gt_count,
        clues=clues,
        clue_frames=tuple(str(f) for f in doc.get("clue_frames", [])),
    )


def raw_output_to_dict(r: RawModelOutput) -> dict:
    return {"sample_id": r.sample_id, "setting": r.setting.value, "text": r.text}


def raw_output_from_dict(doc: dict) -> RawModelOutput:
    if not isinstance(doc, dict):
        raise SchemaError(f"expected a JSON object per line, got {type(doc).__name__}")
    missing = {"sample_id", "setting", "text"} - doc.keys()
    if missing:
        raise SchemaError(f"missing fields: {sorted(missing)}")
    try:
        setting = Setting(doc["setting"])
    except ValueError:
        raise SchemaError(f"setting: unknown value {doc['setting']!r}") from None
    return RawModelOutput(str(doc["sample_id"]), setting, str(doc["text"]))
