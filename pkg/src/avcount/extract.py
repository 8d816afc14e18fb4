"""Fault-tolerant extraction of typed answers from raw model text.

Model outputs range from clean JSON to prose with a JSON fragment buried
inside. ``recover_json`` grades that spectrum with a multiplier m: 1.0 for
a document that parses as-is, 0.5 when a balanced bracket region had to be
cut out of surrounding text, 0.0 when nothing parseable exists. The same
machinery backs both the white-box parsers and the JSON-format reward.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional

from .model import (
    AttributeBoxes,
    BoundingBox,
    Count,
    EventSegments,
    ObjectBoxes,
    ParseFailure,
    ParsedAnswer,
    TimeInterval,
)

_INT_RE = re.compile(r"\d+")
_FRAME_DIGITS_RE = re.compile(r"(\d+)\s*$")


@dataclass(frozen=True)
class JsonRecovery:
    """Outcome of JSON recovery plus (optionally) key completeness.

    m is 1.0 for a strict whole-string parse, 0.5 for a bracket-matched
    extraction, 0.0 when both fail. s = n_complete/n_total over the parsed
    items, 1.0 vacuously when there are no items.
    """

    m: float
    value: Optional[object] = None
    s: float = 1.0
    n_complete: int = 0
    n_total: int = 0


def extract_tagged(text: str, tag: str) -> Optional[str]:
    """Return the content between the first ``<tag>`` and the last ``</tag>``.

    Greedy on purpose: models sometimes emit nested or repeated tag pairs,
    and first-open/last-close keeps everything in between.
    """
    open_tag, close_tag = f"<{tag}>", f"</{tag}>"
    start = text.find(open_tag)
    end = text.rfind(close_tag)
    if start < 0 or end < 0 or end < start + len(open_tag):
        return None
    return text[start + len(open_tag):end]


def _first_balanced_region(text: str) -> Optional[str]:
    """Find the first balanced ``{...}`` or ``[...]`` region of *text*.

    Walks forward from each opening bracket, tracking nesting depth and
    skipping brackets inside double-quoted string literals (with backslash
    escapes). Openers whose region never closes are skipped.
    """
    closer = {"{": "}", "[": "]"}
    n = len(text)
    for start in range(n):
        opener = text[start]
        if opener not in closer:
            continue
        stack = [opener]
        in_string = False
        escaped = False
        for i in range(start + 1, n):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch in closer:
                stack.append(ch)
            elif ch in ("}", "]"):
                if not stack or closer[stack[-1]] != ch:
                    break  # mismatched close; no balanced region from this opener
                stack.pop()
                if not stack:
                    return text[start:i + 1]
        # fell off the end (or mismatched) without closing: try the next opener
    return None


def recover_json(text: str) -> JsonRecovery:
    """Parse *text* as JSON, falling back to bracket-matching extraction.

    Tier 1: ``json.loads`` on the whole string -> m=1.0.
    Tier 2: strict-parse the first balanced bracket region -> m=0.5.
    Otherwise m=0.0 and no value. Failure is encoded in m, never raised.
    """
    try:
        return JsonRecovery(m=1.0, value=json.loads(text))
    except (json.JSONDecodeError, ValueError):
        pass
    region = _first_balanced_region(text)
    if region is not None:
        try:
            return JsonRecovery(m=0.5, value=json.loads(region))
        except (json.JSONDecodeError, ValueError):
            pass
    return JsonRecovery(m=0.0, value=None)


def key_completeness(value: object, required_keys: set[str]) -> tuple[float, int, int]:
    """Fraction of parsed items that carry all required keys.

    A list document is scored per item; any other document counts as a
    single item. Dict items are complete when they contain every required
    key. List items stand for positional records (e.g. a [start, end]
    pair) and are complete when their length matches the number of
    required keys. An empty list is vacuously complete (s=1), since the
    zero-prediction case is penalized by the task reward, not the format.
    """
    items = value if isinstance(value, list) else [value]
    n_total = len(items)
    if n_total == 0:
        return 1.0, 0, 0
    n_complete = 0
    for item in items:
        if isinstance(item, dict):
            if required_keys <= item.keys():
                n_complete += 1
        elif isinstance(item, (list, tuple)):
            if len(item) == len(required_keys):
                n_complete += 1
        elif not required_keys:
            n_complete += 1
    return n_complete / n_total, n_complete, n_total


def normalize_frame_key(key: str) -> str:
    """Canonicalize a frame key to its trailing digits ("Frame 2" -> "2").

    The answer formats are inconsistent about "Frame1" vs "Frame 1"; the
    digits are the identity. Keys without trailing digits are kept verbatim
    (they will simply never match an annotated clue frame).
    """
    m = _FRAME_DIGITS_RE.search(key.strip())
    return m.group(1) if m else key.strip()


def _as_float(value: object) -> Optional[float]:
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value.strip())
        except ValueError:
            return None
    return None


def parse_count_answer(text: str) -> ParsedAnswer:
    """Pull the first integer token out of a black-box counting answer.

    The prompt asks for a bare number, so the first maximal digit run is
    taken as the best-faith answer even when the model adds prose.
    """
    inner = extract_tagged(text, "answer")
    if inner is not None:
        text = inner
    m = _INT_RE.search(text)
    if m is None:
        return ParseFailure("no-integer")
    return Count(int(m.group(0)))


def _recover_answer_payload(text: str) -> object | ParseFailure:
    inner = extract_tagged(text, "answer")
    if inner is None:
        return ParseFailure("no-answer-tag")
    rec = recover_json(inner)
    if rec.m == 0.0:
        return ParseFailure("format")
    return rec.value


def parse_event_answer(text: str) -> ParsedAnswer:
    """Parse an event answer: a JSON list of [start, end] timestamp pairs.

    Timestamps may be numbers or numeric strings ("12.50"); reversed pairs
    are normalized to (min, max) so sloppy ordering is penalized through
    IoU rather than rejected outright.
    """
    payload = _recover_answer_payload(text)
    if isinstance(payload, ParseFailure):
        return payload
    if not isinstance(payload, list):
        return ParseFailure("format")
    segments = []
    for item in payload:
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            return ParseFailure("format")
        a, b = _as_float(item[0]), _as_float(item[1])
        if a is None or b is None:
            return ParseFailure("format")
        segments.append(TimeInterval(min(a, b), max(a, b)))
    return EventSegments(tuple(segments))


def _as_bbox(item: object) -> Optional[BoundingBox]:
    if not isinstance(item, (list, tuple)) or len(item) != 4:
        return None
    coords = [_as_float(v) for v in item]
    if any(c is None for c in coords):
        return None
    x0, y0, x1, y1 = coords
    return BoundingBox(min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1))


def parse_object_answer(text: str) -> ParsedAnswer:
    """Parse an object answer: frame key -> list of boxes (empty lists allowed).

    Malformed box items (wrong arity, non-numeric coords) are dropped, not
    repaired; the drop count is carried on the result.
    """
    payload = _recover_answer_payload(text)
    if isinstance(payload, ParseFailure):
        return payload
    if not isinstance(payload, dict):
        return ParseFailure("format")
    by_frame: dict[str, tuple[BoundingBox, ...]] = {}
    n_dropped = 0
    for key, items in payload.items():
        if not isinstance(items, list):
            return ParseFailure("format")
        boxes = []
        for item in items:
            box = _as_bbox(item)
            if box is None:
                n_dropped += 1
            else:
                boxes.append(box)
        frame = normalize_frame_key(str(key))
        by_frame[frame] = by_frame.get(frame, ()) + tuple(boxes)
    return ObjectBoxes(by_frame, n_dropped)


def parse_attribute_answer(text: str) -> ParsedAnswer:
    """Parse an attribute answer: frame key -> list of {"bbox": ..., "label": ...}.

    Items missing either required key are dropped and counted toward the
    sample's completeness deficit.
    """
    payload = _recover_answer_payload(text)
    if isinstance(payload, ParseFailure):
        return payload
    if not isinstance(payload, dict):
        return ParseFailure("format")
    by_frame: dict[str, tuple[tuple[BoundingBox, str], ...]] = {}
    n_dropped = 0
    for key, items in payload.items():
        if not isinstance(items, list):
            return ParseFailure("format")
        labeled = []
        for item in items:
            if not isinstance(item, dict) or "bbox" not in item or "label" not in item:
                n_dropped += 1
                continue
            box = _as_bbox(item["bbox"])
            if box is None or not isinstance(item["label"], str):
                n_dropped += 1
                continue
            labeled.append((box, item["label"]))
        frame = normalize_frame_key(str(key))
        by_frame[frame] = by_frame.get(frame, ()) + tuple(labeled)
    return AttributeBoxes(by_frame, n_dropped)
