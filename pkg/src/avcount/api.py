"""Line-buffered op-call protocol for in-process language bindings.

A host process spawns ``avcount api``, writes one request per line
({"id", "op", "args"}), and reads one response per line ({"id", "result"}
or {"id", "error"}). Every op delegates to the same functions the batch
commands use, so bindings can never drift from the engine.
"""

from __future__ import annotations

import json
import sys
from typing import TextIO

from .extract import (
    extract_tagged,
    key_completeness,
    parse_attribute_answer,
    parse_count_answer,
    parse_event_answer,
    parse_object_answer,
    recover_json,
)
from .model import (
    AttributeBoxes,
    BoundingBox,
    Count,
    EventSegments,
    ObjectBoxes,
    ParsedAnswer,
    TimeInterval,
)
from .rewards import (
    RewardWeights,
    compute_reward_from_request,
    reward_acc,
    reward_gformat,
    reward_iou,
    reward_jformat,
    reward_rmae,
)


def parsed_answer_to_dict(parsed: ParsedAnswer) -> dict:
    if isinstance(parsed, Count):
        return {"kind": "count", "value": parsed.value}
    if isinstance(parsed, EventSegments):
        return {"kind": "events",
                "segments": [[iv.start_s, iv.end_s] for iv in parsed.segments]}
    if isinstance(parsed, ObjectBoxes):
        return {
            "kind": "object_boxes",
            "by_frame": {
                frame: [[b.x_min, b.y_min, b.x_max, b.y_max] for b in boxes]
                for frame, boxes in parsed.by_frame.items()
            },
            "n_dropped": parsed.n_dropped,
        }
    if isinstance(parsed, AttributeBoxes):
        return {
            "kind": "attribute_boxes",
            "by_frame": {
                frame: [{"bbox": [b.x_min, b.y_min, b.x_max, b.y_max], "label": label}
                        for b, label in items]
                for frame, items in parsed.by_frame.items()
            },
            "n_dropped": parsed.n_dropped,
        }
    return {"kind": "failure", "reason": parsed.reason}


def _require(args: dict, key: str, types) -> object:
    if key not in args:
        raise ValueError(f"missing argument {key!r}")
    value = args[key]
    if not isinstance(value, types):
        raise ValueError(f"argument {key!r} has wrong type {type(value).__name__}")
    return value


def _as_intervals(raw: object, name: str) -> list[TimeInterval]:
    if not isinstance(raw, list):
        raise ValueError(f"{name} must be a list of [start, end] pairs")
    out = []
    for item in raw:
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            raise ValueError(f"{name} must be a list of [start, end] pairs")
        out.append(TimeInterval(float(item[0]), float(item[1])))
    return out


def _as_boxes(raw: object, name: str) -> list[BoundingBox]:
    if not isinstance(raw, list):
        raise ValueError(f"{name} must be a list of 4-number boxes")
    out = []
    for item in raw:
        if not isinstance(item, (list, tuple)) or len(item) != 4:
            raise ValueError(f"{name} must be a list of 4-number boxes")
        out.append(BoundingBox(*(float(v) for v in item)))
    return out


def call_op(op: str, args: dict) -> object:
    """Dispatch one op call; raises ValueError on anything malformed."""
    if op == "compute_reward":
        weights = RewardWeights()
        if "weights" in args:
            w = _require(args, "weights", dict)
            weights = RewardWeights(float(w.get("format", 1.0)), float(w.get("task", 1.0)))
        request = {k: args[k] for k in ("task", "raw_text", "gt", "id") if k in args}
        return compute_reward_from_request(request, weights)
    if op == "reward_gformat":
        return reward_gformat(_require(args, "text", str))
    if op == "reward_jformat":
        keys = _require(args, "required_keys", list)
        return reward_jformat(_require(args, "text", str), {str(k) for k in keys})
    if op == "reward_acc":
        pred = args.get("pred")
        if pred is not None and not isinstance(pred, str):
            raise ValueError("argument 'pred' must be a string or null")
        return reward_acc(pred, _require(args, "gt", str))
    if op == "reward_iou":
        kind = _require(args, "kind", str)
        if kind == "temporal":
            preds = _as_intervals(args.get("preds", []), "preds")
            gts = _as_intervals(args.get("gts", []), "gts")
        elif kind == "spatial":
            preds = _as_boxes(args.get("preds", []), "preds")
            gts = _as_boxes(args.get("gts", []), "gts")
        else:
            raise ValueError(f"unknown IoU kind {kind!r}")
        return reward_iou(preds, gts, kind)
    if op == "reward_rmae":
        pred = args.get("pred_count")
        if pred is not None and (isinstance(pred, bool) or not isinstance(pred, int)):
            raise ValueError("argument 'pred_count' must be an integer or null")
        gt = _require(args, "gt_count", int)
        if isinstance(gt, bool) or gt < 0:
            raise ValueError("argument 'gt_count' must be a non-negative integer")
        return reward_rmae(pred, gt)
    if op == "parse_count_answer":
        return parsed_answer_to_dict(parse_count_answer(_require(args, "text", str)))
    if op == "parse_event_answer":
        return parsed_answer_to_dict(parse_event_answer(_require(args, "text", str)))
    if op == "parse_object_answer":
        return parsed_answer_to_dict(parse_object_answer(_require(args, "text", str)))
    if op == "parse_attribute_answer":
        return parsed_answer_to_dict(parse_attribute_answer(_require(args, "text", str)))
    if op == "recover_json":
        rec = recover_json(_require(args, "text", str))
        return {"m": rec.m, "value": rec.value}
    if op == "key_completeness":
        keys = _require(args, "required_keys", list)
        s, n_complete, n_total = key_completeness(args.get("value"), {str(k) for k in keys})
        return {"s": s, "n_complete": n_complete, "n_total": n_total}
    if op == "extract_tagged":
        return extract_tagged(_require(args, "text", str), _require(args, "tag", str))
    raise ValueError(f"unknown op {op!r}")


def serve(stdin: TextIO = sys.stdin, stdout: TextIO = sys.stdout) -> None:
    """Serve op calls until EOF; one JSON response line per request line."""
    for line in stdin:
        if not line.strip():
            continue
        response: dict = {}
        try:
            doc = json.loads(line)
            if not isinstance(doc, dict):
                raise ValueError("request must be a JSON object")
            if "id" in doc:
                response["id"] = doc["id"]
            op = doc.get("op")
            if not isinstance(op, str):
                raise ValueError("missing op")
            args = doc.get("args", {})
            if not isinstance(args, dict):
                raise ValueError("args must be an object")
            response["result"] = call_op(op, args)
        except ValueError as e:
            response["error"] = str(e)
        stdout.write(json.dumps(response, ensure_ascii=False) + "\n")
        stdout.flush()
