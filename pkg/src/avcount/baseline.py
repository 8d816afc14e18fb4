"""Seeded random-prediction generator (the scoreboard's floor).

Counts are uniform over [1, max_count]; white-box answers are random but
always structurally valid, so the baseline exercises every metric while
scoring perfect instruction following.
"""

from __future__ import annotations

import json
import random
from typing import Iterator, Sequence

from .model import CountingQuestion, CountTarget, RawModelOutput, Setting

DEFAULT_MAX_COUNT = 76  # upper end of the benchmark's count range

_IMAGE_W = 1280.0
_IMAGE_H = 720.0


def _random_interval(rng: random.Random, lo: float, hi: float) -> list[str]:
    if hi <= lo:
        hi = lo + 1.0
    a, b = sorted((rng.uniform(lo, hi), rng.uniform(lo, hi)))
    return [f"{a:.2f}", f"{b:.2f}"]


def _random_box(rng: random.Random) -> list[float]:
    x0 = rng.uniform(0.0, _IMAGE_W - 2.0)
    y0 = rng.uniform(0.0, _IMAGE_H - 2.0)
    x1 = rng.uniform(x0 + 1.0, _IMAGE_W)
    y1 = rng.uniform(y0 + 1.0, _IMAGE_H)
    return [round(x0, 1), round(y0, 1), round(x1, 1), round(y1, 1)]


def _event_answer(rng: random.Random, q: CountingQuestion) -> str:
    ref = q.reference_interval
    n = rng.randint(1, 8)
    segments = [_random_interval(rng, ref.start_s, ref.end_s) for _ in range(n)]
    return f"<answer>{json.dumps(segments)}</answer>"


def _frame_keys(q: CountingQuestion) -> list[str]:
    return list(q.clue_frames) if q.clue_frames else ["Frame1"]


def _object_answer(rng: random.Random, q: CountingQuestion) -> str:
    payload = {}
    for frame in _frame_keys(q):
        n = rng.choice([0, 0, 1, 1, 2])
        payload[frame] = [_random_box(rng) for _ in range(n)]
    return f"<answer>{json.dumps(payload)}</answer>"


def _attribute_answer(rng: random.Random, q: CountingQuestion) -> str:
    payload = {}
    for frame in _frame_keys(q):
        n = rng.choice([0, 1, 1, 2])
        payload[frame] = [
            {"bbox": _random_box(rng), "label": f"Cluster {rng.randint(1, 3)}"}
            for _ in range(n)
        ]
    return f"<answer>{json.dumps(payload)}</answer>"


def generate_baseline(
    questions: Sequence[CountingQuestion],
    max_count: int = DEFAULT_MAX_COUNT,
    seed: int = 0,
    settings: Sequence[Setting] = (Setting.LONG_ACC, Setting.REF_ACC, Setting.WHITE_BOX),
) -> Iterator[RawModelOutput]:
    """Yield one random prediction per question per requested setting."""
    if max_count < 1:
        raise ValueError(f"max_count must be >= 1, got {max_count}")
    rng = random.Random(seed)
    for q in questions:
        for setting in settings:
            if setting in (Setting.LONG_ACC, Setting.REF_ACC):
                text = str(rng.randint(1, max_count))
            elif q.target is CountTarget.EVENT:
                text = _event_answer(rng, q)
            elif q.target is CountTarget.OBJECT:
                text = _object_answer(rng, q)
            else:
                text = _attribute_answer(rng, q)
            yield RawModelOutput(sample_id=q.id, setting=setting, text=text)
