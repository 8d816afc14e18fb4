from __future__ import annotations

import json

import pytest

from avcount.model import (
    AttributeClues,
    BoundingBox,
    CountingQuestion,
    CountTarget,
    EventClues,
    FrameBox,
    ObjectClues,
    QueryModality,
    TimeInterval,
)


def make_event_question(
    qid: str = "ev1",
    intervals=((2.0, 4.0), (7.0, 9.0)),
    reference=(0.0, 60.0),
    gt_count: int | None = None,
    modality: QueryModality = QueryModality.AV,
) -> CountingQuestion:
    clues = EventClues(tuple(TimeInterval(a, b) for a, b in intervals))
    return CountingQuestion(
        id=qid,
        video_id="vid",
        question="How many events occur?",
        modality=modality,
        target=CountTarget.EVENT,
        reference_interval=TimeInterval(*reference),
        gt_count=len(intervals) if gt_count is None else gt_count,
        clues=clues,
    )


def make_object_question(
    qid: str = "ob1",
    boxes=(("Frame1", (0.0, 0.0, 10.0, 10.0)), ("Frame2", (5.0, 5.0, 20.0, 20.0))),
    clue_frames=("Frame1", "Frame2"),
    gt_count: int | None = None,
    modality: QueryModality = QueryModality.V,
) -> CountingQuestion:
    clues = ObjectClues(tuple(FrameBox(f, BoundingBox(*b)) for f, b in boxes))
    return CountingQuestion(
        id=qid,
        video_id="vid",
        question="How many objects appear?",
        modality=modality,
        target=CountTarget.OBJECT,
        reference_interval=TimeInterval(0.0, 60.0),
        gt_count=len(boxes) if gt_count is None else gt_count,
        clues=clues,
        clue_frames=tuple(clue_frames),
    )


def make_attribute_question(
    qid: str = "at1",
    clusters={"blue": (("Frame1", (20.0, 20.0, 40.0, 40.0)),),
              "red": (("Frame1", (0.0, 0.0, 10.0, 10.0)), ("Frame2", (0.0, 0.0, 10.0, 10.0)))},
    clue_frames=("Frame1", "Frame2"),
    gt_count: int | None = None,
) -> CountingQuestion:
    clue_map = {
        label: tuple(FrameBox(f, BoundingBox(*b)) for f, b in members)
        for label, members in clusters.items()
    }
    return CountingQuestion(
        id=qid,
        video_id="vid",
        question="How many different colors appear?",
        modality=QueryModality.V,
        target=CountTarget.ATTRIBUTE,
        reference_interval=TimeInterval(0.0, 60.0),
        gt_count=len(clusters) if gt_count is None else gt_count,
        clues=AttributeClues(clue_map),
        clue_frames=tuple(clue_frames),
    )


def answer(payload: object) -> str:
    """Wrap a JSON payload in answer tags the way a well-behaved model would."""
    return f"<answer>{json.dumps(payload)}</answer>"


@pytest.fixture
def event_question() -> CountingQuestion:
    return make_event_question()


@pytest.fixture
def object_question() -> CountingQuestion:
    return make_object_question()


@pytest.fixture
def attribute_question() -> CountingQuestion:
    return make_attribute_question()
