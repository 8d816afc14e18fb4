from __future__ import annotations

import math
import random

import pytest

from avcount.blackbox import (
    SampleScore,
    aggregate,
    count_bucket,
    report_to_dict,
    report_to_table,
    score_sample,
)
from avcount.model import Count, CountTarget, ParseFailure, QueryModality


def test_exact_count():
    assert score_sample(Count(4), 4) == (True, True, 0.0)


def test_off_by_one_margin():
    assert score_sample(Count(5), 4) == (False, True, 1.0)


def test_parse_failure_uses_fallback():
    assert score_sample(ParseFailure("no-integer"), 7) == (False, False, 7.0)
    assert score_sample(ParseFailure("no-integer"), 7, fallback=5) == (False, False, 2.0)


def _scores(pairs, **attrs):
    out = []
    for i, (pred, gt) in enumerate(pairs):
        if pred is None:
            correct, oboa, err = score_sample(ParseFailure("x"), gt)
            failed = True
        else:
            correct, oboa, err = score_sample(Count(pred), gt)
            failed = False
        out.append(SampleScore(
            sample_id=f"s{i}", correct=correct, off_by_one=oboa, abs_err=err,
            parse_failed=failed, gt_count=gt, **attrs))
    return out


def test_aggregate_three_sample_example():
    report = aggregate(_scores([(3, 3), (5, 4), (10, 20)]))
    assert report.acc == pytest.approx(100 / 3)
    assert report.oboa == pytest.approx(200 / 3)
    assert report.mae == pytest.approx(11 / 3)
    assert report.rmse == pytest.approx(math.sqrt(101 / 3))
    assert report.n_parse_failures == 0


def test_aggregate_all_exact():
    report = aggregate(_scores([(2, 2), (9, 9)]))
    assert (report.acc, report.oboa, report.mae, report.rmse) == (100.0, 100.0, 0.0, 0.0)


def test_aggregate_single_sample_mae_equals_rmse():
    report = aggregate(_scores([(5, 7)]))
    assert report.mae == report.rmse == 2.0


def test_aggregate_refuses_empty_input():
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_order_invariant():
    scores = _scores([(3, 3), (5, 4), (10, 20), (None, 6)])
    a = aggregate(scores)
    b = aggregate(list(reversed(scores)))
    assert a == b


def test_count_buckets():
    assert count_bucket(1) == "1-5"
    assert count_bucket(5) == "1-5"
    assert count_bucket(6) == "6-10"
    assert count_bucket(20) == "11-20"
    assert count_bucket(21) == ">20"
    assert count_bucket(76) == ">20"
    assert count_bucket(0) is None


def test_breakdowns_by_target_modality_and_range():
    scores = (
        _scores([(3, 3)], target=CountTarget.EVENT, modality=QueryModality.A)
        + _scores([(9, 12)], target=CountTarget.OBJECT, modality=QueryModality.V)
        + _scores([(25, 25)], target=CountTarget.ATTRIBUTE, modality=QueryModality.AV)
    )
    report = aggregate(scores)
    assert set(report.breakdowns) == {"target", "modality", "count_range"}
    assert report.breakdowns["target"]["Event"].acc == 100.0
    assert report.breakdowns["count_range"]["11-20"].acc == 0.0
    assert report.breakdowns["count_range"][">20"].acc == 100.0
    assert report.breakdowns["modality"]["V"].mae == 3.0


def test_metric_inequalities_on_random_data():
    rng = random.Random(5)
    pairs = []
    for _ in range(500):
        gt = rng.randint(1, 40)
        pred = None if rng.random() < 0.1 else max(0, gt + rng.randint(-8, 8))
        pairs.append((pred, gt))
    scores = _scores(
        pairs,
        target=CountTarget.EVENT,
        modality=QueryModality.AV,
    )
    report = aggregate(scores)
    assert report.rmse >= report.mae
    assert report.oboa >= report.acc
    for groups in report.breakdowns.values():
        for block in groups.values():
            assert block.rmse >= block.mae
            assert block.oboa >= block.acc


def test_more_failures_cannot_lower_mae():
    # every gt above the fallback, so each failure adds a positive error term
    base = _scores([(3, 3), (5, 5), (8, 9)])
    more_failures = base + _scores([(None, 6), (None, 11)])
    assert aggregate(more_failures).mae >= aggregate(base).mae


def test_report_serialization_and_table():
    report = aggregate(_scores([(3, 3), (None, 4)],
                               target=CountTarget.EVENT, modality=QueryModality.A))
    doc = report_to_dict(report)
    assert doc["n_samples"] == 2
    assert doc["n_parse_failures"] == 1
    table = report_to_table(report)
    assert "overall" in table and "acc" in table
