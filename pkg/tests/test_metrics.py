import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamdet.detector import Detection
from streamdet.errors import UndefinedMetricError
from streamdet.geometry import OrientedBox, iou_bev
from streamdet.metrics import (
    DEFAULT_THRESHOLDS,
    Accumulator,
    EvalReport,
    angle_bin,
    ap_by_angle_bin,
    average_precision,
    evaluate,
    match_detections,
)
from streamdet.scene import ObjectTruth

from .oracles import ap_oracle, greedy_match_oracle
from .strategies import detections, truths


def vbox(cx, cy=0.0, l=4.0, w=2.0):
    return OrientedBox(cx, cy, 0, l, w, 1.5, 0)


def test_match_example():
    t = [ObjectTruth(0, "vehicle", vbox(10)), ObjectTruth(1, "vehicle", vbox(20))]
    dets = [Detection(vbox(10.1), 0.6, "vehicle"), Detection(vbox(10), 0.9, "vehicle"),
            Detection(vbox(30), 0.5, "vehicle")]
    m = match_detections(dets, t)
    assert m.tp == [False, True, False]
    assert m.matched == [None, 0, None]
    assert m.fn == 1


def test_class_threshold_applies():
    t = [ObjectTruth(0, "pedestrian", vbox(10, l=1, w=1))]
    d = [Detection(vbox(10.3, l=1, w=1), 0.9, "pedestrian")]   # IoU 0.7/1.3 ~ 0.54
    assert match_detections(d, t).tp == [True]
    tv = [ObjectTruth(0, "vehicle", vbox(10, l=1, w=1))]
    dv = [Detection(vbox(10.3, l=1, w=1), 0.9, "vehicle")]
    assert match_detections(dv, tv).tp == [False]


def test_ap_examples():
    assert average_precision([0.9, 0.8], [True, False], 2) == 0.5
    assert average_precision([0.9, 0.8], [False, True], 1) == 0.5
    assert average_precision([], [], 3) == 0.0
    assert average_precision([0.9, 0.8, 0.7], [True, True, True], 3) == 1.0
    with pytest.raises(UndefinedMetricError):
        average_precision([0.5], [True], 0)


@given(st.lists(st.tuples(st.sampled_from([0.1, 0.3, 0.5, 0.8]), st.booleans()), max_size=12),
       st.integers(1, 6))
def test_ap_matches_fraction_oracle(rows, extra):
    scores = [s for s, _ in rows]
    tp = [h for _, h in rows]
    n = sum(tp) + extra - 1 or 1
    assert average_precision(scores, tp, n) == pytest.approx(float(ap_oracle(scores, tp, n)), abs=1e-12)


@given(st.lists(st.tuples(st.floats(0.01, 1.0), st.booleans()), min_size=1, max_size=12))
def test_ap_invariant_to_monotone_score_map(rows):
    scores = [s for s, _ in rows]
    tp = [h for _, h in rows]
    n = max(1, sum(tp))
    warped = [math.exp(3 * s) for s in scores]
    assert average_precision(scores, tp, n) == average_precision(warped, tp, n)


@settings(max_examples=150)
@given(st.lists(detections(), max_size=6), st.lists(truths(), max_size=4))
def test_matching_matches_oracle(dets, ts):
    m = match_detections(dets, ts)
    assert m.tp == greedy_match_oracle(dets, ts, DEFAULT_THRESHOLDS, iou_bev)


def test_angle_bins():
    assert [angle_bin(x) for x in (0, 4.99, 5, 14.9, 15, 34.9, 35, 120)] == [0, 0, 1, 1, 2, 3, 4, 4]


def test_false_positive_counts_in_every_bin():
    near = ObjectTruth(0, "vehicle", vbox(4.0))      # wide angle
    far = ObjectTruth(1, "vehicle", vbox(45.0))      # narrow
    dets = [Detection(vbox(4.0), 0.5, "vehicle"), Detection(vbox(45.0), 0.4, "vehicle"),
            Detection(vbox(0, 30), 0.9, "vehicle")]
    m = match_detections(dets, [near, far])
    per_bin = ap_by_angle_bin([m], [[near, far]])
    assert per_bin.count(None) == 3
    assert [v for v in per_bin if v is not None] == [0.5, 0.5]


def test_report_and_undefined():
    t = [ObjectTruth(0, "vehicle", vbox(10))]
    rep = evaluate([([Detection(vbox(10), 0.9, "vehicle")], t)])
    assert rep.ap == {"vehicle": 1.0, "pedestrian": None}
    assert rep.mAP == 1.0
    assert EvalReport.from_dict(rep.to_dict()) == rep
    assert rep.to_csv("baseline", 1).splitlines()[1] == "baseline,1,pedestrian,all,"
    with pytest.raises(UndefinedMetricError):
        Accumulator().report()
