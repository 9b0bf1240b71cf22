import math

import pytest

from vidkeys.activity import KeystrokeTimeline, filtered_by
from vidkeys.detect import KeystrokeEvent
from vidkeys.evaluate import (NO_DETECTIONS, EvalReport, Score, assign_bursts, evaluate_activity,
                              evaluate_detection, evaluate_recovery, match, mean_curves, pool_scores)
from vidkeys.infer import CandidateList
from vidkeys.preprocess import Hand

L, R = Hand.LEFT, Hand.RIGHT


def test_greedy_nearest_matching():
    # event 11 is closest to truth 10; event 12 then takes truth 13
    ev = [(11, L), (12, L)]
    tr = [(10, L), (13, L)]
    assert match(ev, tr, 2) == [(0, 0), (1, 1)]
    assert match([(10, L)], [(10, R)], 2) == []
    assert match([(10, L)], [(13, L)], 2) == []
    with pytest.raises(ValueError):
        match([], [], -1)


def test_detection_scores():
    ev = [KeystrokeEvent(10, L), KeystrokeEvent(30, R), KeystrokeEvent(50, R)]
    tr = [(11, L), (29, R), (70, L)]
    s = evaluate_detection(ev, tr)
    assert (s.tp, s.fp, s.fn) == (2, 1, 1)
    assert s.precision == pytest.approx(2 / 3) and s.recall == pytest.approx(2 / 3)


def test_no_detections_convention():
    s = evaluate_detection([], [(5, L)])
    assert s.precision == 1.0 and s.recall == 0.0 and NO_DETECTIONS in s.flags


def test_activity_scores():
    events = [KeystrokeEvent(f, L) for f in (10, 20, 100)]
    tl = KeystrokeTimeline(tuple(events), ("accepted", "accepted", "accepted"))
    s = evaluate_activity(tl, [(10, 21)], [(10, L), (20, L)])
    assert (s.tp, s.fp) == (2, 1) and s.recall == 1.0
    tl = tl.mark([2], filtered_by("min-speed"))
    assert evaluate_activity(tl, [(10, 21)], [(10, L), (20, L)]).precision == 1.0


def test_recovery_curve():
    preds = [CandidateList(("a", "b")), CandidateList(("x", "y", "c")), None]
    rec = evaluate_recovery(preds, ["b", "c", "d"], ks=(1, 2, 3))
    assert rec == {1: 0.0, 2: pytest.approx(1 / 3), 3: pytest.approx(2 / 3)}
    assert list(rec.values()) == sorted(rec.values())
    with pytest.raises(ValueError):
        evaluate_recovery(preds, ["a"])


class B:
    def __init__(self, start, end):
        self.start, self.end = start, end


def test_assign_bursts_max_overlap_and_frame_map():
    bursts = [B(5, 20), B(40, 60)]
    assert assign_bursts(bursts, [(10, 30), (45, 50), (90, 95)]) == [0, 1, None]
    # after skipping, new frame n came from original fmap[n - 1]
    fmap = [1, 2, 3, 40, 41, 42]
    assert assign_bursts([B(4, 6)], [(40, 42)], frame_map=fmap) == [0]


def test_pool_and_mean():
    s = pool_scores([Score(1, 1, 2, 0, 0), Score(0.5, 0.5, 1, 1, 1)])
    assert (s.tp, s.fp, s.fn) == (3, 1, 1)
    assert mean_curves([{1: 0.0, 5: 1.0}, {1: 1.0, 5: 1.0}]) == {1: 0.5, 5: 1.0}


def test_report_sections():
    r = EvalReport(Score(1, 0.5, 1, 0, 1), None, {"4k": {1: 0.25}}, [("blur", 0.2, 1.0, 0.0)], clips=2)
    text = r.format()
    assert text.startswith("[run]\nclips\n2\n")
    assert "[detection]\nprecision,recall,tp,fp,fn,flags\n1.000000,0.500000,1,0,1,\n" in text
    assert "[activity]" not in text
    assert "4k,1,0.250000" in text and "blur,0.2,1.000000,0.000000" in text
    assert not math.isnan(r.recovery["4k"][1])


def test_one_frame_shift_within_tolerance():
    tr = [(10, L), (20, R), (30, L)]
    s = evaluate_detection([KeystrokeEvent(f + 1, h) for f, h in tr], tr)
    assert s.precision == s.recall == 1.0
