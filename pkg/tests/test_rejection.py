import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lava.kernel import softmax
from lava.rejection import (
    UNKNOWN,
    CalibrationRecord,
    RejectionThreshold,
    calibrate_threshold,
    collect_confidences,
    decide,
    exhaustive_threshold,
)


def recs(pairs):
    return [CalibrationRecord(c, ok) for c, ok in pairs]


def test_worked_example():
    r = recs([(0.99, True), (0.95, True), (0.90, False), (0.85, True), (0.80, True),
              (0.70, False)])
    th = calibrate_threshold(r, 0.85, "ADA")
    assert th.tau == 0.95
    assert th.accepted_fraction == pytest.approx(2 / 6)
    assert th.accepted_accuracy == 1.0
    assert not th.failed


def test_all_correct_accepts_everything():
    r = recs([(0.6, True), (0.4, True), (0.9, True)])
    assert calibrate_threshold(r).tau == 0.4


def test_all_wrong_is_reject_all():
    th = calibrate_threshold(recs([(0.6, False), (0.9, False)]))
    assert th.failed and th.tau is None and th.tau_string() == "reject-all"
    assert not th.accepts(1.0)


def test_empty_records():
    with pytest.raises(ValueError):
        calibrate_threshold([])


def test_confidence_range():
    with pytest.raises(ValueError):
        CalibrationRecord(0.0, True)
    with pytest.raises(ValueError):
        CalibrationRecord(1.5, True)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([0.3, 0.5, 0.5, 0.7, 0.9, 1.0]), st.booleans()),
                min_size=1, max_size=30),
       st.sampled_from([0.5, 0.85, 1.0]))
def test_matches_oracle_with_ties(pairs, target):
    r = recs(pairs)
    th = calibrate_threshold(r, target)
    assert th.tau == exhaustive_threshold(r, target)
    if th.tau is not None:
        acc = [x.correct for x in r if x.confidence >= th.tau]
        assert np.mean(acc) >= target
        # every strictly smaller candidate violates the constraint
        for c in {x.confidence for x in r if x.confidence < th.tau}:
            assert np.mean([x.correct for x in r if x.confidence >= c]) < target


def test_threshold_dict_roundtrip():
    th = calibrate_threshold(recs([(0.123456789012345, True), (0.1, False)]), 0.85, "ADMR")
    back = RejectionThreshold.from_dict(th.to_dict())
    assert back == th
    assert isinstance(th.to_dict()["tau"], str)


def test_decide_examples():
    vocab = ("A", "B", "C")
    p = decide([0.2, 0.7, 0.1], vocab, 0.6)
    assert p.accepted and p.index == 1 and p.label == "B" and p.confidence == 0.7
    q = decide([0.4, 0.35, 0.25], vocab, 0.6)
    assert not q.accepted and q.label == UNKNOWN and q.raw_label == "A"
    r = decide([0.2, 0.7, 0.1], vocab, 0.7)
    assert r.accepted
    s = decide([0.2, 0.7, 0.1], vocab, None)
    assert not s.accepted and s.label == UNKNOWN


def test_decide_validates_probs():
    with pytest.raises(ValueError):
        decide([0.5, 0.6], ("A", "B"), 0.1)
    with pytest.raises(ValueError):
        decide([0.5, 0.5], ("A", "B", "C"), 0.1)


def test_decide_shift_invariant():
    rng = np.random.default_rng(0)
    vocab = tuple("abcdef")
    for _ in range(50):
        z = rng.standard_normal(6) * 3
        tau = rng.uniform(0.2, 0.9)
        a = decide(softmax(z), vocab, tau)
        b = decide(softmax(z + 7.5), vocab, tau)
        assert (a.label, a.accepted) == (b.label, b.accepted)


def test_monotone_acceptance():
    rng = np.random.default_rng(1)
    conf = rng.uniform(0.2, 1.0, 100)
    taus = np.sort(rng.uniform(0, 1, 10))
    sets = [set(np.flatnonzero(conf >= t)) for t in taus]
    for lo, hi in zip(sets, sets[1:]):
        assert hi <= lo


def test_collect_confidences():
    probs = np.array([[0.7, 0.2, 0.1], [0.3, 0.3, 0.4], [0.1, 0.8, 0.1]])
    r = collect_confidences(probs, [0, 0, 1])
    assert [x.correct for x in r] == [True, False, True]
    assert all(x.confidence >= 1 / 3 for x in r)
    with pytest.raises(ValueError):
        collect_confidences(np.zeros((0, 3)), [])
