import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gcrnn.decision import Event
from gcrnn.evaluation import activity_grid, segment_metrics, tag_confusion, tag_metrics, write_report
from oracles import segment_oracle


def test_perfect_tags():
    ref = [{0, 2}, {1}, {3}]
    assert tag_metrics(ref, ref) == {"F1": 100.0, "Precision": 100.0, "Recall": 100.0}


def test_hand_counted_case():
    # TP: clip0 class0, clip1 class1; FP: clip1 class2; FN: clip2 class0
    pred = [{0}, {1, 2}, set()]
    ref = [{0}, {1}, {0}]
    conf = tag_confusion(pred, ref)
    assert conf.micro == (2, 1, 1)
    m = tag_metrics(pred, ref)
    for k in ("F1", "Precision", "Recall"):
        assert round(m[k], 1) == 66.7
        assert m[k] == pytest.approx(200 / 3, abs=1e-12)


def test_empty_predictions():
    assert tag_metrics([set(), set()], [{0}, {1}]) == {"F1": 0.0, "Precision": 0.0, "Recall": 0.0}


def test_length_mismatch():
    with pytest.raises(ValueError):
        tag_metrics([{0}], [{0}, {1}])


def test_macro_average():
    ref = np.array([[1, 0, 0], [1, 1, 0]])
    pred = np.array([[1, 0, 1], [0, 1, 0]])
    m = tag_metrics(pred, ref, mode="macro")
    # class0 P=100 R=50 F1=66.7; class1 all 100; class2 has no reference and is skipped
    assert m["Precision"] == pytest.approx(100.0)
    assert m["Recall"] == pytest.approx(75.0)
    assert m["F1"] == pytest.approx((200 / 3 + 100) / 2)
    with pytest.raises(ValueError):
        tag_metrics(pred, ref, mode="weighted")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_micro_f1_order_invariant(seed):
    rng = np.random.default_rng(seed)
    ref = rng.uniform(size=(12, 5)) < 0.3
    pred = rng.uniform(size=(12, 5)) < 0.3
    perm = rng.permutation(12)
    assert tag_metrics(pred, ref) == tag_metrics(pred[perm], ref[perm])


# ---------------------------------------------------------------- segments


def test_identical_events():
    ref = {"a": [Event(0, 1.2, 3.4), Event(1, 0.0, 10.0)]}
    m = segment_metrics(ref, ref, n_classes=2)
    assert m["ER"] == 0.0 and m["F1"] == 100.0


def test_all_miss():
    ref = {"a": [Event(0, 0.5, 2.5), Event(1, 6.0, 7.5)]}  # 3 + 2 active segments
    m = segment_metrics({}, ref, n_classes=2)
    assert m["ER"] == 1.0 and m["F1"] == 0.0 and m["D"] == 5


def test_four_segment_miss():
    m = segment_metrics({"a": []}, {"a": [Event(3, 2.0, 6.0)]}, n_classes=17)
    assert m["N"] == 4 and m["ER"] == 1.0


def test_substitution_counting():
    ref = {"a": [Event(0, 0.0, 1.0)]}
    sys = {"a": [Event(1, 0.0, 1.0)]}
    m = segment_metrics(sys, ref, n_classes=2)
    assert (m["S"], m["D"], m["I"], m["ER"]) == (1, 0, 0, 1.0)


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        activity_grid([Event(0, -0.5, 1.0)], 1, 10.0, 1.0)


def test_no_reference_activity():
    assert segment_metrics({}, {"a": []}, n_classes=2)["ER"] == 0.0
    assert math.isinf(segment_metrics({"a": [Event(0, 0, 1)]}, {"a": []}, n_classes=2)["ER"])


def random_events(rng, n_classes, duration=10.0, max_events=3):
    out = []
    for _ in range(int(rng.integers(0, max_events + 1))):
        on = float(rng.uniform(0, duration - 0.1))
        out.append(Event(int(rng.integers(n_classes)), on, float(min(duration, on + rng.uniform(0.05, 4)))))
    return out


@pytest.mark.parametrize("seed", range(25))
def test_segment_metrics_match_oracle(seed):
    rng = np.random.default_rng(seed)
    clips = ["c0", "c1", "c2"]
    ref = {c: random_events(rng, 2) for c in clips}
    ref["c0"].append(Event(0, 0.0, 0.7))  # keep N > 0
    sys = {c: random_events(rng, 2) for c in clips}
    m = segment_metrics(sys, ref, n_classes=2)
    tup = lambda evs: {c: [(e.class_id, e.onset, e.offset) for e in v] for c, v in evs.items()}
    er, f1 = segment_oracle(tup(sys), tup(ref), classes=[0, 1], duration=10.0)
    assert m["ER"] == pytest.approx(er, abs=1e-12)
    assert m["F1"] == pytest.approx(f1, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_duplication_invariance(seed):
    rng = np.random.default_rng(seed)
    ref = {f"c{i}": random_events(rng, 3) + [Event(0, 1.0, 2.0)] for i in range(3)}
    sys = {f"c{i}": random_events(rng, 3) for i in range(3)}
    a = segment_metrics(sys, ref, 3)
    b = segment_metrics({**sys, **{k + "x": v for k, v in sys.items()}}, {**ref, **{k + "x": v for k, v in ref.items()}}, 3)
    assert a["ER"] == pytest.approx(b["ER"]) and a["F1"] == pytest.approx(b["F1"])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_everything_active(seed):
    rng = np.random.default_rng(seed)
    ref = {"a": random_events(rng, 3) + [Event(1, 4.0, 5.0)]}
    sys = {"a": [Event(c, 0.0, 10.0) for c in range(3)]}
    m = segment_metrics(sys, ref, 3)
    grid = activity_grid(ref["a"], 3, 10.0, 1.0)
    assert m["Recall"] == 100.0
    if not grid.all():
        assert m["ER"] >= 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_zero_error_iff_equal_grids(seed):
    rng = np.random.default_rng(seed)
    ref = {"a": random_events(rng, 2) + [Event(0, 0.0, 0.5)]}
    sys = {"a": random_events(rng, 2)}
    equal = np.array_equal(activity_grid(sys["a"], 2, 10, 1), activity_grid(ref["a"], 2, 10, 1))
    assert (segment_metrics(sys, ref, 2)["ER"] == 0.0) == equal


# ---------------------------------------------------------------- report


def test_report_columns(tmp_path):
    rows = [("tagger", {"F1": 55.55, "Precision": 60.0, "Recall": 51.0}), ("sed", {"F1": 40.0, "ER": 0.734})]
    text = write_report(rows, tmp_path / "r.txt", tmp_path / "r.csv")
    assert "Error rate" in text and "0.73" in text and "55.5" in text
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "System,F1,Precision,Recall,Error rate"
    assert lines[2].startswith("sed,40.0,,,0.734")
