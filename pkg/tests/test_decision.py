import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gcrnn.decision import (
    GRID,
    Event,
    apply_thresholds,
    class_f1_on_grid,
    decode_events,
    fuse_checkpoints,
    fuse_models,
    tune_thresholds,
)
from oracles import decode_naive

HOP = 10.0 / 240


def f1_naive(scores, refs, th):
    tp = fp = fn = 0
    for s, r in zip(scores, refs):
        pred = s >= th
        tp += pred and r
        fp += pred and not r
        fn += (not pred) and r
    return 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)


# ---------------------------------------------------------------- thresholds


def test_grid_bounds():
    assert GRID[0] == 0.05 and GRID[-1] == 0.95 and len(GRID) == 91


def test_binary_posteriors_pick_lowest():
    refs = np.array([[1, 0], [0, 1], [1, 1], [0, 0]])
    th = tune_thresholds(refs.astype(float), refs)
    np.testing.assert_array_equal(th, [0.05, 0.05])


def test_separable_single_class():
    p = np.array([[0.2], [0.19], [0.8], [0.85]])
    th = tune_thresholds(p, np.array([[0], [0], [1], [1]]))
    assert th[0] == pytest.approx(0.21)


def test_absent_class_falls_back(caplog):
    p = np.full((3, 2), 0.3)
    with caplog.at_level("WARNING"):
        th = tune_thresholds(p, np.array([[1, 0], [0, 0], [1, 0]]))
    assert th[1] == 0.5 and "no positive" in caplog.text


def test_misaligned_inputs():
    with pytest.raises(ValueError):
        tune_thresholds(np.zeros((3, 2)), np.zeros((2, 2)))


def test_tuned_threshold_hits_grid_maximum(rng):
    for _ in range(20):
        p = rng.uniform(size=(30, 5))
        r = (rng.uniform(size=(30, 5)) < 0.4).astype(int)
        r[0] = 1
        th = tune_thresholds(p, r)
        for c in range(5):
            scan = [f1_naive(p[:, c], r[:, c], g) for g in GRID]
            best = max(scan)
            assert f1_naive(p[:, c], r[:, c], th[c]) == pytest.approx(best, abs=1e-12)
            assert th[c] == GRID[scan.index(best)]  # lowest maximiser
            np.testing.assert_allclose(class_f1_on_grid(p[:, c], r[:, c]), scan, atol=1e-12)


def test_tuning_is_a_fixed_point(rng):
    p = rng.uniform(size=(40, 4))
    r = (rng.uniform(size=(40, 4)) < 0.5).astype(int)
    r[0] = 1
    th = tune_thresholds(p, r)
    snapped = np.where(apply_thresholds(p, th), np.maximum(p, th), np.minimum(p, th - 0.005))
    np.testing.assert_array_equal(tune_thresholds(snapped, r), th)
    np.testing.assert_array_equal(tune_thresholds(p, r), th)


def test_apply_thresholds_cases():
    assert apply_thresholds([0.5, 0.4], [0.5, 0.5]).tolist() == [True, False]
    assert not apply_thresholds(np.zeros(17), np.full(17, 0.5)).any()
    assert apply_thresholds([0.7, 0.2], [0.5, 0.5]).tolist() == [True, False]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 0.5))
def test_apply_thresholds_monotone(seed, bump):
    rng = np.random.default_rng(seed)
    p = rng.uniform(size=(6, 5))
    th = rng.uniform(0.05, 0.95, size=5)
    raised = th + bump * (rng.uniform(size=5) < 0.5)
    assert not np.any(apply_thresholds(p, raised) & ~apply_thresholds(p, th))


# ---------------------------------------------------------------- decoding


def test_all_zero_gives_no_events():
    assert decode_events(np.zeros((240, 17)), np.full(17, 0.5)) == []


def test_block_preserved():
    fp = np.zeros((240, 3))
    fp[100:151, 1] = 0.9
    ev = decode_events(fp, 0.5, median_win=5)
    assert ev == [Event(1, 100 * HOP, 151 * HOP)]


def test_even_window_rejected():
    with pytest.raises(ValueError):
        decode_events(np.zeros((10, 1)), 0.5, median_win=4)


def events_by_class(events, n):
    out = [[] for _ in range(n)]
    for e in events:
        out[e.class_id].append((e.onset, e.offset))
    return out


@pytest.mark.parametrize("seed", range(25))
def test_decoder_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    n_frames, k = int(rng.integers(20, 240)), 3
    # blocky random posteriors so that runs, gaps and short blips all occur
    fp = np.repeat(rng.uniform(size=(n_frames // 2 + 1, k)), 2, axis=0)[:n_frames]
    fp[rng.uniform(size=fp.shape) < 0.1] = 1.0
    th = rng.uniform(0.3, 0.7, size=k)
    win = int(rng.choice([1, 3, 5, 9]))
    min_dur, gap = float(rng.choice([0.0, 0.1, 0.2])), float(rng.choice([0.0, 0.1, 0.3]))
    got = events_by_class(decode_events(fp, th, win, min_dur, gap, HOP), k)
    for c in range(k):
        ref = decode_naive(fp[:, c], th[c], win, min_dur, gap, HOP)
        assert got[c] == ref


@settings(max_examples=60, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=80))
def test_plain_decoding_is_run_length(track):
    fp = np.array(track, dtype=float)[:, None]
    ev = decode_events(fp, 0.5, median_win=1, min_dur=0.0, gap_merge=0.0, frame_hop_sec=1.0)
    runs, start = [], None
    for i, v in enumerate(track + [False]):
        if v and start is None:
            start = i
        if not v and start is not None:
            runs.append((float(start), float(i)))
            start = None
    assert [(e.onset, e.offset) for e in ev] == runs


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_decoded_events_sorted_disjoint(seed):
    rng = np.random.default_rng(seed)
    ev = decode_events(rng.uniform(size=(120, 4)), rng.uniform(0.2, 0.8, size=4))
    for c in range(4):
        spans = [(e.onset, e.offset) for e in ev if e.class_id == c]
        assert all(a < b for a, b in spans)
        assert all(spans[i][1] < spans[i + 1][0] for i in range(len(spans) - 1))


# ---------------------------------------------------------------- fusion


def test_fusion_cases(rng):
    a = rng.uniform(size=(4, 17))
    np.testing.assert_array_equal(fuse_checkpoints([a]), a)
    np.testing.assert_array_equal(fuse_checkpoints([a, a]), a)
    np.testing.assert_allclose(fuse_checkpoints([np.full(3, 0.2), np.full(3, 0.6)]), 0.4, atol=1e-15)
    b = rng.uniform(size=a.shape)
    np.testing.assert_array_equal(fuse_models([a, b]), fuse_checkpoints([a, b]))
    np.testing.assert_array_equal(fuse_models([a, b], weights=[1, 0]), a)


def test_fusion_errors(rng):
    with pytest.raises(ValueError):
        fuse_models([])
    with pytest.raises(ValueError):
        fuse_models([np.zeros(3), np.zeros(4)])
    with pytest.raises(ValueError):
        fuse_models([np.zeros(3), np.zeros(3)], weights=[0, 0])
    with pytest.raises(ValueError):
        fuse_models([np.zeros(3), np.zeros(3)], weights=[1, -1])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10_000))
def test_fusion_convex(n, seed):
    rng = np.random.default_rng(seed)
    sets = rng.uniform(size=(n, 3, 4))
    out = fuse_models(list(sets), weights=rng.uniform(0.01, 3, size=n))
    assert np.all(out >= sets.min(0) - 1e-15) and np.all(out <= sets.max(0) + 1e-15)
