"""Per-class thresholds, frame-posterior event decoding and posterior fusion."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

GRID = np.round(np.arange(0.05, 0.95 + 1e-9, 0.01), 2)


@dataclass(frozen=True)
class Event:
    class_id: int
    onset: float
    offset: float


def class_f1_on_grid(scores: np.ndarray, refs: np.ndarray, grid: np.ndarray = GRID) -> np.ndarray:
    """F1 of one class at every grid threshold (tag = score >= threshold)."""
    pos = refs.astype(bool)
    pred = scores[None, :] >= grid[:, None]
    tp = (pred & pos).sum(axis=1)
    fp = (pred & ~pos).sum(axis=1)
    fn = (~pred & pos).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(tp > 0, 2 * tp / (2 * tp + fp + fn), 0.0)
    return f1


def tune_thresholds(posteriors, refs, grid: np.ndarray = GRID) -> np.ndarray:
    """Per-class threshold maximising that class's F1; ties go to the lowest value.

    Classes with no positive reference fall back to 0.5.
    """
    P = np.asarray(posteriors, dtype=np.float64)
    R = np.asarray(refs)
    if P.shape != R.shape:
        raise ValueError(f"posteriors {P.shape} and references {R.shape} are not aligned")
    th = np.full(P.shape[1], 0.5)
    for c in range(P.shape[1]):
        if not R[:, c].any():
            log.warning("class %d has no positive reference; threshold left at 0.5", c)
            continue
        f1 = class_f1_on_grid(P[:, c], R[:, c], grid)
        th[c] = grid[int(np.argmax(f1))]  # argmax returns the first, i.e. lowest, maximiser
    return th


def apply_thresholds(p, th) -> np.ndarray:
    """Boolean tag decisions, class c on iff p[..., c] >= th[c]."""
    return np.asarray(p) >= np.asarray(th)


def _median_binary(track: np.ndarray, win: int) -> np.ndarray:
    half = win // 2
    padded = np.concatenate([np.zeros(half, dtype=np.int64), track.astype(np.int64), np.zeros(half, dtype=np.int64)])
    counts = np.convolve(padded, np.ones(win, dtype=np.int64), mode="valid")
    return counts > half


def _runs(active: np.ndarray) -> list[list[int]]:
    edges = np.diff(np.concatenate([[0], active.astype(np.int8), [0]]))
    return [[int(s), int(e)] for s, e in zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1))]


def decode_events(
    frame_posteriors,
    th,
    median_win: int = 9,
    min_dur: float = 0.2,
    gap_merge: float = 0.1,
    frame_hop_sec: float = 10.0 / 240,
) -> list[Event]:
    """Per class: threshold, median-filter (zero-padded edges), merge short gaps, drop short events.

    An event spanning frames [s, e) becomes (s * hop, e * hop) seconds.
    """
    fp = np.asarray(frame_posteriors, dtype=np.float64)
    if median_win < 1 or median_win % 2 == 0:
        raise ValueError(f"median_win must be odd and positive, got {median_win}")
    th = np.broadcast_to(np.asarray(th, dtype=np.float64), (fp.shape[1],))
    events = []
    for c in range(fp.shape[1]):
        active = _median_binary(fp[:, c] >= th[c], median_win)
        merged: list[list[int]] = []
        for run in _runs(active):
            if merged and (run[0] - merged[-1][1]) * frame_hop_sec < gap_merge:
                merged[-1][1] = run[1]
            else:
                merged.append(run)
        for s, e in merged:
            if (e - s) * frame_hop_sec >= min_dur:
                events.append(Event(c, s * frame_hop_sec, e * frame_hop_sec))
    return events


def fuse_checkpoints(posterior_sets: Sequence) -> np.ndarray:
    """First fusion level: plain mean over saved iterations of one model."""
    return fuse_models(posterior_sets)


def fuse_models(posterior_sets: Sequence, weights=None) -> np.ndarray:
    """Second fusion level: weighted mean across models, weights normalised to sum to one."""
    if len(posterior_sets) == 0:
        raise ValueError("nothing to fuse")
    arrays = [np.asarray(p, dtype=np.float64) for p in posterior_sets]
    shape = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != shape:
            raise ValueError(f"posterior shapes differ: {shape} vs {a.shape}")
    w = np.ones(len(arrays)) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (len(arrays),):
        raise ValueError(f"need {len(arrays)} weights, got {w.shape}")
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("fusion weights must be non-negative with a positive sum")
    total = np.zeros(shape)
    for wi, a in zip(w, arrays):
        total += wi * a
    return total / w.sum()
