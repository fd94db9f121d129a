"""Tag-level F1/Precision/Recall and segment-based error rate.

All scores are returned in percent except the error rate, which is a ratio.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .decision import Event


@dataclass
class TagConfusion:
    tp: np.ndarray  # per class
    fp: np.ndarray
    fn: np.ndarray

    @property
    def micro(self) -> tuple[int, int, int]:
        return int(self.tp.sum()), int(self.fp.sum()), int(self.fn.sum())


def prf(tp: float, fp: float, fn: float) -> dict[str, float]:
    """Precision, recall and F1 in percent; 0/0 is taken as 0."""
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return {"F1": 100.0 * f, "Precision": 100.0 * p, "Recall": 100.0 * r}


def _is_sets(x) -> bool:
    return len(x) > 0 and isinstance(x[0], (set, frozenset, list, tuple))


def _as_matrix(x, n_classes: int) -> np.ndarray:
    if _is_sets(x):
        m = np.zeros((len(x), n_classes), dtype=bool)
        for i, s in enumerate(x):
            m[i, list(s)] = True
        return m
    return np.asarray(x).astype(bool).reshape(len(x), -1)


def tag_confusion(pred, ref, n_classes: int | None = None) -> TagConfusion:
    """Per-class TP/FP/FN. Inputs are tag sets (class ids) or [clips, classes] 0/1 matrices."""
    if len(pred) != len(ref):
        raise ValueError(f"{len(pred)} predictions but {len(ref)} references")
    if n_classes is None:
        widths = [np.asarray(x).shape[1] for x in (pred, ref) if not _is_sets(x) and np.asarray(x).ndim == 2]
        ids = [c for x in (pred, ref) if _is_sets(x) for s in x for c in s]
        n_classes = max(widths + [max(ids, default=-1) + 1])
    P, R = _as_matrix(pred, n_classes), _as_matrix(ref, n_classes)
    if P.shape != R.shape:
        raise ValueError(f"prediction {P.shape} and reference {R.shape} shapes differ")
    return TagConfusion((P & R).sum(axis=0), (P & ~R).sum(axis=0), (~P & R).sum(axis=0))


def tag_metrics(pred, ref, mode: str = "micro", n_classes: int | None = None) -> dict[str, float]:
    """F1 / Precision / Recall of clip tags.

    ``micro`` pools counts over classes; ``macro`` averages per-class scores
    over the classes with at least one reference positive.
    """
    conf = tag_confusion(pred, ref, n_classes)
    if mode == "micro":
        return prf(*conf.micro)
    if mode != "macro":
        raise ValueError(f"mode must be 'micro' or 'macro', got {mode!r}")
    scored = [prf(tp, fp, fn) for tp, fp, fn in zip(conf.tp, conf.fp, conf.fn) if tp + fn > 0]
    if not scored:
        return {"F1": 0.0, "Precision": 0.0, "Recall": 0.0}
    return {k: float(np.mean([s[k] for s in scored])) for k in ("F1", "Precision", "Recall")}


@dataclass
class SegmentCounts:
    S: int = 0
    D: int = 0
    I: int = 0
    N: int = 0
    TP: int = 0
    FP: int = 0
    FN: int = 0

    def add(self, other: "SegmentCounts") -> None:
        for k in ("S", "D", "I", "N", "TP", "FP", "FN"):
            setattr(self, k, getattr(self, k) + getattr(other, k))

    @property
    def error_rate(self) -> float:
        errors = self.S + self.D + self.I
        if self.N == 0:
            return 0.0 if errors == 0 else math.inf
        return errors / self.N

    @property
    def f1(self) -> float:
        return prf(self.TP, self.FP, self.FN)["F1"]


def activity_grid(events: Sequence[Event], n_classes: int, duration: float, seg_len: float) -> np.ndarray:
    """[segments, classes] bool; a class is active in a segment it overlaps with positive length."""
    n_seg = int(math.ceil(duration / seg_len))
    grid = np.zeros((n_seg, n_classes), dtype=bool)
    for e in events:
        if e.onset < 0 or e.offset < 0:
            raise ValueError(f"negative event time in {e}")
        if e.offset <= e.onset:
            continue
        lo = max(0, int(math.floor(e.onset / seg_len)))
        hi = min(n_seg, int(math.ceil(e.offset / seg_len)))
        grid[lo:hi, e.class_id] = True
    return grid


def segment_counts(sys_grid: np.ndarray, ref_grid: np.ndarray) -> SegmentCounts:
    tp = (sys_grid & ref_grid).sum(axis=1)
    fn = (~sys_grid & ref_grid).sum(axis=1)
    fp = (sys_grid & ~ref_grid).sum(axis=1)
    s = np.minimum(fn, fp)
    return SegmentCounts(
        S=int(s.sum()), D=int((fn - s).sum()), I=int((fp - s).sum()), N=int(ref_grid.sum()),
        TP=int(tp.sum()), FP=int(fp.sum()), FN=int(fn.sum()),
    )


def segment_metrics(
    sys: Mapping[str, Sequence[Event]],
    ref: Mapping[str, Sequence[Event]],
    n_classes: int,
    seg_len: float = 1.0,
    duration: float | Mapping[str, float] = 10.0,
) -> dict[str, float]:
    """Segment-based ER, F1, Precision and Recall accumulated over all clips in either mapping."""
    total = SegmentCounts()
    for clip in sorted(set(ref) | set(sys)):
        dur = duration[clip] if isinstance(duration, Mapping) else duration
        total.add(segment_counts(
            activity_grid(sys.get(clip, ()), n_classes, dur, seg_len),
            activity_grid(ref.get(clip, ()), n_classes, dur, seg_len),
        ))
    scores = prf(total.TP, total.FP, total.FN)
    return {"ER": total.error_rate, **scores, "S": total.S, "D": total.D, "I": total.I, "N": total.N}


# ---------------------------------------------------------------- reports

TAG_COLUMNS = ("F1", "Precision", "Recall")
SED_COLUMNS = ("F1", "Error rate")


def _key(column: str) -> str:
    return "ER" if column == "Error rate" else column


def write_report(rows: Sequence[tuple[str, dict]], txt_path: str | Path, csv_path: str | Path) -> str:
    """Write a text table and a CSV. Rows are (system, scores); tag and SED scores may mix."""
    cols = [c for c in dict.fromkeys(TAG_COLUMNS + SED_COLUMNS) if any(_key(c) in s for _, s in rows)]

    def cell(scores, c):
        v = scores.get(_key(c))
        return "" if v is None else (f"{v:.2f}" if c == "Error rate" else f"{v:.1f}")

    width = max([len("System")] + [len(name) for name, _ in rows])
    header = f"{'System':<{width}}  " + "  ".join(f"{c:>10}" for c in cols)
    lines = [header, "-" * len(header)]
    for name, scores in rows:
        lines.append(f"{name:<{width}}  " + "  ".join(f"{cell(scores, c):>10}" for c in cols))
    text = "\n".join(lines) + "\n"
    Path(txt_path).write_text(text)
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["System", *cols])
        for name, scores in rows:
            w.writerow([name, *(repr(float(scores[_key(c)])) if _key(c) in scores else "" for c in cols)])
    return text
