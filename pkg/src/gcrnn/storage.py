"""On-disk formats: feature store, manifests, posteriors, thresholds, events."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .classes import CLASS_NAMES, class_index
from .decision import Event
from .features import FEATURE_KINDS, FeatureMatrix

FEATURE_MAGIC = b"GCRNNFEA"
_FEATURE_HEADER = struct.Struct("<8s16sII")  # magic, kind (NUL padded), rows, cols


# ---------------------------------------------------------------- feature store


def feature_path(store: str | Path, clip_id: str) -> Path:
    return Path(store) / f"{clip_id}.feat"


def write_features(path: str | Path, m: FeatureMatrix) -> None:
    rows, cols = m.values.shape
    header = _FEATURE_HEADER.pack(FEATURE_MAGIC, m.kind.encode(), rows, cols)
    tmp = Path(path).with_suffix(".tmp")
    tmp.write_bytes(header + np.ascontiguousarray(m.values, dtype="<f8").tobytes())
    tmp.replace(path)  # no half-written feature files after an interrupted run


def read_features(path: str | Path) -> FeatureMatrix:
    buf = Path(path).read_bytes()
    if len(buf) < _FEATURE_HEADER.size:
        raise ValueError(f"{path}: truncated feature file")
    magic, kind, rows, cols = _FEATURE_HEADER.unpack_from(buf)
    if magic != FEATURE_MAGIC:
        raise ValueError(f"{path}: not a feature file")
    kind = kind.rstrip(b"\0").decode()
    if kind not in FEATURE_KINDS:
        raise ValueError(f"{path}: unknown feature kind {kind!r}")
    n = rows * cols
    if len(buf) != _FEATURE_HEADER.size + 8 * n:
        raise ValueError(f"{path}: expected {rows}x{cols} values")
    values = np.frombuffer(buf, dtype="<f8", offset=_FEATURE_HEADER.size).reshape(rows, cols).astype(np.float64)
    return FeatureMatrix(values, kind)


# ---------------------------------------------------------------- manifests


@dataclass
class ManifestRow:
    clip_id: str
    wav_path: Path
    tags: np.ndarray  # multi-hot


def read_manifest(path: str | Path, class_names: Sequence[str] = CLASS_NAMES, check_paths: bool = True) -> list[ManifestRow]:
    """Weak-label manifest ``clip_id,wav_path,tags``; relative WAV paths resolve against the manifest's folder."""
    path = Path(path)
    rows, seen, missing = [], set(), []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"clip_id", "wav_path", "tags"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: header must be clip_id,wav_path,tags")
        for line, r in enumerate(reader, start=2):
            cid = r["clip_id"].strip()
            if not cid or cid in seen:
                raise ValueError(f"{path}:{line}: empty or duplicate clip_id {cid!r}")
            seen.add(cid)
            tags = np.zeros(len(class_names), dtype=np.int8)
            for name in filter(None, (t.strip() for t in (r["tags"] or "").split("|"))):
                try:
                    tags[class_index(name, class_names)] = 1
                except ValueError:
                    raise ValueError(f"{path}:{line}: unknown class {name!r}") from None
            wav = Path(r["wav_path"])
            wav = wav if wav.is_absolute() else path.parent / wav
            if check_paths and not wav.exists():
                missing.append(str(wav))
            rows.append(ManifestRow(cid, wav, tags))
    if missing:
        raise FileNotFoundError(f"{len(missing)} WAV files listed in {path} do not exist, e.g. {missing[0]}")
    return rows


def read_strong(path: str | Path, class_names: Sequence[str] = CLASS_NAMES) -> dict[str, list[Event]]:
    """Strong labels ``clip_id,onset_sec,offset_sec,class``."""
    out: dict[str, list[Event]] = {}
    with open(path, newline="") as f:
        for line, r in enumerate(csv.DictReader(f), start=2):
            try:
                e = Event(class_index(r["class"], class_names), float(r["onset_sec"]), float(r["offset_sec"]))
            except (KeyError, TypeError, ValueError) as err:
                raise ValueError(f"{path}:{line}: {err}") from None
            out.setdefault(r["clip_id"], []).append(e)
    return out


# ---------------------------------------------------------------- posteriors


def write_posteriors(path: str | Path, clip_ids: Sequence[str], P: np.ndarray, class_names: Sequence[str] = CLASS_NAMES) -> None:
    P = np.asarray(P, dtype=np.float64)
    if P.shape != (len(clip_ids), len(class_names)):
        raise ValueError(f"posteriors {P.shape} do not match {len(clip_ids)} clips x {len(class_names)} classes")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["clip_id", *class_names])
        for cid, row in zip(clip_ids, P):
            w.writerow([cid, *map(repr, row.tolist())])


def read_posteriors(path: str | Path) -> tuple[list[str], np.ndarray, list[str]]:
    """Returns (clip_ids, [clips, classes] array, class names from the header)."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header or header[0] != "clip_id":
            raise ValueError(f"{path}: first column must be clip_id")
        ids, rows = [], []
        for r in reader:
            if len(r) != len(header):
                raise ValueError(f"{path}: row for {r[0] if r else '?'} has {len(r)} fields, expected {len(header)}")
            ids.append(r[0])
            rows.append([float(v) for v in r[1:]])
    return ids, np.array(rows, dtype=np.float64).reshape(len(ids), len(header) - 1), header[1:]


def write_frame_posteriors(path: str | Path, frames: np.ndarray, class_names: Sequence[str] = CLASS_NAMES) -> None:
    """One clip's [frames, classes] posteriors with a leading frame index column."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["frame", *class_names])
        for t, row in enumerate(np.asarray(frames, dtype=np.float64)):
            w.writerow([t, *map(repr, row.tolist())])


def read_frame_posteriors(path: str | Path) -> np.ndarray:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        next(reader)
        return np.array([[float(v) for v in r[1:]] for r in reader])


# ---------------------------------------------------------------- thresholds and events


def write_thresholds(path: str | Path, th: np.ndarray) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["class_id", "threshold"])
        for c, v in enumerate(np.asarray(th, dtype=np.float64).tolist()):
            w.writerow([c, repr(v)])


def read_thresholds(path: str | Path, n_classes: int | None = None) -> np.ndarray:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    th = np.full(len(rows), np.nan)
    for r in rows:
        c = int(r["class_id"])
        if not 0 <= c < len(rows):
            raise ValueError(f"{path}: class_id {c} out of range")
        th[c] = float(r["threshold"])
    if np.isnan(th).any() or (n_classes is not None and len(th) != n_classes):
        raise ValueError(f"{path}: need one threshold for each of {n_classes or len(th)} classes")
    if np.any((th <= 0) | (th >= 1)):
        raise ValueError(f"{path}: thresholds must lie strictly between 0 and 1")
    return th


def write_events(
    path: str | Path,
    events: dict[str, list[Event]],
    class_names: Sequence[str] = CLASS_NAMES,
    delimiter: str = ",",
) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, delimiter=delimiter)
        w.writerow(["clip_id", "onset_sec", "offset_sec", "class_name"])
        for cid in events:
            for e in sorted(events[cid], key=lambda e: (e.onset, e.class_id)):
                w.writerow([cid, repr(e.onset), repr(e.offset), class_names[e.class_id]])


def read_events(path: str | Path, class_names: Sequence[str] = CLASS_NAMES, delimiter: str = ",") -> dict[str, list[Event]]:
    out: dict[str, list[Event]] = {}
    with open(path, newline="") as f:
        for r in csv.DictReader(f, delimiter=delimiter):
            out.setdefault(r["clip_id"], []).append(
                Event(class_index(r["class_name"], class_names), float(r["onset_sec"]), float(r["offset_sec"]))
            )
    return out
