"""Synthetic weakly-labelled corpus with known event positions.

Every class owns a frequency band. Even-numbered classes sound as steady
tones, odd-numbered ones as band-limited noise bursts. Each clip holds one or
more events with random onsets over faint white noise, so clip tags and
onset/offset references are both known exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.signal

from .classes import CLASS_NAMES
from .features import hz_to_mel, mel_to_hz, write_wav


@dataclass
class SynthEvent:
    cls: int
    onset: float
    offset: float


@dataclass
class SynthClip:
    clip_id: str
    samples: np.ndarray
    sample_rate: int
    events: list[SynthEvent]
    n_classes: int

    @property
    def tags(self) -> np.ndarray:
        t = np.zeros(self.n_classes, dtype=np.int8)
        for e in self.events:
            t[e.cls] = 1
        return t


@dataclass
class SynthConfig:
    n_classes: int = 17
    duration: float = 10.0
    sample_rate: int = 16000
    max_events: int = 2
    min_event: float = 2.0
    max_event: float = 5.0
    amplitude: float = 0.25
    noise: float = 0.005
    fmin: float = 250.0
    fmax: float = 6500.0


def class_frequencies(cfg: SynthConfig) -> np.ndarray:
    return mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_classes))


def _event_signal(cls: int, n: int, cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    f0 = class_frequencies(cfg)[cls]
    t = np.arange(n) / cfg.sample_rate
    if cls % 2 == 0:
        sig = np.sin(2 * np.pi * f0 * t + rng.uniform(0, 2 * np.pi))
    else:
        lo, hi = f0 * 0.94, min(f0 * 1.06, cfg.sample_rate / 2 * 0.99)
        sos = scipy.signal.butter(4, [lo, hi], btype="band", fs=cfg.sample_rate, output="sos")
        sig = scipy.signal.sosfilt(sos, rng.normal(size=n))
        sig /= np.max(np.abs(sig)) + 1e-12
    ramp = min(n // 2, int(0.02 * cfg.sample_rate))
    env = np.ones(n)
    if ramp:
        env[:ramp] = np.linspace(0, 1, ramp)
        env[-ramp:] = np.linspace(1, 0, ramp)
    return sig * env


def make_clip(clip_id: str, classes: list[int], cfg: SynthConfig, rng: np.random.Generator) -> SynthClip:
    n = int(round(cfg.duration * cfg.sample_rate))
    x = cfg.noise * rng.normal(size=n)
    events = []
    for c in classes:
        dur = rng.uniform(cfg.min_event, min(cfg.max_event, cfg.duration))
        onset = rng.uniform(0, cfg.duration - dur)
        i0 = int(round(onset * cfg.sample_rate))
        i1 = min(n, int(round((onset + dur) * cfg.sample_rate)))
        x[i0:i1] += cfg.amplitude * _event_signal(c, i1 - i0, cfg, rng)
        events.append(SynthEvent(c, i0 / cfg.sample_rate, i1 / cfg.sample_rate))
    events.sort(key=lambda e: (e.cls, e.onset))
    return SynthClip(clip_id, np.clip(x, -1, 1), cfg.sample_rate, events, cfg.n_classes)


def make_corpus(n_clips: int, seed: int = 0, cfg: SynthConfig | None = None, prefix: str = "synth") -> list[SynthClip]:
    """Clips whose class sets cycle through all classes so each appears."""
    cfg = cfg or SynthConfig()
    rng = np.random.default_rng(seed)
    clips = []
    for i in range(n_clips):
        k = int(rng.integers(1, cfg.max_events + 1))
        first = i % cfg.n_classes
        others = rng.choice([c for c in range(cfg.n_classes) if c != first], size=k - 1, replace=False)
        clips.append(make_clip(f"{prefix}{i:04d}", [first, *map(int, others)], cfg, rng))
    return clips


def write_corpus(clips: list[SynthClip], out_dir: str | Path, class_names=CLASS_NAMES) -> tuple[Path, Path]:
    """Write WAVs plus weak manifest and strong-label CSVs; returns their paths."""
    out = Path(out_dir)
    (out / "audio").mkdir(parents=True, exist_ok=True)
    manifest, strong = out / "manifest.csv", out / "strong.csv"
    with open(manifest, "w", newline="") as fm, open(strong, "w", newline="") as fs:
        wm, ws = csv.writer(fm), csv.writer(fs)
        wm.writerow(["clip_id", "wav_path", "tags"])
        ws.writerow(["clip_id", "onset_sec", "offset_sec", "class"])
        for clip in clips:
            wav = out / "audio" / f"{clip.clip_id}.wav"
            write_wav(wav, clip.samples, clip.sample_rate)
            tags = "|".join(class_names[c] for c in sorted({e.cls for e in clip.events}))
            wm.writerow([clip.clip_id, f"audio/{clip.clip_id}.wav", tags])
            for e in clip.events:
                ws.writerow([clip.clip_id, repr(e.onset), repr(e.offset), class_names[e.cls]])
    return manifest, strong
