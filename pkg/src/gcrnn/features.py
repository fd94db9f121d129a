"""Spectrogram, log-mel and MFCC front ends with a fixed 240-frame clip length."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft
import scipy.io.wavfile
import scipy.signal

N_FRAMES = 240
FEATURE_KINDS = ("spectrogram", "logmel", "mfcc")


@dataclass
class AudioClip:
    clip_id: str
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError(f"clip {self.clip_id!r}: samples must be a non-empty 1-D sequence")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class FeatureMatrix:
    values: np.ndarray  # [frames, bins]
    kind: str

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if self.values.ndim != 2:
            raise ValueError(f"feature values must be 2-D, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature values contain NaN/Inf")

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def bins(self) -> int:
        return self.values.shape[1]


@dataclass
class FeatureParams:
    """Front-end settings. A 10 s clip at these defaults yields 241 frames, trimmed to 240."""

    sample_rate: int = 16000
    n_fft: int = 1024
    win_len: int = 1024
    hop: int = 664
    window: str = "hann"
    n_mels: int = 64
    n_mfcc: int = 24
    fmin: float = 0.0
    fmax: float | None = None
    floor: float = 1e-10
    n_frames: int = N_FRAMES

    def n_bins(self, kind: str) -> int:
        if kind == "spectrogram":
            return self.n_fft // 2 + 1
        if kind == "logmel":
            return self.n_mels
        if kind == "mfcc":
            return self.n_mfcc
        raise ValueError(f"unknown feature kind {kind!r}")


# ---------------------------------------------------------------- audio I/O


def read_wav(path: str | Path, clip_id: str | None = None, target_rate: int | None = None) -> AudioClip:
    """Read PCM-16/32, 8-bit or float WAV, downmix to mono by channel mean.

    If ``target_rate`` differs from the file rate, samples are linearly
    interpolated onto the new grid.
    """
    rate, data = scipy.io.wavfile.read(str(path))
    if data.dtype == np.int16:
        x = data / 32768.0
    elif data.dtype == np.int32:
        x = data / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype.kind == "f":
        x = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported WAV sample type {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    if target_rate is not None and target_rate != rate:
        n_out = int(round(x.size * target_rate / rate))
        t_out = np.arange(n_out) / target_rate
        x = np.interp(t_out, np.arange(x.size) / rate, x)
        rate = target_rate
    return AudioClip(clip_id or Path(path).stem, x, int(rate))


def write_wav(path: str | Path, samples: np.ndarray, sample_rate: int) -> None:
    """Write mono 16-bit PCM."""
    pcm = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    scipy.io.wavfile.write(str(path), sample_rate, pcm)


# ---------------------------------------------------------------- transforms


def _window(name: str, n: int) -> np.ndarray:
    if name == "hann":
        return scipy.signal.get_window("hann", n, fftbins=True)
    if name in ("rect", "rectangular", "boxcar"):
        return np.ones(n)
    raise ValueError(f"unknown window {name!r}")


def frame_signal(samples: np.ndarray, win_len: int, hop: int) -> np.ndarray:
    """Frames [t*hop, t*hop + win_len); the final partial frame is zero-padded."""
    if hop <= 0:
        raise ValueError("hop must be positive")
    n = samples.size
    if n < win_len:
        raise ValueError(f"clip of {n} samples is shorter than one window ({win_len})")
    n_frames = 1 + math.ceil((n - win_len) / hop)
    padded = np.zeros((n_frames - 1) * hop + win_len)
    padded[:n] = samples
    return np.lib.stride_tricks.sliding_window_view(padded, win_len)[::hop]


def stft(clip: AudioClip, win_len: int = 1024, hop: int = 664, n_fft: int | None = None, window: str = "hann") -> np.ndarray:
    """Complex STFT, shape [frames, n_fft // 2 + 1]."""
    n_fft = n_fft or win_len
    if win_len > n_fft:
        raise ValueError(f"win_len {win_len} exceeds n_fft {n_fft}")
    frames = frame_signal(clip.samples, win_len, hop) * _window(window, win_len)
    return np.fft.rfft(frames, n=n_fft, axis=1)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_matrix(n_mels: int, sample_rate: int, n_fft: int, fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular mel filterbank [n_mels, n_fft // 2 + 1], peak weight 1.

    Filter edges are equally spaced on mel(f) = 2595 log10(1 + f / 700) and
    weights are evaluated at the exact bin frequencies.
    """
    fmax = sample_rate / 2 if fmax is None else fmax
    if not 0 <= fmin < fmax <= sample_rate / 2:
        raise ValueError(f"need 0 <= fmin < fmax <= sample_rate/2, got fmin={fmin}, fmax={fmax}")
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, center, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs[None, :] - lo) / (center - lo)
    down = (hi - freqs[None, :]) / (hi - center)
    fb = np.maximum(0.0, np.minimum(up, down))
    empty = np.flatnonzero(fb.max(axis=1) <= 0)
    if empty.size:
        raise ValueError(
            f"{n_mels} mel bands is too many for n_fft={n_fft} at {sample_rate} Hz: "
            f"bands {empty.tolist()[:5]} contain no FFT bin"
        )
    return fb


def log_mel(power: np.ndarray, mel: np.ndarray, floor: float = 1e-10) -> FeatureMatrix:
    if power.shape[1] != mel.shape[1]:
        raise ValueError(f"power spectrum has {power.shape[1]} bins but mel matrix expects {mel.shape[1]}")
    return FeatureMatrix(np.log(np.maximum(power @ mel.T, floor)), "logmel")


def mfcc(logmel: FeatureMatrix, n_coeffs: int) -> FeatureMatrix:
    """Orthonormal DCT-II over mel bins, first ``n_coeffs`` kept."""
    if n_coeffs > logmel.bins:
        raise ValueError(f"n_coeffs {n_coeffs} exceeds the {logmel.bins} mel bins")
    coeffs = scipy.fft.dct(logmel.values, type=2, norm="ortho", axis=1)[:, :n_coeffs]
    return FeatureMatrix(coeffs, "mfcc")


def fit_frames(m, target: int = N_FRAMES, kind: str | None = None) -> FeatureMatrix:
    """Centre-truncate longer inputs, zero-pad shorter ones at the end."""
    if isinstance(m, FeatureMatrix):
        kind = kind or m.kind
        m = m.values
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] == 0 or m.shape[1] == 0:
        raise ValueError(f"fit_frames needs a non-empty 2-D matrix, got shape {m.shape}")
    n = m.shape[0]
    if n >= target:
        start = (n - target) // 2
        out = m[start:start + target].copy()
    else:
        out = np.zeros((target, m.shape[1]))
        out[:n] = m
    return FeatureMatrix(out, kind or "logmel")


def extract(clip: AudioClip, kind: str = "logmel", params: FeatureParams | None = None) -> FeatureMatrix:
    """Full front end for one clip."""
    p = params or FeatureParams()
    if clip.sample_rate != p.sample_rate:
        raise ValueError(f"clip {clip.clip_id!r} is {clip.sample_rate} Hz, front end expects {p.sample_rate} Hz")
    spec = stft(clip, p.win_len, p.hop, p.n_fft, p.window)
    power = np.abs(spec) ** 2
    if kind == "spectrogram":
        feat = FeatureMatrix(np.log(np.maximum(power, p.floor)), "spectrogram")
    else:
        feat = log_mel(power, mel_matrix(p.n_mels, p.sample_rate, p.n_fft, p.fmin, p.fmax), p.floor)
        if kind == "mfcc":
            feat = mfcc(feat, p.n_mfcc)
        elif kind != "logmel":
            raise ValueError(f"unknown feature kind {kind!r}")
    return fit_frames(feat, p.n_frames)


@dataclass
class FeatureStats:
    """Per-bin standardisation statistics computed on the training set."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, matrices) -> "FeatureStats":
        stacked = np.concatenate([np.asarray(getattr(m, "values", m)) for m in matrices], axis=0)
        return cls(stacked.mean(axis=0), np.maximum(stacked.std(axis=0), 1e-8))

    @classmethod
    def identity(cls, n_bins: int) -> "FeatureStats":
        return cls(np.zeros(n_bins), np.ones(n_bins))

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std
