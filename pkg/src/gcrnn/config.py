"""Line-oriented ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Unknown keys are rejected and
``feature_kind`` and ``model_kind`` must always be given, e.g.::

    feature_kind = logmel
    model_kind = sed
    channels = 8,8,16,16
    steps = 300
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .features import FEATURE_KINDS, FeatureParams
from .model import ModelConfig
from .training import TrainConfig

REQUIRED = ("feature_kind", "model_kind")
MODEL_KINDS = ("tagging", "sed")


@dataclass
class RunConfig:
    feature_kind: str = ""
    model_kind: str = ""
    # front end
    n_mels: int = 64
    n_mfcc: int = 24
    # network
    channels: tuple[int, ...] = (16, 32, 64, 64)
    blocks_per_unit: int = 2
    gru_hidden: int = 64
    # optimisation
    lr: float = 1e-3
    steps: int = 1000
    batch_size: int = 32
    checkpoint_every: int = 100
    optimizer: str = "adam"
    balanced: bool = True
    seed: int = 0
    # decoding
    median_win: int = 9
    min_dur: float = 0.2
    gap_merge: float = 0.1
    # optional paths, relative to the config file
    manifest: str = ""
    strong: str = ""

    def validate(self) -> None:
        if self.feature_kind not in FEATURE_KINDS:
            raise ValueError(f"feature_kind must be one of {FEATURE_KINDS}, got {self.feature_kind!r}")
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"model_kind must be one of {MODEL_KINDS}, got {self.model_kind!r}")
        if self.steps < 1 or self.batch_size < 1 or self.checkpoint_every < 1:
            raise ValueError("steps, batch_size and checkpoint_every must be positive")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")

    def feature_params(self) -> FeatureParams:
        return FeatureParams(n_mels=self.n_mels, n_mfcc=self.n_mfcc)

    def model_config(self, n_classes: int) -> ModelConfig:
        n_bins = self.feature_params().n_bins(self.feature_kind)
        kw = dict(n_classes=n_classes, n_bins=n_bins, channels=self.channels, blocks_per_unit=self.blocks_per_unit)
        if self.model_kind == "sed":
            return ModelConfig.sed(gru_hidden=self.gru_hidden, units=len(self.channels), **kw)
        return ModelConfig.tagging(**kw)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr, steps=self.steps, batch_size=self.batch_size, checkpoint_every=self.checkpoint_every,
            seed=self.seed, optimizer=self.optimizer, balanced=self.balanced,
        )


def _convert(raw: str, default):
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(default, tuple):
        return tuple(int(v) for v in raw.split(",") if v.strip())
    return type(default)(raw)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    defaults = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    values: dict = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{n}: expected key = value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ValueError(f"{source}:{n}: unknown key {key!r}")
        if key in values:
            raise ValueError(f"{source}:{n}: {key!r} given twice")
        try:
            values[key] = _convert(raw, getattr(defaults, key))
        except ValueError as err:
            raise ValueError(f"{source}:{n}: bad value for {key}: {err}") from None
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ValueError(f"{source}: missing required keys {missing}")
    cfg = dataclasses.replace(defaults, **values)
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    cfg = parse_config(path.read_text(), str(path))
    for key in ("manifest", "strong"):
        v = getattr(cfg, key)
        if v and not Path(v).is_absolute():
            setattr(cfg, key, str(path.parent / v))
    return cfg


def format_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(map(str, v))
        elif isinstance(v, bool):
            v = str(v).lower()
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
