"""Gated-CNN tagger and gated-CRNN sound event detector.

Both networks stack units of ``blocks_per_unit`` gated blocks followed by a
max-pool. A gated block is

    Y = BN_lin(X * W + b)  (x)  sigmoid(BN_gate(X * V + c))

i.e. convolution, batch normalisation, then the learnable gate. The tagger
pools over time and frequency and ends in an attention head (weighted mean of
frame scores over time). The detector pools over frequency only, runs a
bidirectional GRU and emits per-frame posteriors; its clip posterior uses the
same attention pooling so it can be trained from clip labels alone.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor

HEADS = ("attention_pool", "frame_wise")


@dataclass
class ModelConfig:
    n_classes: int = 17
    n_bins: int = 64
    units: int = 4
    blocks_per_unit: int = 2
    channels: tuple[int, ...] = (16, 32, 64, 64)
    kernel: tuple[int, int] = (3, 3)
    pools: tuple[tuple[int, int], ...] = ((2, 2), (2, 2), (2, 2), (2, 2))
    gru_hidden: int = 64
    head: str = "attention_pool"
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.kernel = tuple(int(k) for k in self.kernel)
        self.pools = tuple(tuple(int(v) for v in p) for p in self.pools)

    @classmethod
    def tagging(cls, **kw) -> "ModelConfig":
        return cls(head="attention_pool", **kw)

    @classmethod
    def sed(cls, **kw) -> "ModelConfig":
        kw.setdefault("pools", ((1, 2),) * kw.get("units", 4))
        return cls(head="frame_wise", **kw)

    def validate(self) -> None:
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}, got {self.head!r}")
        if self.n_classes < 1 or self.n_bins < 1 or self.blocks_per_unit < 1:
            raise ValueError("n_classes, n_bins and blocks_per_unit must be positive")
        if self.head == "attention_pool" and self.units != 4:
            raise ValueError(f"the tagging network has 4 units, got units={self.units}")
        if len(self.channels) != self.units or len(self.pools) != self.units:
            raise ValueError(
                f"need one channel width and one pool window per unit: units={self.units}, "
                f"channels={self.channels}, pools={self.pools}"
            )
        if self.head == "frame_wise":
            if any(pt != 1 for pt, _ in self.pools):
                raise ValueError(f"the SED network must not pool over time, got pools={self.pools}")
            if self.gru_hidden < 1:
                raise ValueError("gru_hidden must be positive")
        if self.pooled_bins() < 1:
            raise ValueError(f"{self.n_bins} input bins vanish under pools {self.pools}")

    def pooled_bins(self) -> int:
        f = self.n_bins
        for _, pf in self.pools:
            f //= pf
        return f

    def time_reduction(self) -> int:
        return math.prod(pt for pt, _ in self.pools)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        d["kernel"] = list(self.kernel)
        d["pools"] = [list(p) for p in self.pools]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class GatedLinearLayer:
    W: Tensor
    b: Tensor
    V: Tensor
    c: Tensor

    def __post_init__(self):
        if self.W.shape != self.V.shape or self.b.shape != self.c.shape:
            raise ValueError(
                f"linear and gate paths differ: W {self.W.shape} vs V {self.V.shape}, "
                f"b {self.b.shape} vs c {self.c.shape}"
            )


def gated_activation(x, layer: GatedLinearLayer) -> Tensor:
    """(x * W + b) elementwise-times sigmoid(x * V + c), '*' being conv2d."""
    y1 = T.conv2d(x, layer.W, layer.b)
    y2 = T.sigmoid(T.conv2d(x, layer.V, layer.c))
    return y1 * y2


def attention_pool(frame_scores, frame_weights, axis: int = -2) -> Tensor:
    """Weighted mean of frame scores over time.

    Weights must be non-negative with a positive sum; they are normalised to sum to one along ``axis``
    (time) for each class, so any common positive rescaling is irrelevant.
    """
    p, w = T.as_tensor(frame_scores), T.as_tensor(frame_weights)
    if p.shape != w.shape:
        raise ValueError(f"scores {p.shape} and weights {w.shape} must have the same shape")
    if p.shape[axis] == 0:
        raise ValueError("attention_pool needs at least one frame")
    total = T.tsum(w, axis=axis, keepdims=True)
    if np.any(w.data < 0) or np.any(total.data <= 0):
        raise ValueError("attention weights must be non-negative with a positive sum over time")
    a = w / total
    return T.tsum(a * p, axis=axis)


@dataclass
class Output:
    clip: Tensor  # [B, K]
    frame: Tensor  # [B, T', K]
    attention: Tensor  # [B, T', K], sums to one over T'


@dataclass
class Network:
    cfg: ModelConfig
    params: dict[str, Tensor] = field(default_factory=dict)
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    # ------------------------------------------------------------ construction

    def _add(self, name: str, data: np.ndarray) -> Tensor:
        t = T.parameter(data, name=name)
        self.params[name] = t
        return t

    def _init(self, seed: int) -> None:
        cfg = self.cfg
        rng = np.random.default_rng(seed)
        kt, kf = cfg.kernel
        in_ch = 1
        for u, out_ch in enumerate(cfg.channels):
            for k in range(cfg.blocks_per_unit):
                pre = f"unit{u}.block{k}"
                fan_in, fan_out = in_ch * kt * kf, out_ch * kt * kf
                lim = math.sqrt(6.0 / (fan_in + fan_out))
                for path in ("W", "V"):
                    self._add(f"{pre}.{path}", rng.uniform(-lim, lim, (out_ch, in_ch, kt, kf)))
                self._add(f"{pre}.b", np.zeros(out_ch))
                self._add(f"{pre}.c", np.zeros(out_ch))
                # one BN over [linear; gate] channels, per-channel so equivalent to two
                self._add(f"{pre}.bn.gamma", np.ones(2 * out_ch))
                self._add(f"{pre}.bn.beta", np.zeros(2 * out_ch))
                self.buffers[f"{pre}.bn.running_mean"] = np.zeros(2 * out_ch)
                self.buffers[f"{pre}.bn.running_var"] = np.ones(2 * out_ch)
                in_ch = out_ch
        feat = cfg.channels[-1] * cfg.pooled_bins()
        if cfg.head == "frame_wise":
            H = cfg.gru_hidden
            lim = 1.0 / math.sqrt(H)
            for d in ("fwd", "bwd"):
                self._add(f"gru.{d}.w_in", rng.uniform(-lim, lim, (feat, 3 * H)))
                self._add(f"gru.{d}.w_rec", rng.uniform(-lim, lim, (H, 3 * H)))
                self._add(f"gru.{d}.b_in", np.zeros(3 * H))
                self._add(f"gru.{d}.b_rec", np.zeros(3 * H))
            feat = 2 * H
        lim = math.sqrt(6.0 / (feat + cfg.n_classes))
        for head in ("cla", "att"):
            self._add(f"head.{head}.w", rng.uniform(-lim, lim, (feat, cfg.n_classes)))
            self._add(f"head.{head}.b", np.zeros(cfg.n_classes))

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def trainable(self) -> list[Tensor]:
        return list(self.params.values())

    # ------------------------------------------------------------ forward

    def _block(self, x: Tensor, pre: str, training: bool) -> Tensor:
        p, cfg = self.params, self.cfg
        layer = GatedLinearLayer(p[f"{pre}.W"], p[f"{pre}.b"], p[f"{pre}.V"], p[f"{pre}.c"])
        O = layer.W.shape[0]
        # both paths read the same input: run them as one convolution
        z = T.conv2d(x, T.concat([layer.W, layer.V], axis=0), T.concat([layer.b, layer.c], axis=0))
        z = T.batch_norm(
            z, p[f"{pre}.bn.gamma"], p[f"{pre}.bn.beta"],
            self.buffers[f"{pre}.bn.running_mean"], self.buffers[f"{pre}.bn.running_var"],
            training=training, momentum=cfg.bn_momentum, eps=cfg.bn_eps,
        )
        return z[:, :O] * T.sigmoid(z[:, O:])

    def encode(self, x: Tensor, training: bool) -> Tensor:
        """Convolutional stack: [B, T, F] -> [B, C, T', F']."""
        B, Tn, Fn = x.shape
        h = T.reshape(x, (B, 1, Tn, Fn))
        for u in range(self.cfg.units):
            for k in range(self.cfg.blocks_per_unit):
                h = self._block(h, f"unit{u}.block{k}", training)
            h = T.max_pool2d(h, self.cfg.pools[u])
        return h

    def forward(self, x, training: bool = False) -> Output:
        x = T.as_tensor(x)
        if x.ndim != 3 or x.shape[2] != self.cfg.n_bins:
            raise ValueError(f"expected input [batch, frames, {self.cfg.n_bins}], got {x.shape}")
        p = self.params
        h = self.encode(x, training)
        B, C, Tp, Fp = h.shape
        seq = T.reshape(T.transpose(h, (0, 2, 1, 3)), (B, Tp, C * Fp))  # [B, T', C*F']
        if self.cfg.head == "frame_wise":
            rnn_in = T.transpose(seq, (1, 0, 2))
            gp = lambda d: [p[f"gru.{d}.{n}"] for n in ("w_in", "w_rec", "b_in", "b_rec")]
            seq = T.transpose(T.bigru_forward(rnn_in, gp("fwd"), gp("bwd")), (1, 0, 2))
        frame = T.sigmoid(T.linear(seq, p["head.cla.w"], p["head.cla.b"]))
        att = T.softmax(T.linear(seq, p["head.att.w"], p["head.att.b"]), axis=1)
        clip = attention_pool(frame, att, axis=1)
        return Output(clip=clip, frame=frame, attention=att)

    def predict(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Inference: clip posteriors [B, K] and frame posteriors [B, T_in, K].

        Frame posteriors of a time-pooled network are repeated back to the
        input frame rate.
        """
        x = np.asarray(x, dtype=np.float64)
        with T.no_grad():
            out = self.forward(T.Tensor(x), training=False)
        frame = out.frame.data
        if frame.shape[1] != x.shape[1]:
            frame = np.repeat(frame, self.cfg.time_reduction(), axis=1)
            pad = x.shape[1] - frame.shape[1]
            if pad > 0:
                frame = np.concatenate([frame, np.repeat(frame[:, -1:], pad, axis=1)], axis=1)
        return out.clip.data, frame

    # ------------------------------------------------------------ state

    def state(self) -> dict[str, np.ndarray]:
        s = {k: v.data for k, v in self.params.items()}
        s.update(self.buffers)
        return s

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        expected = set(self.params) | set(self.buffers)
        if set(state) != expected:
            missing, extra = expected - set(state), set(state) - expected
            raise ValueError(f"state mismatch: missing {sorted(missing)[:5]}, unexpected {sorted(extra)[:5]}")
        for k, v in state.items():
            target = self.params[k].data if k in self.params else self.buffers[k]
            if target.shape != v.shape:
                raise ValueError(f"{k}: shape {v.shape} does not match {target.shape}")
            target[...] = v


def build_network(cfg: ModelConfig, seed: int = 0) -> Network:
    cfg.validate()
    net = Network(cfg)
    net._init(seed)
    return net


def build_tagging_model(cfg: ModelConfig | None = None, seed: int = 0, **kw) -> Network:
    cfg = cfg or ModelConfig.tagging(**kw)
    if cfg.head != "attention_pool":
        raise ValueError("build_tagging_model needs head='attention_pool'")
    return build_network(cfg, seed)


def build_sed_model(cfg: ModelConfig | None = None, seed: int = 0, **kw) -> Network:
    cfg = cfg or ModelConfig.sed(**kw)
    if cfg.head != "frame_wise":
        raise ValueError("build_sed_model needs head='frame_wise'")
    return build_network(cfg, seed)
