"""Train the SED network on clip tags only, then draw frame posteriors of held-out clips as text.

Each class row shows the predicted activity ('#' where the posterior reaches the
tuned threshold) above the true event span ('=').
"""

import argparse

import numpy as np

from gcrnn.classes import CLASS_NAMES
from gcrnn.decision import tune_thresholds
from gcrnn.features import AudioClip, FeatureParams, FeatureStats, extract
from gcrnn.model import ModelConfig, build_sed_model
from gcrnn.synth import make_corpus
from gcrnn.training import TrainConfig, train

HOP = 10.0 / 240


def featurize(clips, n_mels):
    fp = FeatureParams(n_mels=n_mels)
    return np.stack([extract(AudioClip(c.clip_id, c.samples, c.sample_rate), "logmel", fp).values for c in clips])


def draw(frames, th, clip, width=80):
    step = frames.shape[0] / width
    for cls in sorted({e.cls for e in clip.events}):
        cols = [frames[int(i * step):int((i + 1) * step), cls].mean() >= th[cls] for i in range(width)]
        ref = [any(e.cls == cls and e.onset <= (i + 0.5) * step * HOP < e.offset for e in clip.events) for i in range(width)]
        name = CLASS_NAMES[cls][:22]
        print(f"  {name:<22} pred |{''.join('#' if c else '.' for c in cols)}|")
        print(f"  {'':<22} ref  |{''.join('=' if r else ' ' for r in ref)}|")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=150)
    ap.add_argument("--n-mels", type=int, default=32)
    ap.add_argument("--show", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    train_clips = make_corpus(60, seed=args.seed, prefix="train")
    test_clips = make_corpus(args.show, seed=args.seed + 1, prefix="test")
    X, Xt = featurize(train_clips, args.n_mels), featurize(test_clips, args.n_mels)
    Y = np.stack([c.tags for c in train_clips])
    stats = FeatureStats.fit(list(X))
    net = build_sed_model(ModelConfig.sed(n_bins=args.n_mels, channels=(8, 8, 16, 16), gru_hidden=16), seed=args.seed)
    cfg = TrainConfig(lr=3e-3, steps=args.steps, batch_size=17, checkpoint_every=args.steps, seed=args.seed)
    res = train(net, stats.apply(X), Y, cfg)
    print(f"trained {args.steps} steps, final loss {res.losses[-1]:.4f}")
    th = tune_thresholds(net.predict(stats.apply(X))[0], Y)
    _, frames = net.predict(stats.apply(Xt))
    for clip, fr in zip(test_clips, frames):
        print(f"\n{clip.clip_id}  (0 s .. 10 s)")
        draw(fr, th, clip)


if __name__ == "__main__":
    main()
