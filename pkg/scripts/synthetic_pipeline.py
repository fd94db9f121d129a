"""End-to-end run of the command line on a synthetic corpus.

synth -> featurize -> train (tagger and SED) -> tag -> tune -> detect -> fuse -> eval

Thresholds are tuned on the training clips and applied to a held-out set.
Usage: python3 scripts/synthetic_pipeline.py --out /tmp/gcrnn_demo
"""

import argparse
import time
from pathlib import Path

from gcrnn.cli import main as gcrnn

CONFIG = """\
feature_kind = logmel
model_kind = {kind}
n_mels = 32
channels = {channels}
gru_hidden = 16
steps = {steps}
batch_size = 17
checkpoint_every = {every}
lr = 0.003
seed = {seed}
"""


def run(*argv):
    code = gcrnn([str(a) for a in argv])
    if code:
        raise SystemExit(f"step failed with exit {code}: {' '.join(map(str, argv[:1]))}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="synthetic_run")
    ap.add_argument("--n-train", type=int, default=60)
    ap.add_argument("--n-test", type=int, default=34)
    ap.add_argument("--steps", type=int, default=150)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    run("synth", "--out", out / "train", "--n-clips", args.n_train, "--seed", args.seed, "--prefix", "train")
    run("synth", "--out", out / "test", "--n-clips", args.n_test, "--seed", args.seed + 1, "--prefix", "test")

    every = max(1, args.steps // 3)
    for kind, channels in (("tagging", "8,16,16,16"), ("sed", "8,8,16,16")):
        cfg = out / f"{kind}.cfg"
        cfg.write_text(CONFIG.format(kind=kind, channels=channels, steps=args.steps, every=every, seed=args.seed))
        for split in ("train", "test"):
            run("featurize", "--config", cfg, "--manifest", out / split / "manifest.csv", "--out", out / f"feat_{split}")
        run("train", "--config", cfg, "--manifest", out / "train" / "manifest.csv", "--features", out / "feat_train",
            "--out", out / kind)
        ckpts = sorted((out / kind).glob("step_*.ckpt"))
        # first-level fusion over the saved iterations of this model
        for split in ("train", "test"):
            run("tag", "--checkpoint", *ckpts, "--manifest", out / split / "manifest.csv",
                "--features", out / f"feat_{split}", "--out", out / f"{kind}_{split}.csv")
        run("tune", "--posteriors", out / f"{kind}_train.csv", "--manifest", out / "train" / "manifest.csv",
            "--out", out / f"{kind}_thresholds.csv")

    # second level: across the two models
    run("fuse", "--posteriors", out / "tagging_train.csv", out / "sed_train.csv", "--out", out / "fusion_train.csv")
    run("fuse", "--posteriors", out / "tagging_test.csv", out / "sed_test.csv", "--out", out / "fusion_test.csv")
    run("tune", "--posteriors", out / "fusion_train.csv", "--manifest", out / "train" / "manifest.csv",
        "--out", out / "fusion_thresholds.csv")

    sed_ckpts = sorted((out / "sed").glob("step_*.ckpt"))
    run("detect", "--checkpoint", *sed_ckpts, "--config", out / "sed.cfg", "--manifest", out / "test" / "manifest.csv",
        "--features", out / "feat_test", "--thresholds", out / "sed_thresholds.csv", "--out", out / "detect")

    m = out / "test" / "manifest.csv"
    for system in ("tagging", "sed", "fusion"):
        extra = ["--events", out / "detect" / "events.csv", "--strong", out / "test" / "strong.csv"] if system == "sed" else []
        print()
        run("eval", "--manifest", m, "--posteriors", out / f"{system}_test.csv", "--thresholds", out / f"{system}_thresholds.csv",
            *extra, "--system", system, "--out", out / f"report_{system}")
    print(f"\nfinished in {time.perf_counter() - t0:.0f}s; frame posteriors per clip in {out / 'detect' / 'frames'}")


if __name__ == "__main__":
    main()
