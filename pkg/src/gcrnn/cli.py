"""Command line: synth, featurize, train, tag, detect, tune, fuse, eval.

Exit status is 0 on success, 2 for usage errors and missing inputs, 1 when
a computation fails (including a partially failed featurize run).
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import storage
from .checkpoint import load_checkpoint, save_checkpoint
from .classes import CLASS_NAMES
from .config import RunConfig, format_config, load_config
from .decision import apply_thresholds, decode_events, fuse_checkpoints, fuse_models, tune_thresholds
from .evaluation import segment_metrics, tag_metrics, write_report
from .features import FeatureStats, extract, read_wav
from .model import build_network
from .synth import SynthConfig, make_corpus, write_corpus
from .training import TrainingDiverged, train

log = logging.getLogger("gcrnn")

FRAME_HOP_SEC = 10.0 / 240


class UsageError(Exception):
    pass


def _need(path, what: str) -> Path:
    if path is None:
        raise UsageError(f"{what} is required")
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} {p} does not exist")
    return p


def _config(args, required: bool = True) -> RunConfig | None:
    if args.config is None:
        if required:
            raise UsageError("--config is required")
        return None
    try:
        cfg = load_config(_need(args.config, "--config"))
    except ValueError as err:
        raise UsageError(str(err)) from None
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _manifest(args, cfg: RunConfig | None, check_paths: bool = False):
    path = args.manifest or (cfg.manifest if cfg else None) or None
    try:
        return storage.read_manifest(_need(path, "--manifest"), check_paths=check_paths)
    except FileNotFoundError as err:
        raise UsageError(str(err)) from None


def _load_features(store: Path, rows, kind: str | None = None) -> np.ndarray:
    mats = []
    for r in rows:
        p = storage.feature_path(store, r.clip_id)
        if not p.exists():
            raise UsageError(f"no features for clip {r.clip_id} in {store}; run featurize first")
        m = storage.read_features(p)
        if kind and m.kind != kind:
            raise ValueError(f"{p} holds {m.kind} features, expected {kind}")
        mats.append(m.values)
    return np.stack(mats)


def _posteriors(ckpt_paths, X_raw: np.ndarray):
    """First-level fusion: mean clip and frame posteriors over the given checkpoints."""
    clips, frames = [], []
    for p in ckpt_paths:
        ck = load_checkpoint(_need(p, "--checkpoint"))
        stats = ck.stats or FeatureStats.identity(X_raw.shape[2])
        c, f = ck.to_network().predict(stats.apply(X_raw))
        clips.append(c)
        frames.append(f)
    return fuse_checkpoints(clips), fuse_checkpoints(frames)


def _feature_kind_of(ckpt_paths) -> str | None:
    return load_checkpoint(_need(ckpt_paths[0], "--checkpoint")).meta.get("feature_kind")


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    cfg = SynthConfig(max_events=args.max_events)
    clips = make_corpus(args.n_clips, seed=args.seed if args.seed is not None else 0, cfg=cfg, prefix=args.prefix)
    manifest, strong = write_corpus(clips, _out(args))
    print(f"wrote {len(clips)} clips, {manifest} and {strong}")
    return 0


def cmd_featurize(args) -> int:
    cfg = _config(args)
    rows = _manifest(args, cfg, check_paths=False)
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    params = cfg.feature_params()
    failed = done = skipped = 0
    for r in rows:
        dst = storage.feature_path(out, r.clip_id)
        if dst.exists() and not args.force:
            skipped += 1
            continue
        try:
            clip = read_wav(r.wav_path, r.clip_id, target_rate=params.sample_rate)
            storage.write_features(dst, extract(clip, cfg.feature_kind, params))
            done += 1
        except Exception as err:  # one bad clip must not stop the rest
            log.error("%s: %s", r.clip_id, err)
            failed += 1
    print(f"featurized {done}, skipped {skipped} existing, failed {failed}")
    return 1 if failed else 0


def cmd_train(args) -> int:
    cfg = _config(args)
    rows = _manifest(args, cfg)
    X = _load_features(_need(args.features, "--features"), rows, cfg.feature_kind)
    Y = np.stack([r.tags for r in rows])
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    stats = FeatureStats.fit(list(X))
    net = build_network(cfg.model_config(len(CLASS_NAMES)), seed=cfg.seed)
    meta = {"feature_kind": cfg.feature_kind, "model_kind": cfg.model_kind, "seed": cfg.seed}
    (out / "config.txt").write_text(format_config(cfg))
    try:
        result = train(net, stats.apply(X), Y, cfg.train_config(), stats=stats, log_path=out / "train_log.csv", meta=meta)
    except TrainingDiverged as err:
        for ck in err.result.checkpoints:
            save_checkpoint(ck, out / f"step_{ck.step:06d}.ckpt")
        save_checkpoint(err.last_checkpoint, out / "last_good.ckpt")
        log.error("%s; last good state saved to %s", err, out / "last_good.ckpt")
        return 1
    for ck in result.checkpoints:
        save_checkpoint(ck, out / f"step_{ck.step:06d}.ckpt")
    print(f"trained {cfg.steps} steps, final loss {result.losses[-1]:.4f}, {len(result.checkpoints)} checkpoints in {out}")
    return 0


def cmd_tag(args) -> int:
    rows = _manifest(args, None)
    X = _load_features(_need(args.features, "--features"), rows, _feature_kind_of(args.checkpoint))
    clip, _ = _posteriors(args.checkpoint, X)
    ids = [r.clip_id for r in rows]
    storage.write_posteriors(_out(args), ids, clip)
    if args.thresholds:
        th = storage.read_thresholds(_need(args.thresholds, "--thresholds"), len(CLASS_NAMES))
        tags = apply_thresholds(clip, th)
        tag_path = _out(args).with_name(_out(args).stem + "_tags.csv")
        with open(tag_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["clip_id", "tags"])
            for cid, t in zip(ids, tags):
                w.writerow([cid, "|".join(CLASS_NAMES[c] for c in np.flatnonzero(t))])
    print(f"wrote clip posteriors for {len(ids)} clips to {_out(args)}")
    return 0


def cmd_detect(args) -> int:
    cfg = _config(args, required=False) or RunConfig()
    rows = _manifest(args, cfg)
    X = _load_features(_need(args.features, "--features"), rows, _feature_kind_of(args.checkpoint))
    clip, frames = _posteriors(args.checkpoint, X)
    if args.thresholds:
        th = storage.read_thresholds(_need(args.thresholds, "--thresholds"), len(CLASS_NAMES))
    else:
        th = np.full(len(CLASS_NAMES), 0.5)
    out = _out(args)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    ids = [r.clip_id for r in rows]
    storage.write_posteriors(out / "clip_posteriors.csv", ids, clip)
    events = {}
    for cid, fp in zip(ids, frames):
        storage.write_frame_posteriors(out / "frames" / f"{cid}.csv", fp)
        events[cid] = decode_events(fp, th, cfg.median_win, cfg.min_dur, cfg.gap_merge, FRAME_HOP_SEC)
    delim = "\t" if args.delimiter == "tab" else ","
    storage.write_events(out / "events.csv", events, delimiter=delim)
    print(f"detected {sum(map(len, events.values()))} events in {len(ids)} clips; outputs in {out}")
    return 0


def cmd_tune(args) -> int:
    rows = _manifest(args, None)
    ids, P, _ = storage.read_posteriors(_need(args.posteriors, "--posteriors"))
    refs = _align_refs(rows, ids)
    th = tune_thresholds(P, refs)
    storage.write_thresholds(_out(args), th)
    print(f"tuned {len(th)} thresholds on {len(ids)} clips -> {_out(args)}")
    return 0


def cmd_fuse(args) -> int:
    sets, ids0, names0 = [], None, None
    for p in args.posteriors:
        ids, P, names = storage.read_posteriors(_need(p, "--posteriors"))
        if ids0 is not None and (ids != ids0 or names != names0):
            raise ValueError(f"{p} lists different clips or classes than {args.posteriors[0]}")
        ids0, names0 = ids, names
        sets.append(P)
    fused = fuse_models(sets, args.weights)
    storage.write_posteriors(_out(args), ids0, fused, names0)
    print(f"fused {len(sets)} posterior sets -> {_out(args)}")
    return 0


def cmd_eval(args) -> int:
    rows_out = []
    if args.posteriors:
        manifest = _manifest(args, None)
        ids, P, _ = storage.read_posteriors(_need(args.posteriors, "--posteriors"))
        refs = _align_refs(manifest, ids)
        th = storage.read_thresholds(_need(args.thresholds, "--thresholds"), P.shape[1])
        rows_out.append((f"{args.system} (tags)", tag_metrics(apply_thresholds(P, th), refs, args.average)))
    if args.events or args.strong:
        ref = storage.read_strong(_need(args.strong, "--strong"))
        delim = "\t" if args.delimiter == "tab" else ","
        sys_ev = storage.read_events(_need(args.events, "--events"), delimiter=delim)
        m = segment_metrics(sys_ev, ref, len(CLASS_NAMES), seg_len=args.segment, duration=args.duration)
        rows_out.append((f"{args.system} (events)", {"F1": m["F1"], "ER": m["ER"]}))
    if not rows_out:
        raise UsageError("eval needs --posteriors/--thresholds and/or --events/--strong")
    out = _out(args)
    text = write_report(rows_out, out.with_suffix(".txt"), out.with_suffix(".csv"))
    print(text, end="")
    return 0


def _align_refs(rows, ids) -> np.ndarray:
    by_id = {r.clip_id: r.tags for r in rows}
    missing = [c for c in ids if c not in by_id]
    if missing:
        raise ValueError(f"{len(missing)} posterior clips are not in the manifest, e.g. {missing[0]}")
    return np.stack([by_id[c] for c in ids])


def _out(args) -> Path:
    if not args.out:
        raise UsageError("--out is required")
    return Path(args.out)


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gcrnn", description="Weakly supervised audio tagging and sound event detection.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(fn=fn)
        p.add_argument("--out", help="output file or directory")
        return p

    p = add("synth", cmd_synth, "write a synthetic corpus with known event times")
    p.add_argument("--n-clips", type=int, default=60)
    p.add_argument("--max-events", type=int, default=2)
    p.add_argument("--prefix", default="synth")
    p.add_argument("--seed", type=int)

    p = add("featurize", cmd_featurize, "extract one feature file per clip")
    p.add_argument("--config")
    p.add_argument("--manifest")
    p.add_argument("--force", action="store_true", help="recompute existing feature files")

    p = add("train", cmd_train, "train from weak labels, writing periodic checkpoints")
    p.add_argument("--config")
    p.add_argument("--manifest")
    p.add_argument("--features")
    p.add_argument("--seed", type=int)

    p = add("tag", cmd_tag, "clip posteriors (mean over the given checkpoints)")
    p.add_argument("--checkpoint", nargs="+", required=True)
    p.add_argument("--manifest")
    p.add_argument("--features")
    p.add_argument("--thresholds", help="also write <out>_tags.csv")

    p = add("detect", cmd_detect, "frame posteriors per clip and decoded events")
    p.add_argument("--checkpoint", nargs="+", required=True)
    p.add_argument("--config")
    p.add_argument("--manifest")
    p.add_argument("--features")
    p.add_argument("--thresholds")
    p.add_argument("--delimiter", choices=("comma", "tab"), default="comma")

    p = add("tune", cmd_tune, "per-class thresholds maximising class F1")
    p.add_argument("--posteriors")
    p.add_argument("--manifest")

    p = add("fuse", cmd_fuse, "weighted mean of posterior files")
    p.add_argument("--posteriors", nargs="+", required=True)
    p.add_argument("--weights", nargs="+", type=float)

    p = add("eval", cmd_eval, "tag F1/P/R and segment F1/ER; --out is a report prefix")
    p.add_argument("--manifest")
    p.add_argument("--posteriors")
    p.add_argument("--thresholds")
    p.add_argument("--events")
    p.add_argument("--strong")
    p.add_argument("--delimiter", choices=("comma", "tab"), default="comma")
    p.add_argument("--average", choices=("micro", "macro"), default="micro")
    p.add_argument("--segment", type=float, default=1.0)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--system", default="system")
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except UsageError as err:
        parser.print_usage(sys.stderr)
        print(f"gcrnn {args.command}: error: {err}", file=sys.stderr)
        return 2
    except Exception as err:
        print(f"gcrnn {args.command}: failed: {err}", file=sys.stderr)
        if args.verbose:
            raise
        return 1


if __name__ == "__main__":
    sys.exit(main())
