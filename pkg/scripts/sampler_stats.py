"""Class shares produced by the balanced sampler on a 17-class skewed label set."""

import argparse

import numpy as np

from gcrnn.classes import LARGEST_CLASS, SMALLEST_CLASS, skewed_counts
from gcrnn.training import BalancedBatchSampler


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--batch-size", type=int, default=128)
    ap.add_argument("--batches", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    counts = skewed_counts()
    Y = np.zeros((counts.sum(), len(counts)), dtype=np.int8)
    Y[np.arange(counts.sum()), np.repeat(np.arange(len(counts)), counts)] = 1
    sampler = BalancedBatchSampler(Y, args.batch_size, args.seed)
    tally = np.zeros(len(counts))
    missing = np.zeros(len(counts), dtype=int)
    for _ in range(args.batches):
        hits = Y[sampler.next_batch()].sum(0)
        tally += hits
        missing += hits == 0
    share = tally / tally.sum()
    ratio = counts / counts.sum()
    target = np.maximum(ratio, 1.0 / args.batch_size)
    print(f"{'class':<8}{'clips':>7}{'ratio':>9}{'target':>9}{'sampled':>9}{'rel.err':>9}{'absent':>8}")
    for c in range(len(counts)):
        print(f"{c:<8}{counts[c]:>7}{ratio[c]:>9.4f}{target[c]:>9.4f}{share[c]:>9.4f}"
              f"{100 * abs(share[c] - target[c]) / target[c]:>8.1f}%{missing[c]:>8}")
    print(f"index 0 plays {LARGEST_CLASS[0]!r} ({LARGEST_CLASS[1]} clips), index {len(counts) - 1} plays "
          f"{SMALLEST_CLASS[0]!r} ({SMALLEST_CLASS[1]}); counts in between are interpolated")


if __name__ == "__main__":
    main()
