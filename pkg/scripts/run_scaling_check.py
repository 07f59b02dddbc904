#!/usr/bin/env python3
"""Training-time scaling check over the instance count.

Times train() at a grid of dataset sizes with anchors, clusters, bit
width, and the iteration budget held fixed, then prints the wall-time
ratios between consecutive sizes. The per-iteration cost is dominated by
N x P matrix products, so doubling N should roughly double the time:

    python3 scripts/run_scaling_check.py --sizes 1000 2000 4000 8000
"""

import argparse
import sys
from pathlib import Path
from time import perf_counter

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from anchorhash.dataset import synth_multimodal
from anchorhash.training import Hyperparams, train


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+",
                        default=[1000, 2000, 4000, 8000])
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--clusters", type=int, default=4)
    parser.add_argument("--dims", type=int, nargs="+", default=[16, 24])
    parser.add_argument("--bits", type=int, default=16)
    parser.add_argument("--anchors", type=int, default=64)
    parser.add_argument("--knn", type=int, default=8)
    parser.add_argument("--iters", type=int, default=5)
    parser.add_argument("--threads", type=int, default=1)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    hyper = Hyperparams(
        bits=args.bits, anchors=args.anchors, clusters=args.clusters,
        knn=args.knn, max_iters=args.iters, tol=0.0,
    )
    try:
        from threadpoolctl import threadpool_limits
        guard = threadpool_limits(limits=args.threads)
    except ImportError:
        from contextlib import nullcontext
        guard = nullcontext()
        print("threadpoolctl unavailable; timings use the default thread pool",
              file=sys.stderr)
    print(f"{args.iters} iterations, {args.anchors} anchors, "
          f"{args.bits} bits, median of {args.repeats} runs")
    print(f"{'N':>7}  {'seconds':>8}  {'vs prev':>7}")
    previous = None
    with guard:
        for size in args.sizes:
            dataset = synth_multimodal(
                args.clusters, size, args.dims, noise=0.1, seed=11,
            )
            times = []
            for _ in range(args.repeats):
                t0 = perf_counter()
                train(dataset, hyper)
                times.append(perf_counter() - t0)
            median = float(np.median(times))
            ratio = "" if previous is None else f"{median / previous:>7.2f}"
            print(f"{size:>7d}  {median:>8.3f}  {ratio:>7}")
            previous = median
    return 0


if __name__ == "__main__":
    sys.exit(main())
