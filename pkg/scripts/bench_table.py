"""Inference frequency of each detector on pre-built inputs.

Windows are random and built before timing, so only model cost is measured.
"""

import argparse

import numpy as np

from varade.baselines import iso_fit, knn_fit, knn_score
from varade.bench import bench_throughput
from varade.model import VaradeConfig, build, forward


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--window", type=int, default=512)
    p.add_argument("--channels", type=int, default=86)
    p.add_argument("--base-maps", type=int, default=128)
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--reference", type=int, default=20_000, help="kNN reference points / iForest training rows")
    args = p.parse_args()

    rng = np.random.default_rng(0)
    c, t = args.channels, args.window
    windows = [rng.uniform(-1, 1, (c, t)).astype(np.float32) for _ in range(16)]
    points = [w[:, -1].astype(np.float64) for w in windows]
    train = rng.uniform(-1, 1, (args.reference, c))

    model = build(VaradeConfig(window=t, channels=c, base_maps=args.base_maps))
    index = knn_fit(train, 5)
    forest = iso_fit(train, seed=0)
    rows = [
        (f"varade T={t} base={args.base_maps}", lambda w: forward(model, w), windows),
        (f"knn k=5 n={args.reference}", lambda q: knn_score(index, q), points),
        ("iforest 100 trees", lambda q: forest.score_many(q[None, :]), points),
    ]
    print(f"{'detector':<28}{'Hz':>10}{'p50 ms':>10}{'p99 ms':>10}")
    for name, fn, inputs in rows:
        r = bench_throughput(fn, inputs, args.iterations, args.warmup, threads=args.threads)
        print(f"{name:<28}{r.frequency_hz:>10.1f}{r.p50_ms:>10.2f}{r.p99_ms:>10.2f}")


if __name__ == "__main__":
    main()
