"""How the KL weight pulls predictions toward the standard normal.

Trains one small model per weight from the same seed on the same stream and
reports mean |mu|, mean |logvar| and the collision AUC.
"""

import argparse

import numpy as np

from varade.data import Normalizer
from varade.detector import score_windows
from varade.evaluation import auc_roc
from varade.model import VaradeConfig, build, forward
from varade.synth import SynthConfig, synth_generate
from varade.training import TrainConfig, train


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--weights", type=float, nargs="+", default=[0.0, 0.01, 0.1, 1.0, 10.0, 100.0])
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--window", type=int, default=16)
    p.add_argument("--base-maps", type=int, default=16)
    p.add_argument("--cycles", type=int, default=6)
    args = p.parse_args()

    tr = synth_generate(SynthConfig(cycles=args.cycles, sample_rate=20, seed=1))
    te = synth_generate(SynthConfig(cycles=args.cycles, sample_rate=20, seed=2, anomalies=10))
    norm = Normalizer.fit(tr.values)
    xtr, xte = norm.apply(tr.values), norm.apply(te.values)
    held = np.ascontiguousarray(np.lib.stride_tricks.sliding_window_view(xte, args.window, axis=0)[::7])

    print(f"{'lambda':>8}{'mean|mu|':>10}{'mean|lv|':>10}{'auc':>8}")
    for lam in args.weights:
        m = build(VaradeConfig(window=args.window, channels=xtr.shape[1], base_maps=args.base_maps, kl_weight=lam), seed=0)
        train(m, xtr, TrainConfig(steps=args.steps, batch_size=32, lr=1e-3, seed=0))
        mu, lv = forward(m, held)
        auc = auc_roc(score_windows(m, xte), te.labels[args.window - 1 :])
        print(f"{lam:>8g}{np.abs(mu.data).mean():>10.4f}{np.abs(lv.data).mean():>10.4f}{auc:>8.4f}")


if __name__ == "__main__":
    main()
