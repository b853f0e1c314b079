"""Acceptance gate: one PASS/FAIL line per criterion.

Run under pytest (lines go straight to the terminal) or directly with
``python tests/test_acceptance.py``.
"""

import math
import sys
import time

import numpy as np
import pytest

from varade.baselines import iso_fit, knn_fit, knn_score
from varade.baselines.iforest import average_path_length
from varade.bench import bench_throughput
from varade.checkpoint import dumps, loads
from varade.data import Normalizer
from varade.desk import DeskConfig, run_desk
from varade.detector import VaradeDetector, WindowBuffer, detect_stream
from varade.evaluation import auc_roc
from varade.gradcheck import finite_difference_check
from varade.losses import gaussian_nll, kl_std_normal
from varade.model import VaradeConfig, build, forward
from varade.synth import SynthConfig, synth_generate
from varade.tensor import Tensor, conv1d, relu
from varade.training import TrainConfig, train

RESULTS = {}


def report(n, ok, detail):
    RESULTS[n] = ok
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
    return ok


def f64(a):
    return Tensor(np.atleast_1d(np.asarray(a, dtype=np.float64)), dtype=np.float64)


# -- 1 ------------------------------------------------------------------------


def check_gradients():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(20):
        t, c, b = rng.choice([4, 8, 16]), rng.choice([1, 3]), rng.choice([1, 2, 4])
        lam = float(rng.choice([0.0, 0.5, 1.0, 3.0]))
        model = build(VaradeConfig(window=int(t), channels=int(c), base_maps=int(b), kl_weight=lam), seed=i)
        # nonzero biases keep pre-activations off the ReLU kink, where no derivative exists
        for _, bias in model.conv:
            bias.data[:] = rng.uniform(-0.5, 0.5, bias.shape)
        x = rng.uniform(-1, 1, (2, c, t))
        y = rng.uniform(-1, 1, (2, c))
        worst = max(worst, finite_difference_check(model, x, y, lam).max_rel_error)
    elapsed = time.perf_counter() - t0
    return report(1, worst < 1e-4 and elapsed < 60, f"max rel err {worst:.2e} over 20 configs in {elapsed:.1f}s")


# -- 2 ------------------------------------------------------------------------


def check_loss_identities():
    tol = 1e-6
    ok = abs(float(gaussian_nll(f64([0.7, -0.2]), f64([0.7, -0.2]), f64([0.0, 0.0])))) <= tol
    ok &= abs(float(kl_std_normal(f64(0.0), f64(0.0)))) <= tol
    ok &= abs(float(kl_std_normal(f64(1.0), f64(0.0))) - 0.5) <= tol
    rng = np.random.default_rng(7)
    mu = rng.normal(0, 2, 10_000)
    lv = rng.uniform(-10, 10, 10_000)
    mu[:100], lv[:100] = 0.0, 0.0  # the standard-normal point itself
    kl = np.array([float(kl_std_normal(f64(m), f64(l))) for m, l in zip(mu, lv)])
    at_std = (mu == 0) & (lv == 0)
    ok &= bool(np.all(kl >= 0)) and bool(np.all(kl[at_std] == 0)) and bool(np.all(kl[~at_std] > 0))
    return report(2, ok, f"identities hold, min KL off the standard normal {kl[~at_std].min():.3e}")


# -- 3 ------------------------------------------------------------------------


def check_geometry():
    cfg = VaradeConfig()
    model = build(VaradeConfig(window=512, channels=2, base_maps=2))
    lengths, h = [], Tensor(np.zeros((1, 2, 512)))
    for w, b in model.conv:
        h = relu(conv1d(h, w, b))
        lengths.append(h.shape[-1])
    ok = cfg.n_layers == 8 and cfg.feature_maps[-1] == 1024 and lengths[-1] == 2 and len(lengths) == 8
    return report(3, ok, f"{cfg.n_layers} layers, maps {cfg.feature_maps}, lengths {lengths}")


# -- 4 ------------------------------------------------------------------------


def pairwise_auc(s, y):
    pos = [a for a, l in zip(s, y) if l]
    neg = [a for a, l in zip(s, y) if not l]
    return sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg) / (len(pos) * len(neg))


def check_auc():
    rng = np.random.default_rng(11)
    mismatches = 0
    for _ in range(100):
        n = int(rng.integers(2, 201))
        y = rng.integers(0, 2, n)
        y[0], y[1] = 0, 1
        s = rng.integers(0, 8, n).astype(float)  # coarse values force ties
        if rng.random() < 0.5:
            s += rng.normal(size=n)
        mismatches += auc_roc(s, y) != pairwise_auc(s.tolist(), y.tolist())
    return report(4, mismatches == 0, f"{100 - mismatches}/100 instances identical to the pairwise oracle")


# -- 5 ------------------------------------------------------------------------


def check_baselines():
    rng = np.random.default_rng(13)
    knn_ok = 0
    for _ in range(100):
        n, c = int(rng.integers(1, 60)), int(rng.integers(1, 6))
        k = int(rng.integers(1, n + 1))
        pts = rng.integers(-3, 4, (n, c)).astype(float) if rng.random() < 0.5 else rng.normal(size=(n, c))
        q = rng.normal(size=c)
        oracle = sorted(math.sqrt(sum((a - b) ** 2 for a, b in zip(p, q))) for p in pts.tolist())[k - 1]
        knn_ok += knn_score(knn_fit(pts, k), q) == oracle
    hits = 0
    for seed in range(100):
        r = np.random.default_rng(seed)
        x = np.concatenate([r.normal(size=255), [25.0]])
        hits += int(np.argmax(iso_fit(x, seed=seed).score_many(x[:, None])) == 255)
    c2 = average_path_length(2)
    ok = knn_ok == 100 and hits >= 95 and c2 == 1.0
    return report(5, ok, f"kNN exact {knn_ok}/100, iForest outlier top {hits}/100, c(2)={c2}")


# -- 6 ------------------------------------------------------------------------

DESK = DeskConfig()


def check_desk():
    t0 = time.perf_counter()
    r = run_desk(DESK)
    elapsed = time.perf_counter() - t0
    ok = r.auc_varade >= 0.80 and r.ordering_holds() and r.minutes_simulated >= 60 and DESK.steps >= 2000
    return report(
        6,
        ok,
        f"AUC varade {r.auc_varade:.4f} knn {r.auc_knn:.4f} iforest {r.auc_iforest:.4f} "
        f"({r.minutes_simulated:.1f} min simulated, {DESK.steps} steps, {elapsed / 60:.1f} min wall)",
    )


# -- 7 ------------------------------------------------------------------------


def check_kl_pull():
    s = synth_generate(SynthConfig(cycles=4, sample_rate=20, seed=5))
    x = Normalizer.fit(s.values).apply(s.values)
    held = np.ascontiguousarray(np.lib.stride_tricks.sliding_window_view(x[-600:], 16, axis=0)[::5])
    stats = {}
    for lam in (0.0, 100.0):
        m = build(VaradeConfig(window=16, channels=x.shape[1], base_maps=8, kl_weight=lam), seed=3)
        train(m, x, TrainConfig(steps=500, batch_size=32, lr=1e-3, seed=4, log_every=500))
        mu, lv = forward(m, held)
        stats[lam] = (float(np.abs(mu.data).mean()), float(np.abs(lv.data).mean()))
    ok = stats[100.0][0] < stats[0.0][0] and stats[100.0][1] < stats[0.0][1]
    return report(
        7,
        ok,
        f"mean|mu| {stats[0.0][0]:.4f} -> {stats[100.0][0]:.4f}, mean|logvar| {stats[0.0][1]:.4f} -> {stats[100.0][1]:.4f}",
    )


# -- 8 ------------------------------------------------------------------------


def check_streaming():
    rng = np.random.default_rng(17)
    t, c = 8, 5
    model = build(VaradeConfig(window=t, channels=c, base_maps=2), seed=1)
    norm = Normalizer(np.full(c, -3.0), np.full(c, 3.0))
    raw = rng.normal(size=(137, c))

    def run():
        out = []
        stats = detect_stream(VaradeDetector(model, norm), ((i, raw[i]) for i in range(len(raw))), out.append)
        return out, stats

    first, stats = run()
    count_ok = stats.scored == len(raw) - (t - 1) == len(first)
    replay = run()[0]
    replay_ok = [(p.timestamp, p.score) for p in first] == [(p.timestamp, p.score) for p in replay]

    ring_ok = True
    for cap in (1, 3, 8):
        buf, naive = WindowBuffer(cap, 2), []
        for i in range(50):
            v = rng.normal(size=2).astype(np.float32)
            buf.push(v)
            naive = (naive + [v])[-cap:]
            ring_ok &= buf.fill == len(naive) and np.array_equal(buf.snapshot(), np.array(naive))

    back_model, back_norm = loads(dumps(model, norm))
    bits_ok = all(p.data.tobytes() == q.data.tobytes() for p, q in zip(model.parameters(), back_model.parameters()))
    bits_ok &= back_norm.minimum.tobytes() == norm.minimum.tobytes() and back_norm.maximum.tobytes() == norm.maximum.tobytes()
    a = VaradeDetector(model, norm).score_array(raw)
    b = VaradeDetector(back_model, back_norm).score_array(raw)
    bits_ok &= a.tobytes() == b.tobytes()

    ok = count_ok and replay_ok and ring_ok and bits_ok
    detail = f"{stats.scored} scores for {len(raw)} samples at T={t}; ring {ring_ok}, replay {replay_ok}, round trip {bits_ok}"
    return report(8, ok, detail)


# -- 9 ------------------------------------------------------------------------


def check_bench():
    model = build(VaradeConfig(), seed=0)  # T=512, C=86, base 128: a few seconds per run
    inputs = [np.random.default_rng(i).uniform(-1, 1, (86, 512)).astype(np.float32) for i in range(8)]

    def infer(x):
        return forward(model, x)

    runs = [bench_throughput(infer, inputs, iterations=400, warmup=20) for _ in range(2)]
    hz = [r.frequency_hz for r in runs]
    stable = abs(hz[0] - hz[1]) <= 0.2 * max(hz)

    # counter proof: every warm-up call precedes the first timed stamp
    log = []

    def counted(x):
        log.append("call")

    def clock():
        log.append("stamp")
        return float(len(log))

    r = bench_throughput(counted, inputs, iterations=30, warmup=7, clock=clock)
    first_stamp = log.index("stamp")
    warm_ok = first_stamp == 7 and log.count("call") == 37 and r.iterations == 30 and r.warmup_excluded == 7

    ok = all(0 < h < math.inf for h in hz) and stable and warm_ok
    return report(9, ok, f"{hz[0]:.1f} Hz then {hz[1]:.1f} Hz, warm-up excluded {warm_ok}")


CHECKS = {
    1: check_gradients,
    2: check_loss_identities,
    3: check_geometry,
    4: check_auc,
    5: check_baselines,
    6: check_desk,
    7: check_kl_pull,
    8: check_streaming,
    9: check_bench,
}


@pytest.mark.parametrize("n", sorted(CHECKS))
def test_criterion(n, capsys):
    with capsys.disabled():  # the verdict line goes to the terminal even when it passes
        ok = CHECKS[n]()
    assert ok


if __name__ == "__main__":
    for n in sorted(CHECKS):
        CHECKS[n]()
    sys.exit(0 if all(RESULTS.values()) else 1)
