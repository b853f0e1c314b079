import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varade.bench import bench_throughput
from varade.evaluation import ScoredPoint, UndefinedAUCError, auc_from_points, auc_roc, evaluate


def pairwise_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def test_auc_examples():
    assert auc_roc([1, 2, 3, 4], [0, 0, 1, 1]) == 1.0
    assert auc_roc([4, 3, 2, 1], [0, 0, 1, 1]) == 0.0
    assert auc_roc([1, 1, 1, 1], [0, 1, 0, 1]) == 0.5


@pytest.mark.parametrize("labels", [[0, 0, 0], [1, 1]])
def test_single_class_is_undefined(labels):
    with pytest.raises(UndefinedAUCError):
        auc_roc(np.arange(len(labels)), labels)


scored = st.integers(2, 200).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 6).map(float), min_size=n, max_size=n),
        st.lists(st.integers(0, 1), min_size=n, max_size=n).filter(lambda y: 0 < sum(y) < len(y)),
    )
)


@settings(max_examples=200, deadline=None)
@given(scored)
def test_auc_equals_pair_counting(sl):
    s, y = sl
    assert auc_roc(s, y) == pytest.approx(pairwise_auc(s, y), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(scored)
def test_auc_invariant_under_monotone_maps(sl):
    s, y = sl
    a = auc_roc(s, y)
    assert auc_roc(np.exp(np.asarray(s) / 3), y) == pytest.approx(a, abs=1e-12)
    assert auc_roc(-np.asarray(s), y) == pytest.approx(1 - a, abs=1e-12)


def test_auc_from_points():
    pts = [ScoredPoint(0.0, 0.1, 0), ScoredPoint(1.0, 0.9, 1)]
    assert auc_from_points(pts) == 1.0
    with pytest.raises(ValueError):
        auc_from_points([ScoredPoint(0.0, 0.1)])


def test_evaluate_report():
    r = evaluate([0.1, 0.2, 0.9, 0.3], [0, 0, 1, 0])
    assert r.auc == 1.0 and r.n_normal == 3 and r.n_anomaly == 1
    assert r.anomaly_scores["max"] == 0.9
    assert "auc 1.000000" in r.to_text()
    assert r.to_record()["normal_median"] == pytest.approx(0.2)


# -- bench --------------------------------------------------------------------


class FakeClock:
    def __init__(self, step):
        self.t, self.step = 0.0, step

    def __call__(self):
        return self.t

    def advance(self, *_):
        self.t += self.step


def test_single_iteration_is_inverse_latency():
    clock = FakeClock(0.25)
    r = bench_throughput(clock.advance, [None], iterations=1, warmup=0, clock=clock)
    assert r.frequency_hz == 4.0
    assert r.p50_ms == 250.0


def test_warmup_calls_are_not_measured():
    calls = []
    clock = FakeClock(0.01)

    def infer(x):
        calls.append(x)
        clock.advance()

    r = bench_throughput(infer, list(range(3)), iterations=100, warmup=10, clock=clock)
    assert len(calls) == 110
    assert r.iterations == 100 and r.warmup_excluded == 10
    # the measured span covers exactly the 100 timed calls
    assert r.wall_s == pytest.approx(1.0)
    assert r.frequency_hz == pytest.approx(100.0)
    assert calls[:10] == [0, 1, 2, 0, 1, 2, 0, 1, 2, 0]


def test_latency_percentiles():
    steps = itertools.cycle([0.001] * 9 + [0.1])
    clock = FakeClock(0)

    def infer(_):
        clock.t += next(steps)

    r = bench_throughput(infer, [0], iterations=100, warmup=0, clock=clock)
    assert r.p50_ms == pytest.approx(1.0)
    assert r.p99_ms == pytest.approx(100.0)
    assert r.frequency_hz == pytest.approx(100 / (90 * 0.001 + 10 * 0.1))


def test_real_clock_gives_finite_positive_rate():
    r = bench_throughput(lambda x: math.sqrt(x), [2.0], iterations=50, warmup=5)
    assert 0 < r.frequency_hz < float("inf")
    assert "Hz" in r.to_text() and r.to_record()["iterations"] == 50


def test_threads_count_all_completions():
    r = bench_throughput(lambda x: sum(range(100)), [0], iterations=20, warmup=2, threads=3)
    assert r.iterations == 60 and r.threads == 3


@pytest.mark.parametrize("kw", [dict(iterations=0), dict(iterations=1, inputs=[])])
def test_bench_rejects(kw):
    inputs = kw.pop("inputs", [0])
    with pytest.raises(ValueError):
        bench_throughput(lambda x: x, inputs, **kw)
