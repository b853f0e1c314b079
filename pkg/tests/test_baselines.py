import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varade.baselines import iso_fit, iso_score, knn_fit, knn_score, knn_score_many
from varade.baselines.iforest import anomaly_score, average_path_length, harmonic


def knn_oracle(points, q, k):
    """Full sort of all distances, plain Python."""
    d = sorted(math.sqrt(sum((a - b) ** 2 for a, b in zip(p, q))) for p in points)
    return d[k - 1]


# -- kNN ----------------------------------------------------------------------


def test_fit_boundaries():
    knn_fit(np.zeros((5, 2)), k=5)
    with pytest.raises(ValueError):
        knn_fit(np.zeros((4, 2)), k=5)
    with pytest.raises(ValueError):
        knn_fit(np.zeros((4, 2)), k=0)


def test_stored_point_k1_scores_zero():
    pts = np.random.default_rng(0).normal(size=(10, 3))
    assert knn_score(knn_fit(pts, 1), pts[4]) == 0.0


def test_hand_countable_1d():
    idx = knn_fit(np.arange(5.0)[:, None], k=5)
    assert knn_score(idx, [0.0]) == 4.0


def test_training_points_score_below_diameter():
    pts = np.random.default_rng(1).normal(size=(30, 4))
    diameter = max(np.linalg.norm(a - b) for a in pts for b in pts)
    idx = knn_fit(pts, 5)
    assert all(knn_score(idx, p) <= diameter for p in pts)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(1, 5), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_knn_matches_full_sort(n, c, k, seed):
    k = min(k, n)
    rng = np.random.default_rng(seed)
    pts = rng.integers(-3, 4, (n, c)).astype(float)  # lattice points force distance ties
    q = rng.integers(-4, 5, c).astype(float)
    assert knn_score(knn_fit(pts, k), q) == knn_oracle(pts.tolist(), q.tolist(), k)


@pytest.mark.parametrize("seed", range(5))
def test_batched_knn_is_bit_identical(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(300, 6)) * rng.uniform(0.1, 50)
    qs = np.concatenate([rng.normal(size=(100, 6)), pts[:20], pts[:5] + 1e-9])
    idx = knn_fit(pts, 5)
    single = np.array([knn_score(idx, q) for q in qs])
    for margin in (0, 3, 16, 1000):
        np.testing.assert_array_equal(knn_score_many(idx, qs, margin=margin, max_elements=999), single)


def test_knn_is_order_invariant():
    rng = np.random.default_rng(2)
    pts, q = rng.normal(size=(50, 3)), rng.normal(size=3)
    assert knn_score(knn_fit(pts, 4), q) == knn_score(knn_fit(pts[rng.permutation(50)], 4), q)


def test_knn_query_shape():
    with pytest.raises(ValueError):
        knn_score(knn_fit(np.zeros((5, 2)), 1), [1.0, 2.0, 3.0])


# -- Isolation Forest ---------------------------------------------------------


def test_c_of_small_sizes():
    assert average_path_length(2) == 1.0
    assert average_path_length(1) == 0.0
    assert average_path_length(3) == pytest.approx(2 * 1.5 - 4 / 3)


def test_harmonic_table_and_asymptote():
    assert harmonic(4) == pytest.approx(1 + 1 / 2 + 1 / 3 + 1 / 4)
    exact = math.fsum(1 / i for i in range(1, 20_001))
    assert harmonic(20_000) == pytest.approx(exact, abs=1e-4)


def test_score_half_at_average_path():
    for psi in (2, 16, 256):
        assert anomaly_score(average_path_length(psi), psi) == pytest.approx(0.5, abs=1e-15)


def test_score_monotone_in_path_length():
    h = np.linspace(0, 30, 200)
    s = anomaly_score(h, 256)
    assert np.all(np.diff(s) < 0)
    c = 2 * math.fsum(1 / i for i in range(1, 256)) - 2 * 255 / 256
    np.testing.assert_allclose(s, [2 ** (-v / c) for v in h], rtol=1e-12)
    assert s[0] == 1.0


def test_identical_points_are_unsplittable():
    f = iso_fit(np.ones((2, 3)), seed=0, n_trees=10)
    for t in f.trees:
        assert len(t.feature) == 1 and t.feature[0] == -1
    np.testing.assert_array_equal(f.mean_path_length(np.ones((2, 3))), [1.0, 1.0])


def test_depth_cap():
    rng = np.random.default_rng(0)
    f = iso_fit(rng.normal(size=(1000, 2)), seed=1, n_trees=20, subsample=256)
    assert f.depth_cap == 8
    assert max(t.max_depth for t in f.trees) <= 8
    assert all(t.size[0] == 256 for t in f.trees)


def test_scores_in_open_unit_interval():
    rng = np.random.default_rng(3)
    f = iso_fit(rng.normal(size=(200, 3)), seed=0, n_trees=30)
    s = f.score_many(rng.normal(size=(50, 3)) * 5)
    assert np.all((s > 0) & (s < 1))


def test_gross_outlier_ranks_highest():
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x = np.concatenate([rng.normal(size=199), [40.0]])
        f = iso_fit(x, seed=seed, n_trees=50)
        hits += int(np.argmax(f.score_many(x[:, None])) == 199)
    assert hits >= 19


def test_fixed_seed_gives_identical_forest():
    x = np.random.default_rng(4).normal(size=(100, 2))
    a, b = iso_fit(x, seed=7, n_trees=5), iso_fit(x, seed=7, n_trees=5)
    for ta, tb in zip(a.trees, b.trees):
        np.testing.assert_array_equal(ta.threshold, tb.threshold)
    assert iso_score(a, x[0]) == iso_score(b, x[0])


def test_contamination_threshold_flags_tenth():
    x = np.random.default_rng(5).normal(size=(500, 2))
    f = iso_fit(x, seed=0, n_trees=50, contamination=0.1)
    assert int(f.flag(x).sum()) == 50


def test_iforest_rejects():
    with pytest.raises(ValueError):
        iso_fit(np.zeros((1, 2)))
    with pytest.raises(ValueError):
        iso_fit(np.zeros((5, 2)), contamination=0.0)
