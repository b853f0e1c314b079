"""Isolation Forest (Liu, Ting & Zhou) with array-backed trees.

Score of a point: ``s(x) = 2 ** (-E[h(x)] / c(psi))`` where ``h`` is the leaf
depth plus ``c(m)`` for a leaf still holding ``m`` training points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EULER_GAMMA = 0.5772156649015329
_EXACT_HARMONIC = 10_000
_HARMONIC = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, _EXACT_HARMONIC + 1))])


def harmonic(m: int) -> float:
    """H(m) = sum_{i<=m} 1/i; exact table up to 1e4, asymptotic beyond."""
    if m <= _EXACT_HARMONIC:
        return float(_HARMONIC[m])
    return math.log(m) + EULER_GAMMA


def average_path_length(m: int) -> float:
    """c(m): mean unsuccessful-search path length in a BST of m points."""
    if m <= 1:
        return 0.0
    return 2.0 * harmonic(m - 1) - 2.0 * (m - 1) / m


@dataclass
class IsoTree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray  # training points that reached each node
    depth: np.ndarray
    # per-node min/max of the split feature over the routed points
    lo: np.ndarray
    hi: np.ndarray

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def path_length(self, x: np.ndarray) -> np.ndarray:
        """h(x) for each row of ``x`` [M, C]."""
        node = np.zeros(len(x), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.nonzero(active)[0]
            nd = node[idx]
            go_left = x[idx, self.feature[nd]] < self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active[idx] = self.feature[node[idx]] >= 0
        leaf_adjust = np.array([average_path_length(int(s)) for s in range(int(self.size.max()) + 1)])
        return self.depth[node] + leaf_adjust[self.size[node]]


def _grow(points: np.ndarray, max_depth: int, rng: np.random.Generator) -> IsoTree:
    feature, threshold, left, right, size, depth, lo_l, hi_l = ([] for _ in range(8))

    def new_node(n, d):
        for lst, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (size, n), (depth, d), (lo_l, 0.0), (hi_l, 0.0)):
            lst.append(v)
        return len(feature) - 1

    stack = [(new_node(len(points), 0), np.arange(len(points)))]
    while stack:
        node, rows = stack.pop()
        d = depth[node]
        if d >= max_depth or len(rows) <= 1:
            continue
        sub = points[rows]
        mins, maxs = sub.min(axis=0), sub.max(axis=0)
        splittable = np.nonzero(maxs > mins)[0]
        if len(splittable) == 0:
            continue
        f = int(rng.choice(splittable))
        lo, hi = mins[f], maxs[f]
        p = rng.uniform(lo, hi)
        while p <= lo:
            p = rng.uniform(lo, hi)
        mask = sub[:, f] < p
        feature[node], threshold[node], lo_l[node], hi_l[node] = f, p, lo, hi
        l_node = new_node(int(mask.sum()), d + 1)
        r_node = new_node(int((~mask).sum()), d + 1)
        left[node], right[node] = l_node, r_node
        stack.append((r_node, rows[~mask]))
        stack.append((l_node, rows[mask]))

    arr = lambda v, dt: np.asarray(v, dtype=dt)  # noqa: E731
    return IsoTree(
        arr(feature, np.int64),
        arr(threshold, np.float64),
        arr(left, np.int64),
        arr(right, np.int64),
        arr(size, np.int64),
        arr(depth, np.int64),
        arr(lo_l, np.float64),
        arr(hi_l, np.float64),
    )


@dataclass
class IsoForest:
    n_features: int
    psi: int  # subsample size actually used
    trees: list[IsoTree]
    n_trees: int = 100
    subsample: int = 256
    contamination: float = 0.1
    threshold: float = field(default=float("nan"))

    @property
    def depth_cap(self) -> int:
        return math.ceil(math.log2(self.psi)) if self.psi > 1 else 0

    def mean_path_length(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ValueError(f"expected points [M, {self.n_features}], got {x.shape}")
        total = np.zeros(len(x))
        for tree in self.trees:
            total += tree.path_length(x)
        return total / len(self.trees)

    def score_many(self, x) -> np.ndarray:
        return anomaly_score(self.mean_path_length(x), self.psi)

    def flag(self, x) -> np.ndarray:
        return self.score_many(x) > self.threshold


def anomaly_score(mean_path, psi: int) -> np.ndarray:
    return np.power(2.0, -np.asarray(mean_path, dtype=np.float64) / average_path_length(psi))


def iso_fit(
    points,
    seed: int = 0,
    n_trees: int = 100,
    subsample: int = 256,
    contamination: float = 0.1,
) -> IsoForest:
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if len(x) < 2:
        raise ValueError(f"isolation forest needs at least 2 points, got {len(x)}")
    if not 0 < contamination < 1:
        raise ValueError(f"contamination must lie in (0, 1), got {contamination}")
    rng = np.random.default_rng(seed)
    psi = min(subsample, len(x))
    cap = math.ceil(math.log2(psi))
    trees = []
    for _ in range(n_trees):
        rows = rng.choice(len(x), size=psi, replace=False)
        trees.append(_grow(x[rows], cap, rng))
    forest = IsoForest(x.shape[1], psi, trees, n_trees, subsample, contamination)

    # flag ceil(contamination * n) training points: threshold sits at the next score down
    scores = np.sort(forest.score_many(x))[::-1]
    k = math.ceil(contamination * len(x) - 1e-9)
    forest.threshold = float(scores[k]) if k < len(scores) else float(scores[-1]) - 1e-12
    return forest


def iso_score(forest: IsoForest, query) -> float:
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (forest.n_features,):
        raise ValueError(f"query must have {forest.n_features} components, got shape {q.shape}")
    return float(forest.score_many(q[None])[0])
