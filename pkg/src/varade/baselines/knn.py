"""Exact k-nearest-neighbour detector: score is the distance to the k-th neighbour."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class KnnIndex:
    points: np.ndarray  # [N, C] stored verbatim
    k: int = 5

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        if self.points.ndim != 2:
            raise ValueError(f"points must be [N, C], got {self.points.shape}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.k > len(self.points):
            raise ValueError(f"need at least k={self.k} points, got {len(self.points)}")

    @property
    def n_channels(self) -> int:
        return self.points.shape[1]


def knn_fit(points, k: int = 5) -> KnnIndex:
    return KnnIndex(np.asarray(points, dtype=np.float64), k)


def knn_score(index: KnnIndex, query) -> float:
    """Euclidean distance from ``query`` to its k-th nearest stored point."""
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (index.n_channels,):
        raise ValueError(f"query must have {index.n_channels} components, got shape {q.shape}")
    d = np.sqrt(np.sum((index.points - q) ** 2, axis=1))
    return float(np.partition(d, index.k - 1)[index.k - 1])


def knn_score_many(index: KnnIndex, queries, margin: int = 16, max_elements: int = 8_000_000) -> np.ndarray:
    """:func:`knn_score` for ``[M, C]`` queries, bit-identical to the per-query scan.

    Squared distances from the Gram expansion pick ``k + margin`` candidates;
    their exact distances are recomputed with the same expression as
    :func:`knn_score`. A query falls back to the full scan unless a rounding
    bound proves no excluded point can be nearer than the k-th candidate.
    """
    qs = np.asarray(queries, dtype=np.float64)
    if qs.ndim != 2 or qs.shape[1] != index.n_channels:
        raise ValueError(f"queries must be [M, {index.n_channels}], got {qs.shape}")
    pts = index.points
    n, c = pts.shape
    k = index.k
    m = min(n, k + margin)
    p_sq = np.einsum("ij,ij->i", pts, pts)
    p_sq_max = float(p_sq.max())
    out = np.empty(len(qs))
    chunk = max(1, max_elements // max(n, 1))
    for s in range(0, len(qs), chunk):
        block = qs[s : s + chunk]
        q_sq = np.einsum("ij,ij->i", block, block)
        approx = q_sq[:, None] + p_sq[None, :] - 2.0 * (block @ pts.T)
        if m < n:
            cand = np.argpartition(approx, m - 1, axis=1)[:, :m]
            # smallest approximate value among the excluded points
            rest = np.partition(approx, m, axis=1)[:, m]
        else:
            cand = np.broadcast_to(np.arange(n), (len(block), n))
            rest = np.full(len(block), np.inf)
        tol = 1e-9 * (q_sq + p_sq_max) + 1e-12
        for r, q in enumerate(block):
            d = np.sqrt(np.sum((pts[cand[r]] - q) ** 2, axis=1))
            kth = np.partition(d, k - 1)[k - 1]
            if rest[r] - tol[r] <= kth * kth * (1 + 1e-12):
                d = np.sqrt(np.sum((pts - q) ** 2, axis=1))
                kth = np.partition(d, k - 1)[k - 1]
            out[s + r] = kth
    return out
