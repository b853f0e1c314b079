"""Threshold-free accuracy: ROC AUC over pointwise labels."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
from scipy.stats import rankdata


class UndefinedAUCError(ValueError):
    """Both classes are needed for a ROC curve."""


class ScoredPoint(NamedTuple):
    timestamp: float
    score: float
    label: int | None = None


def auc_roc(scores, labels) -> float:
    """P(random anomaly outscores random normal), ties counted as one half.

    Computed from average ranks (Mann-Whitney U), which equals the trapezoidal
    area under the ROC curve.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"scores {s.shape} and labels {y.shape} must be equal-length vectors")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError(f"AUC needs both classes, got {n_pos} anomalous and {n_neg} normal points")
    ranks = rankdata(s)  # average ranks for ties
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_from_points(points: list[ScoredPoint]) -> float:
    if any(p.label is None for p in points):
        raise ValueError("every scored point needs a label")
    return auc_roc([p.score for p in points], [p.label for p in points])


def _summary(x: np.ndarray) -> dict[str, float]:
    if len(x) == 0:
        return {}
    return {
        "mean": float(np.mean(x)),
        "std": float(np.std(x)),
        "min": float(np.min(x)),
        "median": float(np.median(x)),
        "max": float(np.max(x)),
    }


@dataclass
class EvalReport:
    auc: float
    n_normal: int
    n_anomaly: int
    normal_scores: dict
    anomaly_scores: dict

    def to_text(self) -> str:
        lines = [f"auc {self.auc:.6f}", f"n_normal {self.n_normal}", f"n_anomaly {self.n_anomaly}"]
        for name, stats in (("normal", self.normal_scores), ("anomaly", self.anomaly_scores)):
            lines.append(f"{name} score " + " ".join(f"{k}={v:.6g}" for k, v in stats.items()))
        return "\n".join(lines)

    def to_record(self) -> dict:
        rec = {"auc": self.auc, "n_normal": self.n_normal, "n_anomaly": self.n_anomaly}
        for name, stats in (("normal", self.normal_scores), ("anomaly", self.anomaly_scores)):
            rec.update({f"{name}_{k}": v for k, v in stats.items()})
        return rec

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate(scores, labels) -> EvalReport:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    auc = auc_roc(s, y)
    return EvalReport(auc, int((~y).sum()), int(y.sum()), _summary(s[~y]), _summary(s[y]))
