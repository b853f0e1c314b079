"""Desk-scale accuracy comparison on the synthetic robot stream.

One seeded stream of normal behaviour trains every detector; a second stream
with injected collisions is scored by each and summarized as AUC.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .baselines import iso_fit, knn_fit, knn_score_many
from .data import Normalizer
from .detector import score_windows
from .evaluation import auc_roc
from .model import VaradeConfig, build
from .synth import SynthConfig, synth_generate
from .training import TrainConfig, train

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DeskConfig:
    cycles: int = 30
    sample_rate: float = 20.0
    anomalies: int = 50
    train_seed: int = 1
    test_seed: int = 2
    synth: dict = field(default_factory=dict)  # extra SynthConfig fields
    window: int = 32
    base_maps: int = 128
    kl_weight: float = 0.01
    steps: int = 3000
    lr: float = 1e-3
    batch_size: int = 64
    model_seed: int = 0
    knn_k: int = 5
    knn_stride: int = 10  # keep every n-th training sample as a kNN reference
    iforest_trees: int = 100
    iforest_seed: int = 0


@dataclass
class DeskResult:
    auc_varade: float
    auc_knn: float
    auc_iforest: float
    minutes_simulated: float
    n_test: int
    n_anomalous: int
    train_loss: list[float]
    seconds: dict[str, float]
    config: dict

    def ordering_holds(self) -> bool:
        return self.auc_varade > max(self.auc_knn, self.auc_iforest)


def make_streams(cfg: DeskConfig):
    common = dict(cycles=cfg.cycles, sample_rate=cfg.sample_rate, **cfg.synth)
    train_s = synth_generate(SynthConfig(anomalies=0, seed=cfg.train_seed, **common))
    test_s = synth_generate(SynthConfig(anomalies=cfg.anomalies, seed=cfg.test_seed, **common))
    return train_s, test_s


def run_desk(cfg: DeskConfig = DeskConfig()) -> DeskResult:
    clock = {}
    t0 = time.perf_counter()
    train_s, test_s = make_streams(cfg)
    norm = Normalizer.fit(train_s.values)
    xtr, xte = norm.apply(train_s.values), norm.apply(test_s.values)
    y = test_s.labels
    clock["generate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    model = build(
        VaradeConfig(window=cfg.window, channels=xtr.shape[1], base_maps=cfg.base_maps, kl_weight=cfg.kl_weight),
        seed=cfg.model_seed,
    )
    hist = train(model, xtr, TrainConfig(cfg.steps, cfg.batch_size, cfg.lr, cfg.model_seed, log_every=500))
    clock["train"] = time.perf_counter() - t0

    # the score at t judges the window ending at t, so the first T-1 labels go unscored
    t0 = time.perf_counter()
    auc_v = auc_roc(score_windows(model, xte), y[cfg.window - 1 :])
    clock["score_varade"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    index = knn_fit(xtr[:: cfg.knn_stride].astype(np.float64), cfg.knn_k)
    auc_k = auc_roc(knn_score_many(index, xte), y)
    clock["knn"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    forest = iso_fit(xtr, seed=cfg.iforest_seed, n_trees=cfg.iforest_trees)
    auc_i = auc_roc(forest.score_many(xte), y)
    clock["iforest"] = time.perf_counter() - t0

    result = DeskResult(
        auc_varade=auc_v,
        auc_knn=auc_k,
        auc_iforest=auc_i,
        minutes_simulated=len(test_s) / cfg.sample_rate / 60.0,
        n_test=len(test_s),
        n_anomalous=int(y.sum()),
        train_loss=hist.total,
        seconds=clock,
        config=asdict(cfg),
    )
    logger.info("varade %.4f knn %.4f iforest %.4f", auc_v, auc_k, auc_i)
    return result
