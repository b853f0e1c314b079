"""Streaming anomaly detection for multivariate sensor data.

A small convolutional forecaster predicts a Gaussian over the next sample;
its predicted variance is the anomaly score.
"""

from .baselines import IsoForest, KnnIndex, iso_fit, iso_score, knn_fit, knn_score, knn_score_many
from .bench import BenchReport, bench_throughput
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import DataError, LabeledStream, Normalizer, default_schema, euler_to_quaternion, load_csv, write_csv
from .detector import PointDetector, VaradeDetector, WindowBuffer, detect_stream, score_windows
from .evaluation import EvalReport, ScoredPoint, UndefinedAUCError, auc_roc, evaluate
from .losses import gaussian_nll, kl_std_normal, total_loss
from .model import ConfigError, VaradeConfig, VaradeModel, build, forward
from .optim import AdamState, NonFiniteGradientError, adam_step
from .synth import SynthConfig, synth_generate
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "BenchReport",
    "CheckpointError",
    "ConfigError",
    "DataError",
    "EvalReport",
    "IsoForest",
    "KnnIndex",
    "LabeledStream",
    "NonFiniteGradientError",
    "Normalizer",
    "PointDetector",
    "ScoredPoint",
    "SynthConfig",
    "TrainConfig",
    "UndefinedAUCError",
    "VaradeConfig",
    "VaradeDetector",
    "VaradeModel",
    "WindowBuffer",
    "adam_step",
    "auc_roc",
    "bench_throughput",
    "build",
    "default_schema",
    "detect_stream",
    "euler_to_quaternion",
    "evaluate",
    "forward",
    "gaussian_nll",
    "iso_fit",
    "iso_score",
    "kl_std_normal",
    "knn_fit",
    "knn_score",
    "knn_score_many",
    "load_checkpoint",
    "load_csv",
    "save_checkpoint",
    "score_windows",
    "synth_generate",
    "total_loss",
    "train",
    "write_csv",
]
