from .iforest import IsoForest, average_path_length, harmonic, iso_fit, iso_score
from .knn import KnnIndex, knn_fit, knn_score, knn_score_many

__all__ = [
    "IsoForest",
    "KnnIndex",
    "average_path_length",
    "harmonic",
    "iso_fit",
    "iso_score",
    "knn_fit",
    "knn_score",
    "knn_score_many",
]
