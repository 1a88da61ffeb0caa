from biasasr.kws.detect import DEFAULT_THRESHOLD, KwsDecision, PrPoint, detect, pr_curve
from biasasr.kws.model import ClassifierConfig, KwsClassifier
from biasasr.kws.similarity import SimilarityMap, batch_prepare, similarity_map
from biasasr.kws.train import KwsSample, TrainingReport, evaluate, train

__all__ = [
    "DEFAULT_THRESHOLD",
    "ClassifierConfig",
    "KwsClassifier",
    "KwsDecision",
    "KwsSample",
    "PrPoint",
    "SimilarityMap",
    "TrainingReport",
    "batch_prepare",
    "detect",
    "evaluate",
    "pr_curve",
    "similarity_map",
    "train",
]
