"""Vision pipeline: augmentation, partial-freeze backbones, training, evaluation."""

from dermdx.vision.augment import AugmentationConfig, build_augmentation
from dermdx.vision.backbones import (
    BackboneConfig,
    FreezeReport,
    build_backbone,
    freeze_parameters,
    list_backbones,
)
from dermdx.vision.evaluate import (
    EvaluationReport,
    PredictionSet,
    evaluate_model,
    evaluate_scores,
    predict_topn,
    topn_from_scores,
)
from dermdx.vision.train import TrainConfig, TrainResult, load_vision_model, train

__all__ = [
    "AugmentationConfig",
    "build_augmentation",
    "BackboneConfig",
    "FreezeReport",
    "build_backbone",
    "freeze_parameters",
    "list_backbones",
    "EvaluationReport",
    "PredictionSet",
    "evaluate_model",
    "evaluate_scores",
    "predict_topn",
    "topn_from_scores",
    "TrainConfig",
    "TrainResult",
    "load_vision_model",
    "train",
]
