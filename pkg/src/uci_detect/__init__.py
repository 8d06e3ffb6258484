"""Deepfake video detection with temporal-preserved augmentation, multi-view
expansion, attention interaction and a supervised contrastive objective."""

from .augment import AugmentConfig
from .clips import ClipRecord, SyntheticConfig, VideoClip, generate_synthetic_dataset, load_manifest
from .estimator import TemporalAugmenter, UCIDetector
from .trainer import TrainConfig, Trainer, load_config, train

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig",
    "ClipRecord",
    "SyntheticConfig",
    "TemporalAugmenter",
    "TrainConfig",
    "Trainer",
    "UCIDetector",
    "VideoClip",
    "generate_synthetic_dataset",
    "load_config",
    "load_manifest",
    "train",
]
