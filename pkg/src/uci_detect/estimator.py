"""scikit-learn style wrappers around the augmenter and the detector."""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, check_random_state, column_or_1d

from . import augment
from .clips import ClipRecord, VideoStore
from .trainer import Trainer, load_config, predict_videos


def check_videos(X, min_frames: int = 2) -> list[np.ndarray]:
    """Validate a batch of videos: an (n, T, H, W, 3) uint8 array or a list of (T, H, W, 3) arrays."""
    if isinstance(X, np.ndarray) and X.ndim == 5:
        videos = list(X)
    elif isinstance(X, (list, tuple)):
        videos = [np.asarray(v) for v in X]
    else:
        raise ValueError(f"expected an (n, T, H, W, 3) array or a list of videos, got {type(X).__name__}")
    if not videos:
        raise ValueError("found 0 videos; at least one is required")
    for i, v in enumerate(videos):
        if v.ndim != 4 or v.shape[-1] != 3:
            raise ValueError(f"video {i} has shape {v.shape}; expected (T, H, W, 3)")
        if v.dtype != np.uint8:
            raise ValueError(f"video {i} has dtype {v.dtype}; expected uint8")
        if v.shape[0] < min_frames:
            raise ValueError(f"video {i} has {v.shape[0]} frames, fewer than {min_frames}")
    return videos


def _store(videos: list[np.ndarray], labels=None, prefix: str = "x") -> tuple[VideoStore, list[ClipRecord]]:
    ids = [f"{prefix}{i:06d}" for i in range(len(videos))]
    store = VideoStore.from_arrays(dict(zip(ids, videos)))
    labels = labels if labels is not None else [0] * len(videos)
    records = [ClipRecord(vid, Path("."), int(y), "X", "train", v.shape[0]) for vid, y, v in zip(ids, labels, videos)]
    for rec in records:
        store.add(rec)
    return store, records


class TemporalAugmenter(TransformerMixin, BaseEstimator):
    """Apply the clip/frame augmentation to each video.

    Args:
        mode: ``"temporal"``, ``"non_temporal"`` or ``"none"``.
        output_size: side of the square output canvas.
        random_state: seed or ``RandomState`` for the per-video generators.
    """

    def __init__(self, mode: str = "temporal", output_size: int = 224, random_state=None):
        self.mode = mode
        self.output_size = output_size
        self.random_state = random_state

    def fit(self, X, y=None):
        check_videos(X)
        if self.mode not in augment.MODES:
            raise ValueError(f"mode must be one of {augment.MODES}, got {self.mode!r}")
        self.config_ = replace(augment.AugmentConfig.for_canvas(self.output_size), mode=self.mode)
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        videos = check_videos(X)
        seeds = check_random_state(self.random_state).randint(0, 2**31 - 1, size=len(videos))
        out = [augment.apply(v, np.random.default_rng(int(s)), self.config_) for v, s in zip(videos, seeds)]
        return np.stack(out)


class UCIDetector(ClassifierMixin, BaseEstimator):
    """Deepfake video classifier (encoder, multi-view expansion, attention interaction).

    Labels are 0 for real and 1 for fake. Unset hyperparameters come from
    ``profile``.

    Args:
        profile: bundled profile name or path to a JSON config.
        epochs: training epochs.
        batch_size: even batch size; batches are label balanced.
        learning_rate: Adam step size.
        augment_mode: ``"temporal"``, ``"non_temporal"`` or ``"none"``.
        contrastive: add the supervised contrastive term to the objective.
        clip_len: frames per training window.
        frame_size: side of the resized frames.
        random_state: integer seed.
    """

    def __init__(self, profile: str = "desk", epochs: int | None = None, batch_size: int | None = None,
                 learning_rate: float | None = None, augment_mode: str | None = None,
                 contrastive: bool | None = None, clip_len: int | None = None, frame_size: int | None = None,
                 random_state: int = 0):
        self.profile = profile
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.augment_mode = augment_mode
        self.contrastive = contrastive
        self.clip_len = clip_len
        self.frame_size = frame_size
        self.random_state = random_state

    def _config(self):
        return load_config(self.profile, epochs=self.epochs, batch_size=self.batch_size,
                           learning_rate=self.learning_rate, augment_mode=self.augment_mode,
                           contrastive=self.contrastive, clip_len=self.clip_len, frame_size=self.frame_size,
                           seed=int(self.random_state), early_stopping_patience=None)

    def fit(self, X, y):
        config = self._config()
        videos = check_videos(X, min_frames=config.clip_len)
        y = column_or_1d(y, warn=True)
        if len(y) != len(videos):
            raise ValueError(f"X has {len(videos)} videos but y has {len(y)} labels")
        check_classification_targets(y)
        self.classes_ = np.unique(y)
        if not set(self.classes_.tolist()) <= {0, 1}:
            raise ValueError(f"labels must be 0 (real) or 1 (fake), got {self.classes_.tolist()}")
        if len(self.classes_) != 2:
            raise ValueError("training data must contain both real and fake videos")
        store, records = _store(videos, y)
        trainer = Trainer(config, records, store)
        result = trainer.fit()
        self.config_ = config
        self.model_ = result.model
        self.history_ = [b.as_dict() for b in result.history]
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        videos = check_videos(X, min_frames=self.config_.clip_len)
        store, records = _store(videos, prefix="q")
        cfg = self.config_
        with torch.no_grad():
            p = np.asarray(predict_videos(self.model_, records, store, cfg.clip_len, cfg.frame_size,
                                          cfg.eval_batch_size))
        return np.column_stack([1.0 - p, p])

    def decision_function(self, X) -> np.ndarray:
        return self.predict_proba(X)[:, 1]

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) >= 0.5).astype(int)
