"""Desk-scale cross-domain ablation: augmentation mode x contrastive objective.

Trains on domains A and B of a synthetic corpus and scores the test split
of the held-out domain C, averaging held-out AUC over seeds.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .clips import SyntheticConfig, VideoStore, generate_synthetic_dataset, load_manifest
from .trainer import Trainer, evaluate_records, load_config, split_records

logger = logging.getLogger(__name__)

# 3 domains x 2 labels x 170 videos of 16 frames: 2,040 clips of 8 frames.
DESK_CORPUS = SyntheticConfig(num_domains=3, videos_per_domain_per_label=170, frames_per_video=16,
                              frame_size=64, seed=0)
# Fixed training length; every variant is scored on its final-epoch model.
DESK_EPOCHS = 20


@dataclass(frozen=True)
class Variant:
    name: str
    augment_mode: str
    contrastive: bool


VARIANTS = (
    Variant("no_aug", "none", True),
    Variant("non_temporal_aug", "non_temporal", True),
    Variant("temporal_aug", "temporal", True),
    Variant("temporal_aug_no_contrastive", "temporal", False),
)
FULL = "temporal_aug"


@dataclass
class AblationResult:
    held_out: str
    seeds: tuple[int, ...]
    epochs: int
    auc: dict[str, list[float]] = field(default_factory=dict)
    acc: dict[str, list[float]] = field(default_factory=dict)
    seconds: dict[str, list[float]] = field(default_factory=dict)

    def mean_auc(self, name: str) -> float:
        return float(np.mean(self.auc[name]))

    def total_seconds(self) -> float:
        return float(sum(sum(v) for v in self.seconds.values()))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def ensure_corpus(root: str | Path, config: SyntheticConfig = DESK_CORPUS) -> Path:
    """Generate the corpus under ``root`` unless a manifest is already there."""
    manifest = Path(root) / "manifest.jsonl"
    if not manifest.exists():
        generate_synthetic_dataset(config, root)
    return manifest


def run(manifest: str | Path, variants: Sequence[Variant] = VARIANTS, seeds: Sequence[int] = (0, 1, 2),
        epochs: int = DESK_EPOCHS, held_out: str = "C", profile: str = "desk",
        report: Callable[[str], None] | None = None, **overrides) -> AblationResult:
    """Train every variant for every seed and score the held-out domain's test split."""
    records = load_manifest(manifest)
    store = VideoStore(records)
    test = [r for r in records if r.domain == held_out and r.split == "test"]
    result = AblationResult(held_out, tuple(seeds), epochs)
    for v in variants:
        for seed in seeds:
            t0 = time.perf_counter()
            cfg = load_config(profile, epochs=epochs, seed=seed, augment_mode=v.augment_mode,
                              contrastive=v.contrastive, hold_out_domain=held_out,
                              early_stopping_patience=epochs + 1, **overrides)
            train_recs, val_recs = split_records(records, cfg)
            trainer = Trainer(cfg, train_recs, store)
            trainer.fit()
            a, c = evaluate_records(trainer.model, test, store, cfg)
            dt = time.perf_counter() - t0
            result.auc.setdefault(v.name, []).append(a)
            result.acc.setdefault(v.name, []).append(c)
            result.seconds.setdefault(v.name, []).append(dt)
            msg = f"{v.name} seed={seed} held-out AUC={a:.4f} ACC={c:.4f} ({dt:.0f}s)"
            logger.info(msg)
            if report:
                report(msg)
    return result


def orderings(result: AblationResult, margin: float = 0.01) -> dict[str, bool]:
    """The expected directions, each requiring at least ``margin`` of mean AUC.

    * temporal-preserved augmentation beats no augmentation, which beats
      non-temporal augmentation;
    * the full model (temporal augmentation with the contrastive term) is
      strictly highest of all variants run.
    """
    m = {k: result.mean_auc(k) for k in result.auc}
    checks = {}
    if {"temporal_aug", "no_aug"} <= m.keys():
        checks["temporal_aug > no_aug"] = m["temporal_aug"] - m["no_aug"] >= margin
    if {"no_aug", "non_temporal_aug"} <= m.keys():
        checks["no_aug > non_temporal_aug"] = m["no_aug"] - m["non_temporal_aug"] >= margin
    if FULL in m:
        others = [v for k, v in m.items() if k != FULL]
        checks["full model highest"] = bool(others) and m[FULL] - max(others) >= margin
    return checks
