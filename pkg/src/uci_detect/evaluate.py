"""Video-level scoring, AUC/ACC and held-out-domain reports.

Fake is the positive class (label 1) everywhere in this module.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True)
class VideoScore:
    video_id: str
    score: float
    label: int
    domain: str = ""

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"video score must lie in [0, 1], got {self.score}")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


def video_score(clip_probs: Sequence[float]) -> float:
    """Mean of a video's clip probabilities."""
    probs = np.asarray(clip_probs, dtype=np.float64)
    if probs.size == 0:
        raise ValueError("a video needs at least one clip prediction")
    return float(probs.mean())


def _unpack(scores, labels=None) -> tuple[np.ndarray, np.ndarray]:
    if labels is None:
        scores = list(scores)
        labels = [s.label for s in scores]
        scores = [s.score for s in scores]
    return np.asarray(scores, dtype=np.float64), np.asarray(labels, dtype=np.int64)


def auc(scores: Iterable[VideoScore] | Sequence[float], labels: Sequence[int] | None = None) -> float:
    """Probability that a random fake outranks a random real; ties count one half.

    Accepts either ``VideoScore`` objects or parallel score/label sequences.
    Computed from average ranks (Mann-Whitney U).
    """
    s, y = _unpack(scores, labels)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both real and fake videos")
    ranks = rankdata(s, method="average")
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def acc(scores: Iterable[VideoScore] | Sequence[float], labels: Sequence[int] | None = None,
        threshold: float = 0.5) -> float:
    """Fraction of videos where ``score >= threshold`` matches ``label == 1``."""
    s, y = _unpack(scores, labels)
    if s.size == 0:
        raise ValueError("ACC needs at least one video")
    return float(((s >= threshold).astype(np.int64) == y).mean())


@dataclass(frozen=True)
class DomainReport:
    domain: str
    n_videos: int
    auc: float
    acc: float


def report_rows(scores: Sequence[VideoScore], domains: Sequence[str] | None = None) -> list[DomainReport]:
    domains = domains if domains is not None else sorted({s.domain for s in scores})
    rows = []
    for d in domains:
        sub = [s for s in scores if s.domain == d]
        if not sub:
            raise ValueError(f"no scored videos for domain {d!r}")
        rows.append(DomainReport(d, len(sub), auc(sub), acc(sub)))
    return rows


def write_report(rows: Sequence[DomainReport], out_dir: str | os.PathLike, stem: str = "report") -> tuple[Path, Path]:
    """Write ``<stem>.csv`` and ``<stem>.json`` with fields domain, n_videos, auc, acc."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}.json"
    with csv_path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["domain", "n_videos", "auc", "acc"])
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in asdict(r).items()})
    json_path.write_text(json.dumps([asdict(r) for r in rows], indent=2))
    return csv_path, json_path


def read_report(path: str | os.PathLike) -> list[DomainReport]:
    return [DomainReport(**row) for row in json.loads(Path(path).read_text())]


Scorer = Callable[[Sequence], list[float]]


def cross_domain_report(checkpoint, manifest, held_out_domain: str, split: str = "test",
                        scorer: Scorer | None = None, out_dir=None) -> list[DomainReport]:
    """Score the held-out domain's ``split`` videos and tabulate AUC/ACC.

    Args:
        checkpoint: checkpoint path, or ``None`` when ``scorer`` is given.
        manifest: manifest path or list of ``ClipRecord``.
        held_out_domain: domain tag to evaluate.
        scorer: maps a list of records to video-level fake probabilities;
            defaults to the model stored in ``checkpoint``.
        out_dir: when given, the report is also written there.
    """
    from .clips import load_manifest

    records = load_manifest(manifest) if isinstance(manifest, (str, os.PathLike)) else list(manifest)
    domains = {r.domain for r in records}
    if held_out_domain not in domains:
        raise KeyError(f"unknown domain {held_out_domain!r}; manifest has {sorted(domains)}")
    subset = [r for r in records if r.domain == held_out_domain and r.split == split]
    if not subset:
        raise ValueError(f"domain {held_out_domain!r} has no {split!r} videos")
    if scorer is None:
        from .trainer import load_scorer

        scorer = load_scorer(checkpoint)
    probs = scorer(subset)
    scores = [VideoScore(r.video_id, float(p), r.label, r.domain) for r, p in zip(subset, probs)]
    rows = report_rows(scores, [held_out_domain])
    if out_dir is not None:
        write_report(rows, out_dir, stem=f"report_{held_out_domain}")
    return rows
