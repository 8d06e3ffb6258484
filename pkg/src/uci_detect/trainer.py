"""End-to-end training: augment -> encode -> multi-view expansion -> attention -> loss.

Randomness is derived, never streamed: batch composition comes from
``(seed, epoch)`` and each clip's window and augmentation from
``(seed, epoch, video_id)``. Together with saved Adam moments this makes a
resumed run continue exactly as the uninterrupted one would.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import torch
from torch import nn

from . import augment, checkpoint
from .attention import MultiHeadInteraction
from .clips import ClipRecord, VideoStore, load_manifest, stable_hash, window_starts
from .contrastive import BatchPartition, LossBreakdown, loss_fake, loss_in, loss_real, total_loss
from .encoder import EncoderConfig, build_encoder
from .evaluate import VideoScore, acc, auc
from .mve import MultiViewExpansion, NonFiniteRepresentationError, bce_loss

logger = logging.getLogger(__name__)

METRIC_FIELDS = ("step", "epoch", "alpha", "L_r", "L_f", "L_in", "L_ce", "L_total")
EPOCH_FIELDS = ("epoch", "steps", "mean_L_total", "val_auc", "val_acc")


class ConfigError(ValueError):
    pass


class NonFiniteLossError(RuntimeError):
    def __init__(self, message: str, video_ids: Sequence[str] = ()):
        self.video_ids = list(video_ids)
        super().__init__(f"{message}; batch videos: {', '.join(self.video_ids)}")


@dataclass
class TrainConfig:
    manifest: str | None = None
    out_dir: str = "runs/uci"
    batch_size: int = 16
    learning_rate: float = 1e-4
    epochs: int = 30
    clip_len: int = 8
    frame_size: int = 64
    alpha_warmup: float = 0.1
    alpha_main: float = 0.5
    warmup_epochs: int = 5
    tau: float = 0.1
    seed: int = 0
    contrastive: bool = True
    augment_mode: str = "temporal"
    augment: dict = field(default_factory=dict)
    encoder: dict = field(default_factory=dict)
    n_views: int = 512
    reduction: int = 4
    n_heads: int = 8
    head_dim: int = 64
    expand_kernel: int = 3
    shared_fc: bool = True
    train_domains: list | None = None
    hold_out_domain: str | None = None
    grad_clip: float | None = None
    early_stopping_patience: int | None = None
    eval_batch_size: int = 32
    deterministic: bool = True

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2 or self.batch_size % 2:
            raise ConfigError(f"batch_size must be even and >= 2, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.clip_len < 2:
            raise ConfigError("clip_len must be >= 2")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        for name in ("alpha_warmup", "alpha_main"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.augment_mode not in augment.MODES:
            raise ConfigError(f"augment_mode must be one of {augment.MODES}")
        try:
            self.augment_config()
            self.encoder_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def augment_config(self) -> augment.AugmentConfig:
        base = augment.AugmentConfig.for_canvas(self.frame_size)
        overrides = {k: tuple(v) if isinstance(v, list) else v for k, v in self.augment.items()}
        return replace(base, mode=self.augment_mode, **overrides)

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig.from_dict(self.encoder)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown train config key(s): {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def load_profile(name: str) -> dict:
    """Bundled config profile: ``desk`` (laptop scale) or ``paper`` (published settings)."""
    try:
        text = resources.files("uci_detect.profiles").joinpath(f"{name}.json").read_text()
    except FileNotFoundError:
        raise ConfigError(f"unknown profile {name!r}") from None
    return json.loads(text)


def load_config(path_or_profile: str | os.PathLike | None = None, **overrides) -> TrainConfig:
    """Build a ``TrainConfig`` from a JSON file or profile name, then apply overrides."""
    data: dict = {}
    if path_or_profile is not None:
        p = Path(path_or_profile)
        if p.suffix == ".json" or p.is_file():
            if not p.is_file():
                raise FileNotFoundError(f"config file not found: {p}")
            data = json.loads(p.read_text())
            if "profile" in data:
                data = {**load_profile(data.pop("profile")), **data}
        else:
            data = load_profile(str(path_or_profile))
    data.update({k: v for k, v in overrides.items() if v is not None})
    cfg = TrainConfig.from_dict(data)
    cfg.validate()
    return cfg


def alpha_schedule(epoch: int, config: TrainConfig | None = None) -> float:
    """Contrastive weight: warm-up value for epochs 1..warmup_epochs, then the main value."""
    config = config or TrainConfig()
    if epoch < 1:
        raise ValueError(f"epochs are 1-based, got {epoch}")
    return config.alpha_warmup if epoch <= config.warmup_epochs else config.alpha_main


def balanced_batches(records: Sequence[ClipRecord], batch_size: int,
                     rng: np.random.Generator) -> list[list[ClipRecord]]:
    """Shuffle each class and pair them into half-real, half-fake batches.

    Each record appears at most once; leftovers of the larger class and any
    incomplete batch are dropped.
    """
    if batch_size < 2 or batch_size % 2:
        raise ValueError(f"batch_size must be even and >= 2, got {batch_size}")
    real = [r for r in records if r.label == 0]
    fake = [r for r in records if r.label == 1]
    if not real or not fake:
        raise ValueError("balanced batches need both real and fake records")
    real = [real[i] for i in rng.permutation(len(real))]
    fake = [fake[i] for i in rng.permutation(len(fake))]
    half = batch_size // 2
    n = min(len(real), len(fake)) // half
    return [real[b * half:(b + 1) * half] + fake[b * half:(b + 1) * half] for b in range(n)]


def clip_rng(seed: int, epoch: int, video_id: str, window: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, epoch, stable_hash(video_id), window]))


class UCIModel(nn.Module):
    """Encoder, multi-view expansion head and attention interaction."""

    def __init__(self, encoder: nn.Module, mve: MultiViewExpansion, interaction: MultiHeadInteraction):
        super().__init__()
        self.encoder = encoder
        self.mve = mve
        self.interaction = interaction

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return self.mve(self.encoder(x))


def build_model(config: TrainConfig, backbone=None) -> UCIModel:
    torch.manual_seed(config.seed)
    encoder = build_encoder(config.encoder_config(), backbone=backbone)
    mve = MultiViewExpansion(n_views=config.n_views, reduction=config.reduction,
                             kernel_size=config.expand_kernel, shared_fc=config.shared_fc)
    interaction = MultiHeadInteraction(in_dim=config.n_views, n_heads=config.n_heads, head_dim=config.head_dim)
    return UCIModel(encoder, mve, interaction)


def _set_determinism(config: TrainConfig) -> None:
    if config.deterministic:
        torch.use_deterministic_algorithms(True)


def batch_tensor(batch: Sequence[ClipRecord], store: VideoStore, config: TrainConfig, epoch: int,
                 aug: augment.AugmentConfig | None = None) -> torch.Tensor:
    """Sample one window per video and augment it with its derived seed."""
    aug = aug or config.augment_config()
    clips = []
    for rec in batch:
        rng = clip_rng(config.seed, epoch, rec.video_id)
        n = store.frame_count(rec.video_id)
        if n < config.clip_len:
            raise ValueError(f"{rec.video_id} has {n} frames, fewer than clip_len={config.clip_len}")
        start = int(rng.integers(0, n - config.clip_len + 1))
        clips.append(augment.apply(store.clip(rec.video_id, start, config.clip_len), rng, aug))
    return torch.from_numpy(np.stack(clips).astype(np.float32) / 255.0)


def compute_losses(model: UCIModel, x: torch.Tensor, labels: torch.Tensor, alpha: float,
                   config: TrainConfig) -> tuple[torch.Tensor, LossBreakdown]:
    z, prob = model(x)
    l_ce = bce_loss(prob, labels).mean()
    part = BatchPartition.from_labels(labels)
    zero = torch.zeros((), dtype=l_ce.dtype)
    if config.contrastive and part.contrastable:
        scores = model.interaction.pairwise(z)
        l_r = loss_real(scores, part, config.tau)
        l_f = loss_fake(scores, part, config.tau)
    else:
        l_r = l_f = zero
    l_in = loss_in(l_r, l_f)
    l_total = total_loss(l_in, l_ce, alpha)
    vals = [t.detach().item() for t in (l_r, l_f, l_in, l_ce, l_total)]
    breakdown = LossBreakdown(*vals, alpha, config.tau)
    return l_total, breakdown


def train_step(model: UCIModel, optimizer: torch.optim.Optimizer, batch: Sequence[ClipRecord],
               store: VideoStore, config: TrainConfig, epoch: int,
               alpha: float | None = None, x: torch.Tensor | None = None) -> LossBreakdown:
    """One optimiser update on one batch; returns the pre-update losses.

    Args:
        alpha: overrides the schedule; without contrastive training it is 0.
        x: pre-built input batch, skipping sampling and augmentation.
    """
    model.train()
    if alpha is None:
        alpha = alpha_schedule(epoch, config) if config.contrastive else 0.0
    if x is None:
        x = batch_tensor(batch, store, config, epoch)
    labels = torch.tensor([r.label for r in batch], dtype=torch.float32)
    try:
        loss, breakdown = compute_losses(model, x, labels, alpha, config)
    except NonFiniteRepresentationError as exc:
        raise NonFiniteLossError(f"non-finite loss: {exc}", [r.video_id for r in batch]) from exc
    if not torch.isfinite(loss):
        raise NonFiniteLossError(f"non-finite loss {breakdown}", [r.video_id for r in batch])
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    if config.grad_clip is not None:
        nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
    optimizer.step()
    return breakdown


@torch.no_grad()
def predict_videos(model: UCIModel, records: Sequence[ClipRecord], store: VideoStore, clip_len: int,
                   frame_size: int, batch_size: int = 32) -> list[float]:
    """Video-level fake probability: mean over non-overlapping windows."""
    model.eval()
    items = []
    for vi, rec in enumerate(records):
        for s in window_starts(store.frame_count(rec.video_id), clip_len):
            items.append((vi, s))
    sums = np.zeros(len(records))
    counts = np.zeros(len(records))
    for b in range(0, len(items), batch_size):
        chunk = items[b:b + batch_size]
        clips = [augment.resize_clip(store.clip(records[vi].video_id, s, clip_len), frame_size) for vi, s in chunk]
        x = torch.from_numpy(np.stack(clips).astype(np.float32) / 255.0)
        _, prob = model(x)
        for (vi, _), p in zip(chunk, prob.tolist()):
            sums[vi] += p
            counts[vi] += 1
    return (sums / counts).tolist()


def evaluate_records(model: UCIModel, records: Sequence[ClipRecord], store: VideoStore,
                     config: TrainConfig) -> tuple[float, float]:
    probs = predict_videos(model, records, store, config.clip_len, config.frame_size, config.eval_batch_size)
    scores = [VideoScore(r.video_id, p, r.label, r.domain) for r, p in zip(records, probs)]
    return auc(scores), acc(scores)


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------


def save_checkpoint(path, model: UCIModel, optimizer: torch.optim.Optimizer | None, config: TrainConfig,
                    epoch: int, step: int, extra: dict | None = None) -> Path:
    arrays = {f"model/{k}": v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    if optimizer is not None:
        names = {id(p): n for n, p in model.named_parameters()}
        for group in optimizer.param_groups:
            for p in group["params"]:
                st = optimizer.state.get(p)
                if not st:
                    continue
                n = names[id(p)]
                for key in ("exp_avg", "exp_avg_sq", "step"):
                    arrays[f"optim/{n}/{key}"] = torch.as_tensor(st[key]).detach().cpu().numpy()
    meta = {"kind": "uci-model", "config": config.to_dict(), "epoch": epoch, "step": step, **(extra or {})}
    return checkpoint.save(path, arrays, meta)


def load_checkpoint(path, model: UCIModel | None = None, optimizer: torch.optim.Optimizer | None = None,
                    backbone=None):
    """Restore a model (built from the stored config if not given) and optimiser state.

    Returns ``(model, meta)``.
    """
    arrays, meta = checkpoint.load(path)
    if meta.get("kind") != "uci-model":
        raise ValueError(f"{path} holds a {meta.get('kind')!r} checkpoint, not a model")
    if model is None:
        model = build_model(TrainConfig.from_dict(meta["config"]), backbone=backbone)
    state = {k[len("model/"):]: torch.from_numpy(np.array(v)) for k, v in arrays.items() if k.startswith("model/")}
    model.load_state_dict(state)
    if optimizer is not None:
        params = dict(model.named_parameters())
        for n, p in params.items():
            if f"optim/{n}/exp_avg" in arrays:
                optimizer.state[p] = {
                    key: torch.from_numpy(np.array(arrays[f"optim/{n}/{key}"])) for key in ("exp_avg", "exp_avg_sq", "step")
                }
    return model, meta


def write_oracle_checkpoint(path) -> Path:
    """A checkpoint that scores each video by its own label; for pipeline validation."""
    return checkpoint.save(path, {}, {"kind": "label-oracle"})


def load_scorer(path, store: VideoStore | None = None):
    """Callable mapping ``ClipRecord``s to video-level fake probabilities."""
    arrays, meta = checkpoint.load(path)
    if meta.get("kind") == "label-oracle":
        return lambda records: [float(r.label) for r in records]
    model, meta = load_checkpoint(path)
    cfg = TrainConfig.from_dict(meta["config"])

    def score(records):
        s = store or VideoStore(records)
        for r in records:
            s.add(r)
        return predict_videos(model, records, s, cfg.clip_len, cfg.frame_size, cfg.eval_batch_size)

    return score


# --------------------------------------------------------------------------
# training driver
# --------------------------------------------------------------------------


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def read_metrics(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _write_rows(path: Path, fieldnames: Sequence[str], rows: Iterable[dict]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def _append_row(path: Path, fieldnames: Sequence[str], row: dict) -> None:
    with path.open("a", newline="") as fh:
        csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n").writerow({k: _fmt(v) for k, v in row.items()})


def split_records(records: Sequence[ClipRecord], config: TrainConfig) -> tuple[list[ClipRecord], list[ClipRecord]]:
    domains = sorted({r.domain for r in records})
    if config.train_domains:
        unknown = set(config.train_domains) - set(domains)
        if unknown:
            raise ConfigError(f"train_domains {sorted(unknown)} not in manifest (has {domains})")
        keep = set(config.train_domains)
    else:
        keep = set(domains) - {config.hold_out_domain}
    if config.hold_out_domain is not None and config.hold_out_domain not in domains:
        raise ConfigError(f"hold_out_domain {config.hold_out_domain!r} not in manifest (has {domains})")
    train = [r for r in records if r.split == "train" and r.domain in keep]
    val = [r for r in records if r.split == "val" and r.domain in keep]
    return train, val


@dataclass
class TrainResult:
    checkpoint: Path | None
    metrics: Path | None
    epoch_log: Path | None
    model: UCIModel
    history: list[LossBreakdown]
    epochs: list[dict]


class Trainer:
    """Holds model, optimiser and data for a training run.

    Args:
        config: validated ``TrainConfig``.
        train_records, val_records: records to fit on and to monitor.
        store: frame source keyed by ``video_id``.
        out_dir: where checkpoints and logs go; ``None`` keeps everything in memory.
    """

    def __init__(self, config: TrainConfig, train_records: Sequence[ClipRecord], store: VideoStore,
                 val_records: Sequence[ClipRecord] = (), out_dir: str | os.PathLike | None = None, backbone=None):
        config.validate()
        _set_determinism(config)
        self.config = config
        self.train_records = list(train_records)
        self.val_records = list(val_records)
        self.store = store
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.model = build_model(config, backbone=backbone)
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=config.learning_rate)
        self.aug = config.augment_config()
        self.epoch = 0
        self.step = 0
        self.history: list[LossBreakdown] = []
        self.epoch_rows: list[dict] = []
        self.best_auc = -1.0
        self.stale = 0

    @property
    def metrics_path(self) -> Path | None:
        return self.out_dir / "metrics.csv" if self.out_dir else None

    @property
    def epoch_log_path(self) -> Path | None:
        return self.out_dir / "epochs.csv" if self.out_dir else None

    def checkpoint_path(self, epoch: int) -> Path:
        return self.out_dir / f"ckpt_epoch_{epoch:03d}.npz"

    def resume(self, path) -> None:
        _, meta = load_checkpoint(path, self.model, self.optimizer)
        self.epoch = int(meta["epoch"])
        self.step = int(meta["step"])
        self.best_auc = float(meta.get("best_auc", -1.0))
        self.stale = int(meta.get("stale", 0))
        if self.out_dir and self.metrics_path.exists():
            keep = [r for r in read_metrics(self.metrics_path) if int(r["epoch"]) <= self.epoch]
            _write_rows(self.metrics_path, METRIC_FIELDS, keep)
        if self.out_dir and self.epoch_log_path.exists():
            keep = [r for r in read_metrics(self.epoch_log_path) if int(r["epoch"]) <= self.epoch]
            _write_rows(self.epoch_log_path, EPOCH_FIELDS, keep)

    def _start_logs(self) -> None:
        if not self.out_dir:
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        if not self.metrics_path.exists():
            _write_rows(self.metrics_path, METRIC_FIELDS, [])
        if not self.epoch_log_path.exists():
            _write_rows(self.epoch_log_path, EPOCH_FIELDS, [])

    def run_epoch(self, epoch: int) -> dict:
        cfg = self.config
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, epoch, 0xBA7C]))
        batches = balanced_batches(self.train_records, cfg.batch_size, rng)
        totals = []
        for batch in batches:
            x = batch_tensor(batch, self.store, cfg, epoch, self.aug)
            breakdown = train_step(self.model, self.optimizer, batch, self.store, cfg, epoch, x=x)
            self.step += 1
            self.history.append(breakdown)
            totals.append(breakdown.L_total)
            if self.metrics_path:
                row = {"step": self.step, "epoch": epoch, **{k: getattr(breakdown, k) for k in METRIC_FIELDS[2:]}}
                _append_row(self.metrics_path, METRIC_FIELDS, row)
        row = {"epoch": epoch, "steps": len(batches), "mean_L_total": float(np.mean(totals)) if totals else float("nan"),
               "val_auc": float("nan"), "val_acc": float("nan")}
        labels = {r.label for r in self.val_records}
        if labels == {0, 1}:
            row["val_auc"], row["val_acc"] = evaluate_records(self.model, self.val_records, self.store, cfg)
        return row

    def fit(self) -> TrainResult:
        cfg = self.config
        self._start_logs()
        last = None
        for epoch in range(self.epoch + 1, cfg.epochs + 1):
            row = self.run_epoch(epoch)
            self.epoch = epoch
            self.epoch_rows.append(row)
            improved = row["val_auc"] == row["val_auc"] and row["val_auc"] > self.best_auc
            if improved:
                self.best_auc = row["val_auc"]
                self.stale = 0
            else:
                self.stale += 1
            logger.info("epoch %d: mean loss %.4f val auc %.4f", epoch, row["mean_L_total"], row["val_auc"])
            if self.out_dir:
                _append_row(self.epoch_log_path, EPOCH_FIELDS, row)
                extra = {"best_auc": self.best_auc, "stale": self.stale}
                last = save_checkpoint(self.checkpoint_path(epoch), self.model, self.optimizer, cfg, epoch, self.step, extra)
                if improved:
                    save_checkpoint(self.out_dir / "best.npz", self.model, None, cfg, epoch, self.step, extra)
            if cfg.early_stopping_patience is not None and self.stale >= cfg.early_stopping_patience:
                logger.info("early stop after epoch %d", epoch)
                break
        return TrainResult(last, self.metrics_path, self.epoch_log_path, self.model, self.history, self.epoch_rows)


def train(config: TrainConfig, resume: str | os.PathLike | None = None, store: VideoStore | None = None,
          records: Sequence[ClipRecord] | None = None) -> TrainResult:
    """Train from a manifest, writing per-step metrics and per-epoch checkpoints to ``config.out_dir``."""
    config.validate()
    if records is None:
        if config.manifest is None:
            raise ConfigError("no manifest given")
        records = load_manifest(config.manifest)
    train_recs, val_recs = split_records(records, config)
    if not train_recs:
        raise ConfigError("no training records after split/domain filtering")
    store = store or VideoStore(records)
    trainer = Trainer(config, train_recs, store, val_recs, out_dir=config.out_dir)
    if resume is not None:
        trainer.resume(resume)
    return trainer.fit()
