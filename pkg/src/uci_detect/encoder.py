"""Video encoders mapping a clip batch (B, N, H, W, 3) in [0, 1] to (B, 2048)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import torch
from torch import nn

REPRESENTATION_DIM = 2048


class EncoderInputError(ValueError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    """Architecture of the default ``toy3d`` encoder.

    Each stage is a 3x3x3 convolution, a normalisation layer and SiLU; the stride tuples give the (temporal, spatial) downsampling applied
    by that stage.
    """

    variant: str = "toy3d"
    widths: tuple[int, ...] = (16, 32, 64, 128)
    temporal_strides: tuple[int, ...] = (1, 2, 2, 1)
    spatial_strides: tuple[int, ...] = (2, 2, 2, 2)
    out_dim: int = REPRESENTATION_DIM
    norm: str = "batch"  # "batch" (BatchNorm3d), "group" (GroupNorm) or "none"
    groups: int = 4
    pool: str = "mean"  # global pooling over (time, height, width): "mean" or "max"
    normalize: str = "unit"  # "unit" ([0, 1]), "meanstd" (fixed statistics) or "frame" (per-frame standardisation)
    mean: tuple[float, float, float] = (0.5, 0.5, 0.5)
    std: tuple[float, float, float] = (0.25, 0.25, 0.25)

    def __post_init__(self):
        if self.variant not in ("toy3d", "external"):
            raise ValueError(f"unknown encoder variant {self.variant!r}")
        if self.out_dim != REPRESENTATION_DIM:
            raise ValueError(f"encoder output width must be {REPRESENTATION_DIM}, got {self.out_dim}")
        if not (len(self.widths) == len(self.temporal_strides) == len(self.spatial_strides)):
            raise ValueError("widths and stride schedules must have equal length")
        if self.norm not in ("group", "batch", "none"):
            raise ValueError(f"norm must be 'group', 'batch' or 'none', got {self.norm!r}")
        if self.norm == "group" and any(w % self.groups for w in self.widths):
            raise ValueError(f"every width must be divisible by groups={self.groups}")
        if self.pool not in ("mean", "max"):
            raise ValueError(f"pool must be 'mean' or 'max', got {self.pool!r}")
        if self.normalize not in ("unit", "meanstd", "frame"):
            raise ValueError(f"normalize must be 'unit', 'meanstd' or 'frame', got {self.normalize!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d)


def check_input(x: torch.Tensor) -> None:
    if x.ndim != 5 or x.shape[-1] != 3:
        raise EncoderInputError(f"expected a (B, N, H, W, 3) batch, got shape {tuple(x.shape)}")
    if not torch.isfinite(x).all():
        raise EncoderInputError("encoder input contains non-finite values")


def stack_clips(clips: Sequence[np.ndarray]) -> torch.Tensor:
    """Stack uint8 clips into a float batch in [0, 1]; clip lengths must agree."""
    lengths = {c.shape[0] for c in clips}
    if len(lengths) != 1:
        raise EncoderInputError(f"clips in a batch must share one length, got {sorted(lengths)}")
    arr = np.stack(clips).astype(np.float32) / 255.0
    return torch.from_numpy(arr)


class Toy3DEncoder(nn.Module):
    """Small 3D convolutional encoder standing in for a pretrained I3D."""

    def __init__(self, config: EncoderConfig = EncoderConfig()):
        super().__init__()
        self.config = config
        layers = []
        c_in = 3
        for width, ts, ss in zip(config.widths, config.temporal_strides, config.spatial_strides):
            layers.append(nn.Conv3d(c_in, width, kernel_size=3, stride=(ts, ss, ss), padding=1))
            if config.norm == "batch":
                layers.append(nn.BatchNorm3d(width))
            elif config.norm == "group":
                layers.append(nn.GroupNorm(config.groups, width))
            layers.append(nn.SiLU())
            c_in = width
        self.features = nn.Sequential(*layers)
        self.proj = nn.Linear(c_in, config.out_dim)
        self.register_buffer("mean", torch.tensor(config.mean).view(1, 3, 1, 1, 1), persistent=False)
        self.register_buffer("std", torch.tensor(config.std).view(1, 3, 1, 1, 1), persistent=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        check_input(x)
        x = x.permute(0, 4, 1, 2, 3)  # B, 3, N, H, W
        if self.config.normalize == "meanstd":
            x = (x - self.mean.to(x.dtype)) / self.std.to(x.dtype)
        elif self.config.normalize == "frame":
            mu = x.mean(dim=(3, 4), keepdim=True)
            sd = x.std(dim=(3, 4), keepdim=True)
            x = (x - mu) / (sd + 1e-2)
        h = self.features(x)
        h = h.mean(dim=(2, 3, 4)) if self.config.pool == "mean" else h.amax(dim=(2, 3, 4))
        return self.proj(h)


class ExternalEncoder(nn.Module):
    """Adapter for a user-supplied backbone (e.g. a pretrained I3D).

    ``backbone`` receives the (B, N, H, W, 3) batch and must return
    (B, 2048) features; the adapter validates both sides.
    """

    def __init__(self, backbone: nn.Module | Callable[[torch.Tensor], torch.Tensor]):
        super().__init__()
        self.backbone = backbone

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        check_input(x)
        out = self.backbone(x)
        if out.ndim != 2 or out.shape != (x.shape[0], REPRESENTATION_DIM):
            raise ValueError(f"backbone returned shape {tuple(out.shape)}, expected ({x.shape[0]}, 2048)")
        return out


def build_encoder(config: EncoderConfig = EncoderConfig(), backbone=None) -> nn.Module:
    if config.variant == "toy3d":
        return Toy3DEncoder(config)
    if backbone is None:
        raise ValueError("the 'external' encoder variant needs a backbone module")
    return ExternalEncoder(backbone)


def tiny_config() -> EncoderConfig:
    """Width-reduced toy3d used for gradient checks."""
    return EncoderConfig(widths=(2, 4, 4, 4), temporal_strides=(1, 2, 1, 1), spatial_strides=(2, 2, 2, 2), groups=2)


def gradient_check(model: nn.Module, loss_fn: Callable[[nn.Module], torch.Tensor], eps: float = 1e-3,
                   max_params: int | None = 400, seed: int = 0, floor: float = 1e-6) -> float:
    """Max relative error between autograd and central-difference parameter gradients.

    Runs on a float64 copy of ``model``. When the model has more than
    ``max_params`` scalar parameters, a seeded random subset (always
    including one entry from every tensor) is probed.

    Args:
        model: module whose parameters are checked.
        loss_fn: maps the (float64) module to a scalar loss tensor.
        eps: finite-difference step.
        max_params: probe budget; ``None`` probes everything.
        floor: denominator floor so near-zero gradients compare absolutely.
    """
    import copy

    m = copy.deepcopy(model).double()
    params = [p for p in m.parameters() if p.requires_grad]
    for p in params:
        p.grad = None
    loss = loss_fn(m)
    loss.backward()
    analytic = [p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p) for p in params]

    probes = []
    for k, p in enumerate(params):
        probes += [(k, i) for i in range(p.numel())]
    if max_params is not None and len(probes) > max_params:
        rng = np.random.default_rng(seed)
        first = {}
        for k, i in probes:
            first.setdefault(k, (k, i))
        rest = [pr for pr in probes if pr not in set(first.values())]
        pick = rng.choice(len(rest), size=max(0, max_params - len(first)), replace=False)
        probes = list(first.values()) + [rest[j] for j in sorted(pick)]

    worst = 0.0
    with torch.no_grad():
        for k, i in probes:
            flat = params[k].view(-1)
            orig = flat[i].item()
            flat[i] = orig + eps
            up = loss_fn(m).item()
            flat[i] = orig - eps
            down = loss_fn(m).item()
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            a = analytic[k].view(-1)[i].item()
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    return worst


def encoder_grad_check(encoder: nn.Module | None = None, x: torch.Tensor | None = None, eps: float = 1e-3,
                       max_params: int | None = 400, seed: int = 0) -> float:
    """Gradient check of ``sum(encoder(x))`` on a tiny toy3d by default (N=4, 32x32)."""
    if encoder is None:
        torch.manual_seed(seed)
        encoder = Toy3DEncoder(tiny_config())
    if x is None:
        g = torch.Generator().manual_seed(seed)
        x = torch.rand(2, 4, 32, 32, 3, generator=g, dtype=torch.float64)
    x = x.double()
    return gradient_check(encoder, lambda m: m(x).sum(), eps=eps, max_params=max_params, seed=seed)
