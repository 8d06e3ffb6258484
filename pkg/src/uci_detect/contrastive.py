"""Supervised InfoNCE objective over real/fake attention scores.

For the real set, positives are ordered pairs (i, j), i != j, of real
samples and negatives are all (real, fake) pairs:

    L_r = -log( sum_pos exp(s/tau) / (sum_pos exp(s/tau) + sum_neg exp(s/tau)) )

``L_f`` mirrors it with the roles swapped. All sums go through logsumexp.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import torch

TAU = 0.1


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class BatchPartition:
    real: tuple[int, ...]
    fake: tuple[int, ...]

    def __post_init__(self):
        if set(self.real) & set(self.fake):
            raise PartitionError("real and fake index sets overlap")

    @classmethod
    def from_labels(cls, labels: Sequence[int] | torch.Tensor) -> "BatchPartition":
        labels = [int(v) for v in labels]
        return cls(tuple(i for i, v in enumerate(labels) if v == 0),
                   tuple(i for i, v in enumerate(labels) if v == 1))

    @property
    def contrastable(self) -> bool:
        return len(self.real) >= 2 and len(self.fake) >= 2


@dataclass
class LossBreakdown:
    L_r: float
    L_f: float
    L_in: float
    L_ce: float
    L_total: float
    alpha: float
    tau: float

    def as_dict(self) -> dict:
        return asdict(self)


def _lse(x: torch.Tensor, stable: bool) -> torch.Tensor:
    if stable:
        return torch.logsumexp(x, dim=0)
    return torch.log(torch.exp(x).sum())


def _one_sided(scores: torch.Tensor, anchor: Sequence[int], other: Sequence[int], tau: float,
               stable: bool, who: str) -> torch.Tensor:
    if len(anchor) < 2:
        raise PartitionError(f"need at least 2 {who} samples for positive pairs, got {len(anchor)}")
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    scores = torch.as_tensor(scores)
    a = torch.as_tensor(list(anchor), dtype=torch.long)
    o = torch.as_tensor(list(other), dtype=torch.long)
    block = scores[a][:, a]
    off = ~torch.eye(len(anchor), dtype=torch.bool, device=block.device)
    pos = block[off] / tau
    neg = scores[a][:, o].reshape(-1) / tau
    return _lse(torch.cat([pos, neg]), stable) - _lse(pos, stable)


def loss_real(scores: torch.Tensor, partition: BatchPartition, tau: float = TAU, stable: bool = True) -> torch.Tensor:
    """Contrastive loss anchored on the real set."""
    return _one_sided(scores, partition.real, partition.fake, tau, stable, "real")


def loss_fake(scores: torch.Tensor, partition: BatchPartition, tau: float = TAU, stable: bool = True) -> torch.Tensor:
    """Contrastive loss anchored on the fake set."""
    return _one_sided(scores, partition.fake, partition.real, tau, stable, "fake")


def loss_in(l_r, l_f):
    return 0.5 * l_r + 0.5 * l_f


def total_loss(l_in, l_ce, alpha: float):
    """alpha * L_in + (1 - alpha) * L_ce."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * l_in + (1.0 - alpha) * l_ce


def equal_score_closed_form(n: int) -> float:
    """L_r = L_f for n real and n fake samples with all scores equal."""
    import math

    return -math.log((n - 1) / (2 * n - 1))
