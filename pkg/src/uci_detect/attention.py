"""Multi-head interaction score between fused representations.

Each head projects both representations with its own linear map and takes
their dot product scaled by 1/sqrt(d). Head scores are reduced to a single
scalar (mean by default); normalisation across candidates happens in the
contrastive loss denominator.
"""

from __future__ import annotations

import math

import torch
from torch import nn


class MultiHeadInteraction(nn.Module):
    """Scalar similarity ``att(z, z')`` from ``n_heads`` projected dot products.

    Projections are initialised uniform in +-1/sqrt(in_dim) from the global
    torch generator (seed it for reproducibility).
    """

    def __init__(self, in_dim: int = 512, n_heads: int = 8, head_dim: int = 64, reduce: str = "mean"):
        super().__init__()
        if n_heads < 1 or head_dim < 1:
            raise ValueError("n_heads and head_dim must be positive")
        if reduce not in ("mean", "sum"):
            raise ValueError(f"reduce must be 'mean' or 'sum', got {reduce!r}")
        self.n_heads = n_heads
        self.head_dim = head_dim
        self.reduce = reduce
        bound = 1.0 / math.sqrt(in_dim)
        self.weight = nn.Parameter(torch.empty(n_heads, head_dim, in_dim).uniform_(-bound, bound))

    def project(self, z: torch.Tensor) -> torch.Tensor:
        """(..., in_dim) -> (..., n_heads, head_dim)."""
        return torch.einsum("hdi,...i->...hd", self.weight, z)

    def _reduce(self, heads: torch.Tensor) -> torch.Tensor:
        return heads.mean(-1) if self.reduce == "mean" else heads.sum(-1)

    def _scores(self, pa: torch.Tensor, pb: torch.Tensor) -> torch.Tensor:
        # Elementwise product then one reduction: commutative, so exactly symmetric.
        return (pa * pb).sum(-1) / math.sqrt(self.head_dim)

    def head_scores(self, z: torch.Tensor, z2: torch.Tensor) -> torch.Tensor:
        """Per-head scaled dot products, shape (..., n_heads)."""
        return self._scores(self.project(z), self.project(z2))

    def head_score(self, z: torch.Tensor, z2: torch.Tensor, head: int) -> torch.Tensor:
        return self.head_scores(z, z2)[..., head]

    def att(self, z: torch.Tensor, z2: torch.Tensor) -> torch.Tensor:
        return self._reduce(self.head_scores(z, z2))

    def pairwise(self, z: torch.Tensor) -> torch.Tensor:
        """(B, in_dim) -> symmetric (B, B) matrix of ``att`` values."""
        if z.ndim != 2 or z.shape[0] < 2:
            raise ValueError(f"pairwise attention needs a (B >= 2, dim) batch, got {tuple(z.shape)}")
        p = self.project(z)
        return self._reduce(self._scores(p[:, None], p[None, :]))

    forward = pairwise
