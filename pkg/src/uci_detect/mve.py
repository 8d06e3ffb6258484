"""Multi-view expansion with squeeze-and-excitation view weighting.

Shapes, per sample: the representation ``I`` has length L (2048). A 1-D
convolution with one input channel and V (512) output channels lifts it to
the multi-view map ``I_mv`` of shape (L, V); view ``v`` is column ``v``.
Internally the transposed, views-first layout (V, L) is used.
"""

from __future__ import annotations

import torch
from torch import nn

EPS = 1e-7


class NonFiniteRepresentationError(ValueError):
    """The encoder produced NaN or infinite features."""


class MultiViewExpansion(nn.Module):
    """Expand, reweight and fuse a representation, then classify it.

    Args:
        in_dim: representation length L.
        n_views: number of views V (width of the fused representation Z).
        reduction: compression ratio r of the SE bottleneck.
        kernel_size: expansion convolution kernel, odd for same padding.
        shared_fc: share the per-view L -> 1 projection across views.
    """

    def __init__(self, in_dim: int = 2048, n_views: int = 512, reduction: int = 4,
                 kernel_size: int = 3, shared_fc: bool = True):
        super().__init__()
        if kernel_size % 2 != 1:
            raise ValueError("kernel_size must be odd")
        if n_views % reduction:
            raise ValueError(f"n_views ({n_views}) must be divisible by reduction ({reduction})")
        self.in_dim = in_dim
        self.n_views = n_views
        self.reduction = reduction
        self.shared_fc = shared_fc
        self.expand_conv = nn.Conv1d(1, n_views, kernel_size, padding=kernel_size // 2)
        self.fc_c = nn.Linear(n_views, n_views // reduction)
        self.fc_r = nn.Linear(n_views // reduction, n_views)
        if shared_fc:
            self.fc = nn.Linear(in_dim, 1)
        else:
            bound = in_dim ** -0.5
            self.fc_weight = nn.Parameter(torch.empty(n_views, in_dim).uniform_(-bound, bound))
            self.fc_bias = nn.Parameter(torch.empty(n_views).uniform_(-bound, bound))
        self.classifier = nn.Linear(n_views, 1)

    def expand(self, rep: torch.Tensor) -> torch.Tensor:
        """(B, L) -> multi-view map I_mv of shape (B, L, V)."""
        if rep.ndim == 1:
            rep = rep[None]
        if not torch.isfinite(rep).all():
            raise NonFiniteRepresentationError("representation contains non-finite values")
        return self.expand_conv(rep[:, None, :]).transpose(1, 2)

    def se_weights(self, i_mv: torch.Tensor) -> torch.Tensor:
        """View weights in (0, 1), shape (B, V): sigmoid(fc_r(fc_c(GAP(I_mv^T))))."""
        pooled = i_mv.mean(dim=1)  # average each view over the L axis
        return torch.sigmoid(self.fc_r(self.fc_c(pooled)))

    def pre_fc(self, i_mv: torch.Tensor, w_se: torch.Tensor) -> torch.Tensor:
        """Residual plus view-wise reweighting, views-first: (B, V, L)."""
        views = i_mv.transpose(1, 2)
        if w_se.shape != views.shape[:2]:
            raise ValueError(f"view weights of shape {tuple(w_se.shape)} do not match {tuple(views.shape[:2])} views")
        return views + views * w_se[..., None]

    def project(self, fused: torch.Tensor) -> torch.Tensor:
        if self.shared_fc:
            return self.fc(fused).squeeze(-1)
        return (fused * self.fc_weight).sum(-1) + self.fc_bias

    def fuse(self, i_mv: torch.Tensor, w_se: torch.Tensor) -> torch.Tensor:
        """Fused representation Z, shape (B, V)."""
        return self.project(self.pre_fc(i_mv, w_se))

    def logit(self, z: torch.Tensor) -> torch.Tensor:
        return self.classifier(z).squeeze(-1)

    def classify(self, z: torch.Tensor) -> torch.Tensor:
        """Probability that each sample is fake, shape (B,)."""
        return torch.sigmoid(self.logit(z))

    def _shifted(self, rep: torch.Tensor) -> torch.Tensor:
        """(B, K, L): the K zero-padded shifts of ``rep`` seen by the expansion kernel."""
        k = self.expand_conv.kernel_size[0]
        padded = nn.functional.pad(rep, (k // 2, k // 2))
        return torch.stack([padded[:, j:j + rep.shape[1]] for j in range(k)], dim=1)

    def fused(self, rep: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Z and view weights without materialising the (B, L, V) map.

        Every stage up to the per-view projection is linear in the map, so
        GAP and projection can be pushed through the convolution:
        ``view_v . u = sum_k w[v, k] (shift_k(I) . u) + b[v] sum(u)``.
        """
        if rep.ndim == 1:
            rep = rep[None]
        if not torch.isfinite(rep).all():
            raise NonFiniteRepresentationError("representation contains non-finite values")
        w = self.expand_conv.weight[:, 0, :]  # V, K
        b = self.expand_conv.bias
        shifts = self._shifted(rep)  # B, K, L
        pooled = shifts.mean(-1) @ w.T + b
        w_se = torch.sigmoid(self.fc_r(self.fc_c(pooled)))
        if self.shared_fc:
            u = self.fc.weight[0]
            proj = (shifts @ u) @ w.T + b * u.sum()
            bias = self.fc.bias[0]
        else:
            proj = torch.einsum("bkl,vl,vk->bv", shifts, self.fc_weight, w) + b * self.fc_weight.sum(-1)
            bias = self.fc_bias
        z = (1.0 + w_se) * proj + bias
        return z, w_se

    def forward(self, rep: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns (Z, probability)."""
        z, _ = self.fused(rep)
        return z, self.classify(z)

    def forward_materialized(self, rep: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Reference forward through ``expand``/``se_weights``/``fuse``."""
        i_mv = self.expand(rep)
        z = self.fuse(i_mv, self.se_weights(i_mv))
        return z, self.classify(z)


def bce_loss(prob: torch.Tensor, label: torch.Tensor, eps: float = EPS) -> torch.Tensor:
    """Elementwise binary cross-entropy -[y log p + (1 - y) log(1 - p)], p clamped to [eps, 1 - eps]."""
    prob = torch.as_tensor(prob)
    label = torch.as_tensor(label, dtype=prob.dtype)
    p = prob.clamp(eps, 1.0 - eps)
    return -(label * torch.log(p) + (1.0 - label) * torch.log1p(-p))
