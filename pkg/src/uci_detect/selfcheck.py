"""Numerical self-checks run by ``uci-detect selfcheck``.

Each check returns a ``CheckResult``; ``run_all`` collects them. Module
functions (``mve.bce_loss`` and friends) are looked up at call time so a
patched implementation is what gets checked.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch

from . import attention, contrastive, evaluate, mve
from .encoder import gradient_check

GRAD_TOL = 1e-3
CLOSED_FORM_TOL = 1e-9


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.2f}s)"


def auc_oracle(scores, labels) -> float:
    """O(n^2) pair count: P(score_fake > score_real) with ties counted 1/2."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    pos, neg = s[y == 1], s[y == 0]
    diff = pos[:, None] - neg[None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / diff.size)


def check_closed_form(ns=(2, 3, 4)) -> CheckResult:
    worst = 0.0
    for n in ns:
        scores = torch.full((2 * n, 2 * n), 0.37, dtype=torch.float64)
        part = contrastive.BatchPartition(list(range(n)), list(range(n, 2 * n)))
        target = -math.log((n - 1) / (2 * n - 1))
        for fn in (contrastive.loss_real, contrastive.loss_fake):
            worst = max(worst, abs(fn(scores, part).item() - target))
    return CheckResult("contrastive closed form", worst <= CLOSED_FORM_TOL, f"max |err| {worst:.2e}")


def check_bce_reference(seed: int = 0) -> CheckResult:
    """BCE against a direct evaluation of -[y log p + (1 - y) log(1 - p)]."""
    rng = np.random.default_rng(seed)
    p = rng.uniform(0.02, 0.98, size=64)
    y = rng.integers(0, 2, size=64).astype(np.float64)
    ref = -(y * np.log(p) + (1 - y) * np.log(1 - p))
    got = mve.bce_loss(torch.from_numpy(p), torch.from_numpy(y)).detach().numpy()
    err = float(np.abs(got - ref).max())
    return CheckResult("bce reference values", err <= 1e-9, f"max |err| {err:.2e}")


def _tiny_mve(seed: int) -> mve.MultiViewExpansion:
    torch.manual_seed(seed)
    return mve.MultiViewExpansion(in_dim=16, n_views=8, reduction=4).double()


def check_mve_gradients(seed: int = 0) -> CheckResult:
    """Finite differences through BCE, classifier, fuse, SE weights and expansion."""
    m = _tiny_mve(seed)
    g = torch.Generator().manual_seed(seed)
    rep = torch.randn(4, 16, generator=g, dtype=torch.float64)
    y = torch.tensor([0.0, 1.0, 1.0, 0.0], dtype=torch.float64)

    def loss(model):
        i_mv = model.expand(rep)
        z = model.fuse(i_mv, model.se_weights(i_mv))
        return mve.bce_loss(model.classify(z), y).mean()

    err = gradient_check(m, loss, eps=1e-6, max_params=None)
    # The fast path must agree with the materialised chain it replaces.
    with torch.no_grad():
        gap = (m.forward_materialized(rep)[0] - m(rep)[0]).abs().max().item()
    ok = err <= GRAD_TOL and gap <= 1e-10
    return CheckResult("gradient: bce/classifier/fuse/SE/expand", ok, f"max rel err {err:.2e}, fast-path gap {gap:.1e}")


def check_bce_descent(seed: int = 0) -> CheckResult:
    """A small step against the gradient must lower the loss on correctly-labelled data."""
    m = _tiny_mve(seed)
    g = torch.Generator().manual_seed(seed + 1)
    rep = torch.randn(8, 16, generator=g, dtype=torch.float64)
    y = torch.tensor([0.0, 1.0] * 4, dtype=torch.float64)
    opt = torch.optim.SGD(m.parameters(), lr=0.05)

    def reference():
        with torch.no_grad():
            p = m(rep)[1]
            return -(y * torch.log(p) + (1 - y) * torch.log1p(-p)).mean().item()

    start = reference()
    for _ in range(20):
        opt.zero_grad()
        mve.bce_loss(m(rep)[1], y).mean().backward()
        opt.step()
    end = reference()
    return CheckResult("bce descent", end < start, f"reference BCE {start:.4f} -> {end:.4f}")


def check_head_gradients(seed: int = 0) -> CheckResult:
    torch.manual_seed(seed)
    att = attention.MultiHeadInteraction(in_dim=12, n_heads=3, head_dim=4).double()
    g = torch.Generator().manual_seed(seed)
    z, z2 = torch.randn(2, 12, generator=g, dtype=torch.float64)
    worst = 0.0
    for h in range(att.n_heads):
        worst = max(worst, gradient_check(att, lambda a, h=h: a.head_score(z, z2, h), eps=1e-6, max_params=None))
    return CheckResult("gradient: head_score wrt projections", worst <= GRAD_TOL, f"max rel err {worst:.2e}")


def check_auc_oracle(n_sets: int = 200, max_n: int = 500, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(n_sets):
        n = int(rng.integers(2, max_n + 1))
        labels = rng.permutation(np.r_[0, 1, rng.integers(0, 2, size=n - 2)])
        scores = rng.integers(0, max(2, n // 4), size=n) / 7.0  # coarse grid forces ties
        if evaluate.auc(scores, labels) != auc_oracle(scores, labels):
            mismatches += 1
    return CheckResult("auc vs pairwise oracle", mismatches == 0, f"{mismatches}/{n_sets} mismatches")


CHECKS: list[Callable[[], CheckResult]] = [
    check_closed_form,
    check_bce_reference,
    check_bce_descent,
    check_mve_gradients,
    check_head_gradients,
    check_auc_oracle,
]


def run_all(checks=None) -> list[CheckResult]:
    results = []
    for fn in checks or CHECKS:
        t0 = time.perf_counter()
        try:
            res = fn()
        except Exception as exc:  # a crashing check is a failed check
            res = CheckResult(fn.__name__, False, f"raised {type(exc).__name__}: {exc}")
        res.seconds = time.perf_counter() - t0
        results.append(res)
    return results
