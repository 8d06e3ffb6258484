import math

import pytest
import torch

from uci_detect.attention import MultiHeadInteraction
from uci_detect.encoder import gradient_check


def _att(**kw):
    torch.manual_seed(0)
    return MultiHeadInteraction(**{"in_dim": 12, "n_heads": 3, "head_dim": 4, **kw}).double()


def test_head_score_is_scaled_dot_product():
    att = _att()
    z, z2 = torch.randn(2, 12, dtype=torch.float64)
    for h in range(3):
        expect = (att.weight[h] @ z) @ (att.weight[h] @ z2) / math.sqrt(4)
        torch.testing.assert_close(att.head_score(z, z2, h), expect)


def test_att_is_mean_of_heads():
    att = _att()
    z, z2 = torch.randn(2, 12, dtype=torch.float64)
    torch.testing.assert_close(att.att(z, z2), att.head_scores(z, z2).mean())
    total = _att(reduce="sum")
    torch.testing.assert_close(total.att(z, z2), att.head_scores(z, z2).sum())


def test_pairwise_symmetric_and_consistent():
    att = _att()
    z = torch.randn(6, 12, dtype=torch.float64)
    s = att.pairwise(z)
    assert s.shape == (6, 6)
    assert torch.equal(s, s.T)
    torch.testing.assert_close(s[1, 4], att.att(z[1], z[4]))


def test_default_dims():
    att = MultiHeadInteraction()
    assert att.weight.shape == (8, 64, 512)
    assert att.pairwise(torch.randn(4, 512)).shape == (4, 4)


def test_invalid():
    with pytest.raises(ValueError):
        MultiHeadInteraction(n_heads=0)
    with pytest.raises(ValueError):
        MultiHeadInteraction(reduce="max")
    with pytest.raises(ValueError):
        _att().pairwise(torch.randn(1, 12, dtype=torch.float64))


def test_head_score_gradients():
    att = _att()
    z, z2 = torch.randn(2, 12, dtype=torch.float64)
    for h in range(3):
        assert gradient_check(att, lambda a, h=h: a.head_score(z, z2, h), eps=1e-6, max_params=None) < 1e-3
