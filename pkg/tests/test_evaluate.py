import json

import numpy as np
import pytest

from selfcheck_oracle import pairwise_auc
from uci_detect.evaluate import (
    DomainReport,
    VideoScore,
    acc,
    auc,
    cross_domain_report,
    read_report,
    report_rows,
    video_score,
    write_report,
)
from uci_detect.trainer import write_oracle_checkpoint


def test_auc_known_values():
    assert auc([0.1, 0.9], [0, 1]) == 1.0
    assert auc([0.9, 0.1], [0, 1]) == 0.0
    assert auc([0.5, 0.5], [0, 1]) == 0.5
    assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75


def test_auc_matches_pairwise_oracle_with_ties():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 501))
        y = rng.permutation(np.r_[0, 1, rng.integers(0, 2, n - 2)])
        s = rng.integers(0, 10, n) / 10.0
        assert auc(s, y) == pairwise_auc(s, y)


def test_auc_needs_both_classes():
    with pytest.raises(ValueError):
        auc([0.2, 0.3], [1, 1])


def test_acc_threshold_inclusive():
    assert acc([0.5, 0.49], [1, 0]) == 1.0
    assert acc([0.5], [0]) == 0.0


def test_video_score_is_mean():
    assert video_score([0.2, 0.4, 0.9]) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        video_score([])


def test_video_score_validation():
    with pytest.raises(ValueError):
        VideoScore("a", 1.2, 0)
    with pytest.raises(ValueError):
        VideoScore("a", 0.2, 2)


def test_report_rows_and_round_trip(tmp_path):
    scores = [VideoScore(f"v{i}", p, y, d) for i, (p, y, d) in
              enumerate([(0.1, 0, "A"), (0.9, 1, "A"), (0.3, 0, "B"), (0.2, 1, "B")])]
    rows = report_rows(scores)
    assert rows == [DomainReport("A", 2, 1.0, 1.0), DomainReport("B", 2, 0.0, 0.5)]
    csv_path, json_path = write_report(rows, tmp_path)
    assert read_report(json_path) == rows
    assert csv_path.read_text().splitlines()[0] == "domain,n_videos,auc,acc"
    assert {tuple(r) for r in json.loads(json_path.read_text())[0].items()} >= {("domain", "A")}


def test_cross_domain_with_oracle(tiny_corpus, tmp_path):
    manifest, _ = tiny_corpus
    ckpt = write_oracle_checkpoint(tmp_path / "oracle.npz")
    rows = cross_domain_report(ckpt, manifest, "C", out_dir=tmp_path)
    assert rows[0].auc == 1.0 and rows[0].acc == 1.0
    assert read_report(tmp_path / "report_C.json") == rows
    with pytest.raises(KeyError):
        cross_domain_report(ckpt, manifest, "Z")


def test_cross_domain_custom_scorer(tiny_corpus):
    manifest, _ = tiny_corpus
    rows = cross_domain_report(None, manifest, "A", scorer=lambda recs: [0.5] * len(recs))
    assert rows[0].auc == 0.5
