import json

import numpy as np
import pytest
from PIL import Image

from uci_detect.cli import main
from uci_detect.evaluate import read_report


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


SMALL = {"num_domains": 3, "videos_per_domain_per_label": 4, "frames_per_video": 8, "seed": 1}


@pytest.fixture
def synth_cfg(tmp_path):
    p = tmp_path / "synth.json"
    p.write_text(json.dumps(SMALL))
    return p


class TestSynth:
    def test_writes_manifest(self, capsys, tmp_path, synth_cfg):
        code, out, _ = run(capsys, "synth", "--config", str(synth_cfg), "--out", str(tmp_path / "c"))
        assert code == 0
        assert out.strip() == str(tmp_path / "c" / "manifest.jsonl")
        assert len((tmp_path / "c" / "manifest.jsonl").read_text().splitlines()) == 24

    def test_flag_overrides_config(self, capsys, tmp_path, synth_cfg):
        code, _, _ = run(capsys, "synth", "--config", str(synth_cfg), "--out", str(tmp_path / "c"),
                         "--videos-per-domain-per-label", "2")
        assert code == 0
        assert len((tmp_path / "c" / "manifest.jsonl").read_text().splitlines()) == 12

    def test_num_domains_one(self, capsys, tmp_path):
        code, _, err = run(capsys, "synth", "--out", str(tmp_path), "--num-domains", "1")
        assert code == 2 and "num_domains" in err

    def test_rerun_identical(self, capsys, tmp_path, synth_cfg):
        for name in ("a", "b"):
            run(capsys, "synth", "--config", str(synth_cfg), "--out", str(tmp_path / name))
        for f in (tmp_path / "a").rglob("*.png"):
            assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()

    def test_workspace_and_env_seed(self, capsys, tmp_path, monkeypatch):
        monkeypatch.setenv("UCI_DETECT_SEED", "5")
        code, out, _ = run(capsys, "--workspace", str(tmp_path), "synth", "--out", "rel",
                           "--videos-per-domain-per-label", "1", "--frames-per-video", "2", "--seed", "1")
        assert code == 0 and out.strip() == str(tmp_path / "rel" / "manifest.jsonl")
        monkeypatch.setenv("UCI_DETECT_SEED", "1")
        run(capsys, "--workspace", str(tmp_path), "synth", "--out", "rel1",
            "--videos-per-domain-per-label", "1", "--frames-per-video", "2", "--seed", "5")
        a = (tmp_path / "rel/videos/A_real_0000/frame_00000.png").read_bytes()
        b = (tmp_path / "rel1/videos/A_real_0000/frame_00000.png").read_bytes()
        assert a != b


def test_unknown_flag_rejected(capsys):
    code, _, err = run(capsys, "synth", "--bogus", "1")
    assert code == 2 and "bogus" in err


def test_unknown_config_key(capsys, tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"colour": "red"}')
    code, _, err = run(capsys, "synth", "--config", str(p), "--out", str(tmp_path))
    assert code == 2 and "colour" in err


def test_missing_config_file(capsys, tmp_path):
    code, _, _ = run(capsys, "synth", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path))
    assert code == 3


class TestTrainEval:
    def _train_cfg(self, tmp_path, manifest, **kw):
        cfg = {"profile": "desk", "manifest": str(manifest), "out_dir": str(tmp_path / "run"), "epochs": 1,
               "batch_size": 4, "clip_len": 4, "frame_size": 32, "n_views": 16, "n_heads": 2, "head_dim": 4,
               "encoder": {"widths": [4, 4, 4, 4]}, "hold_out_domain": "C", **kw}
        p = tmp_path / "train.json"
        p.write_text(json.dumps(cfg))
        return p

    def test_train_resume_and_eval(self, capsys, tmp_path, tiny_corpus):
        manifest, _ = tiny_corpus
        cfg = self._train_cfg(tmp_path, manifest)
        code, out, _ = run(capsys, "train", "--config", str(cfg))
        assert code == 0 and "ckpt_epoch_001.npz" in out
        code, out, _ = run(capsys, "train", "--config", str(cfg), "--epochs", "2",
                           "--resume", str(tmp_path / "run" / "ckpt_epoch_001.npz"))
        assert code == 0 and (tmp_path / "run" / "ckpt_epoch_002.npz").exists()
        code, out, _ = run(capsys, "eval", "--ckpt", str(tmp_path / "run" / "ckpt_epoch_002.npz"),
                           "--manifest", str(manifest), "--hold-out", "C")
        assert code == 0
        rows = read_report(tmp_path / "run" / "report_C.json")
        assert f"auc={rows[0].auc!r}" in out and f"acc={rows[0].acc!r}" in out

    def test_missing_manifest(self, capsys, tmp_path):
        cfg = self._train_cfg(tmp_path, tmp_path / "missing.jsonl")
        code, _, err = run(capsys, "train", "--config", str(cfg))
        assert code == 3 and "manifest" in err

    def test_non_finite_loss_exit(self, capsys, tmp_path, tiny_corpus):
        manifest, _ = tiny_corpus
        cfg = self._train_cfg(tmp_path, manifest, learning_rate=1e30)
        code, _, err = run(capsys, "train", "--config", str(cfg), "--epochs", "3")
        assert code == 4 and "non-finite" in err

    def test_bad_config_value(self, capsys, tmp_path, tiny_corpus):
        manifest, _ = tiny_corpus
        code, _, _ = run(capsys, "train", "--config", str(self._train_cfg(tmp_path, manifest)), "--batch-size", "3")
        assert code == 2

    def test_oracle_eval(self, capsys, tmp_path, tiny_corpus):
        manifest, _ = tiny_corpus
        run(capsys, "oracle-checkpoint", "--out", str(tmp_path / "oracle.npz"))
        code, out, _ = run(capsys, "eval", "--ckpt", str(tmp_path / "oracle.npz"), "--manifest", str(manifest),
                           "--hold-out", "B", "--out", str(tmp_path / "rep"))
        assert code == 0 and "auc=1.0" in out
        assert read_report(tmp_path / "rep" / "report_B.json")[0].auc == 1.0

    def test_unknown_domain(self, capsys, tmp_path, tiny_corpus):
        manifest, _ = tiny_corpus
        run(capsys, "oracle-checkpoint", "--out", str(tmp_path / "oracle.npz"))
        code, _, err = run(capsys, "eval", "--ckpt", str(tmp_path / "oracle.npz"), "--manifest", str(manifest),
                           "--hold-out", "Z")
        assert code == 2 and "Z" in err


class TestAugmentPreview:
    def test_strips(self, capsys, tmp_path, tiny_corpus):
        _, recs = tiny_corpus
        clip = str(recs[0].frame_dir)
        paths = []
        for seed, sub in [(1, "a"), (1, "b"), (2, "c")]:
            code, out, _ = run(capsys, "augment-preview", "--clip", clip, "--seed", str(seed),
                               "--out", str(tmp_path / sub), "--max-frames", "4")
            assert code == 0
            paths.append(out.strip())
        a, b, c = (open(p, "rb").read() for p in paths)
        assert a == b and a != c
        strip = np.asarray(Image.open(paths[0]))
        assert strip.shape == (128, 256, 3)

    def test_forced_flip_mirrors(self, capsys, tmp_path, tiny_corpus):
        _, recs = tiny_corpus
        code, out, _ = run(capsys, "augment-preview", "--clip", str(recs[0].frame_dir), "--seed", "0",
                           "--out", str(tmp_path), "--force", "flip", "--max-frames", "2")
        strip = np.asarray(Image.open(out.strip()))
        top, bottom = strip[:64], strip[64:]
        np.testing.assert_array_equal(bottom[:, :64], top[:, :64][:, ::-1])

    def test_unreadable_clip(self, capsys, tmp_path):
        code, _, _ = run(capsys, "augment-preview", "--clip", str(tmp_path / "none"), "--out", str(tmp_path))
        assert code == 3


def test_selfcheck_passes(capsys):
    code, out, _ = run(capsys, "selfcheck")
    assert code == 0
    assert "FAIL" not in out and "checks passed" in out


def test_selfcheck_catches_bce_sign_flip(capsys, monkeypatch):
    from uci_detect import mve

    original = mve.bce_loss
    monkeypatch.setattr(mve, "bce_loss", lambda p, y, eps=mve.EPS: -original(p, y, eps))
    code, out, _ = run(capsys, "selfcheck")
    assert code != 0 and "FAIL" in out
