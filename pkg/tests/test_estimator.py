import numpy as np
import pytest
from sklearn.base import clone

from uci_detect.clips import SyntheticConfig, render_video
from uci_detect.estimator import TemporalAugmenter, UCIDetector, check_videos

FAST = dict(epochs=2, batch_size=4, clip_len=4, frame_size=32, random_state=0)


def _videos(n_per_label=4, frames=8):
    cfg = SyntheticConfig(frames_per_video=frames)
    X, y = [], []
    for label in (0, 1):
        for i in range(n_per_label):
            f, _, _ = render_video(0, bool(label), cfg, np.random.default_rng([label, i]))
            X.append(f)
            y.append(label)
    return np.stack(X), np.array(y)


def test_params_round_trip():
    det = UCIDetector(epochs=3, augment_mode="none")
    assert det.get_params()["epochs"] == 3
    assert clone(det).get_params() == det.get_params()
    det.set_params(contrastive=False)
    assert det.contrastive is False


def test_fit_predict():
    X, y = _videos()
    det = UCIDetector(**FAST).fit(X, y)
    proba = det.predict_proba(X)
    assert proba.shape == (8, 2)
    np.testing.assert_allclose(proba.sum(1), 1.0)
    assert set(det.predict(X)) <= {0, 1}
    assert 0.0 <= det.score(X, y) <= 1.0
    assert len(det.history_) == 4 and "L_total" in det.history_[0]  # 2 steps per epoch
    np.testing.assert_array_equal(det.classes_, [0, 1])


def test_fit_deterministic():
    X, y = _videos()
    a = UCIDetector(**FAST).fit(X, y).predict_proba(X)
    b = UCIDetector(**FAST).fit(X, y).predict_proba(X)
    np.testing.assert_array_equal(a, b)


def test_validation():
    X, y = _videos(n_per_label=2)
    with pytest.raises(ValueError, match="labels"):
        UCIDetector(**FAST).fit(X, y[:-1])
    with pytest.raises(ValueError, match="both"):
        UCIDetector(**FAST).fit(X, np.zeros(len(X), int))
    with pytest.raises(ValueError, match="0 \\(real\\)"):
        UCIDetector(**FAST).fit(X, y + 1)
    with pytest.raises(ValueError, match="uint8"):
        check_videos(X.astype(np.float32))
    with pytest.raises(ValueError, match="fewer"):
        UCIDetector(**{**FAST, "clip_len": 12}).fit(X, y)
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        UCIDetector().predict(X)


def test_augmenter():
    X, _ = _videos(n_per_label=1, frames=4)
    aug = TemporalAugmenter(output_size=32, random_state=0)
    out = aug.fit_transform(X)
    assert out.shape == (2, 4, 32, 32, 3) and out.dtype == np.uint8
    np.testing.assert_array_equal(out, TemporalAugmenter(output_size=32, random_state=0).fit_transform(X))
    none = TemporalAugmenter(mode="none", output_size=64).fit_transform(X)
    np.testing.assert_array_equal(none, X)
    with pytest.raises(ValueError):
        TemporalAugmenter(mode="wild").fit(X)
