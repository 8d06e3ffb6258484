import numpy as np
import pytest

from coherence import (
    coordinate_clip,
    cutout_mask,
    displacement,
    noise_clip,
    patch_clip,
    patch_mask,
    recover_crop,
    recover_flip,
    recover_sigma,
)
from uci_detect import augment
from uci_detect.augment import AugmentConfig
from uci_detect.clips import ClipError, VideoClip

CANVAS = AugmentConfig.for_canvas(64)


class TestConfig:
    def test_defaults(self):
        cfg = AugmentConfig()
        probs = [cfg.p_crop, cfg.p_blur, cfg.p_flip, cfg.p_vflip, cfg.p_colorjitter, cfg.p_greyscale, cfg.p_cutout]
        assert probs == [0.2, 0.1, 0.5, 0.5, 0.7, 0.7, 0.7]
        assert cfg.cutout_side_range == (32, 64) and cfg.output_size == 224

    def test_canvas_scaling(self):
        assert CANVAS.cutout_side_range == (9, 18)
        assert CANVAS.output_size == 64

    @pytest.mark.parametrize("kw", [dict(p_flip=1.5), dict(aspect_range=(1.3, 0.75)), dict(mode="sometimes"),
                                    dict(size_ratio_range=(0.0, 1.0)), dict(output_size=60)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            AugmentConfig(**kw)

    def test_from_dict_rejects_unknown(self):
        with pytest.raises(ValueError, match="unknown"):
            AugmentConfig.from_dict({"p_sparkle": 0.5})
        assert AugmentConfig.from_dict({"aspect_range": [0.8, 1.2]}).aspect_range == (0.8, 1.2)

    def test_only(self):
        cfg = CANVAS.only("flip", "cutout")
        assert (cfg.p_flip, cfg.p_cutout, cfg.p_crop, cfg.p_colorjitter) == (1.0, 1.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            CANVAS.only("rotate")


def test_all_flags_off_is_resize_only():
    clip = noise_clip(n=4, size=80)
    cfg = AugmentConfig.for_canvas(64).only()
    for mode in augment.MODES:
        out = augment.apply(clip, np.random.default_rng(0), AugmentConfig.for_canvas(64, mode=mode).only())
        np.testing.assert_array_equal(out, augment.resize_clip(clip, 64))
    assert cfg.p_flip == 0.0


def test_shape_order_and_determinism():
    clip = VideoClip(noise_clip(n=6, size=72))
    a = augment.apply(clip, np.random.default_rng(5), CANVAS)
    b = augment.apply(clip, np.random.default_rng(5), CANVAS)
    c = augment.apply(clip, np.random.default_rng(6), CANVAS)
    assert a.shape == (6, 64, 64, 3) and a.dtype == np.uint8
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_rejects_bad_input():
    with pytest.raises(ClipError):
        augment.apply(np.zeros((4, 64, 64), np.uint8), np.random.default_rng(0), CANVAS)


class TestClipLevelCoherence:
    def test_crop(self):
        src = coordinate_clip()
        for seed in range(3):
            out, trace = augment.apply(src, np.random.default_rng(seed), CANVAS.only("crop"), return_trace=True)
            rects = {recover_crop(f, 64) for f in out}
            assert rects == {trace.clip[0].crop_rect}

    @pytest.mark.parametrize("name,axis", [("flip", 1), ("vflip", 0)])
    def test_flips(self, name, axis):
        src = noise_clip(n=16, size=64)
        out = augment.apply(src, np.random.default_rng(0), CANVAS.only(name))
        assert {recover_flip(s, f, 64, axis) for s, f in zip(src, out)} == {True}

    def test_blur(self):
        src = noise_clip()
        out, trace = augment.apply(src, np.random.default_rng(0), CANVAS.only("blur"), return_trace=True)
        sigmas = {recover_sigma(s, f, 64) for s, f in zip(src, out)}
        assert len(sigmas) == 1
        assert abs(sigmas.pop() - trace.clip[0].blur_sigma) < 0.01

    def test_non_temporal_mode_breaks_it(self):
        src = coordinate_clip()
        cfg = AugmentConfig.for_canvas(64, mode="non_temporal", p_crop=1.0, p_blur=0.0, p_flip=0.0, p_vflip=0.0,
                                       p_colorjitter=0.0, p_greyscale=0.0, p_cutout=0.0)
        out = augment.apply(src, np.random.default_rng(0), cfg)
        assert len({recover_crop(f, 64) for f in out}) > 1


def test_frame_level_keeps_displacement():
    clip, drawn, _ = patch_clip()
    cfg = CANVAS.only("colorjitter", "greyscale", "cutout")
    for seed in range(2):
        out, trace = augment.apply(clip, np.random.default_rng(seed), cfg, return_trace=True)
        for t in range(len(out) - 1):
            valid = ~(cutout_mask(out[t].shape, trace.frame[t]) | cutout_mask(out[t].shape, trace.frame[t + 1]))
            d = displacement(patch_mask(out[t]), patch_mask(out[t + 1]), valid)
            assert d == tuple(int(v) for v in drawn[t + 1] - drawn[t])


def test_frame_flags_drawn_per_frame():
    src = noise_clip(n=16, size=64)
    _, trace = augment.apply(src, np.random.default_rng(0), CANVAS, return_trace=True)
    assert len({p.jitter_factors for p in trace.frame}) > 1
    cfg = AugmentConfig.for_canvas(64, per_frame_flags=False)
    _, trace = augment.apply(src, np.random.default_rng(0), cfg, return_trace=True)
    assert len(set(trace.frame)) == 1


def test_flag_frequencies():
    rng = np.random.default_rng(0)
    n = 10_000
    clip = [augment.draw_clip_params(rng, AugmentConfig(), (224, 224)) for _ in range(n)]
    frame = [augment.draw_frame_params(rng, AugmentConfig()) for _ in range(n)]
    observed = {
        0.2: np.mean([p.crop_on for p in clip]),
        0.1: np.mean([p.blur_on for p in clip]),
        0.5: np.mean([p.flip_on for p in clip]),
    }
    observed_more = [(0.5, np.mean([p.vflip_on for p in clip])), (0.7, np.mean([p.jitter_on for p in frame])),
                     (0.7, np.mean([p.greyscale_on for p in frame])), (0.7, np.mean([p.cutout_on for p in frame]))]
    for p, f in list(observed.items()) + observed_more:
        assert abs(f - p) <= 3 * np.sqrt(p * (1 - p) / n)


def test_crop_respects_ranges():
    rng = np.random.default_rng(1)
    cfg = AugmentConfig()
    for _ in range(500):
        x, y, w, h = augment._sample_crop(rng, cfg, 120, 160)
        assert 0.8 <= w * h / (120 * 160) <= 1.0
        assert 0.75 <= w / h <= 1.3
        assert x + w <= 160 and y + h <= 120


def test_cutout_sides_in_range():
    rng = np.random.default_rng(2)
    sides = [augment.draw_frame_params(rng, AugmentConfig()).cutout_rect[2] for _ in range(2000)]
    sides = [s for s in sides if s]
    assert min(sides) >= 32 and max(sides) <= 64


class TestPixelOps:
    def test_resize_commutes_with_flip(self):
        x = np.random.default_rng(0).uniform(0, 255, (37, 53, 3)).astype(np.float32)
        np.testing.assert_array_equal(augment.resize(x[:, ::-1], 64), augment.resize(x, 64)[:, ::-1])
        np.testing.assert_array_equal(augment.resize(x[::-1], 64), augment.resize(x, 64)[::-1])

    def test_hue_matrix(self):
        np.testing.assert_allclose(augment.hue_matrix(0.0), np.eye(3), atol=1e-12)
        np.testing.assert_allclose(augment.hue_matrix(1.0), np.eye(3), atol=1e-12)
        grey = np.full(3, 100.0)
        np.testing.assert_allclose(augment.hue_matrix(0.37) @ grey, grey, atol=1e-9)

    def test_color_jitter_identity_and_brightness(self):
        x = np.random.default_rng(0).uniform(0, 200, (2, 8, 8, 3)).astype(np.float32)
        np.testing.assert_allclose(augment.color_jitter(x, [(1, 1, 1, 0)] * 2), x, atol=1e-4)
        out = augment.color_jitter(x[0], (1.2, 1, 1, 0))
        np.testing.assert_allclose(out, np.clip(x[0] * 1.2, 0, 255), atol=1e-4)

    def test_greyscale_uses_luma(self):
        px = np.array([[[255.0, 0.0, 0.0]]], np.float32)
        np.testing.assert_allclose(augment.greyscale(px), [[[76.245] * 3]], rtol=1e-5)

    def test_blur_preserves_mean_and_constants(self):
        x = np.full((1, 20, 20, 3), 77.0, np.float32)
        np.testing.assert_allclose(augment.gaussian_blur(x, 1.3), x, rtol=1e-5)
        k = augment.gaussian_kernel(0.7)
        assert len(k) == 2 * 3 + 1 and np.isclose(k.sum(), 1.0)
