"""Recover augmentation parameters from output pixels, for the coherence tests."""

import numpy as np
from scipy.optimize import minimize_scalar

from uci_detect import augment
from uci_detect.clips import SyntheticConfig, render_video


def coordinate_clip(n=16, size=96, seed=0):
    """R and G encode 2x and 2y; B is fresh texture every frame."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size]
    frames = np.empty((n, size, size, 3), np.uint8)
    frames[..., 0] = 2 * xx
    frames[..., 1] = 2 * yy
    frames[..., 2] = rng.integers(0, 256, size=(n, size, size))
    return frames


def noise_clip(n=16, size=96, seed=0):
    """Independent black/white pixels; high contrast keeps the blur width identifiable after rounding."""
    rng = np.random.default_rng(seed)
    return (rng.integers(0, 2, size=(n, size, size, 3)) * 255).astype(np.uint8)


def recover_crop(out_frame, S):
    """(x, y, w, h) from the linear R/G ramps of a cropped, resized coordinate frame."""
    j = np.arange(S // 4, S - S // 4)
    r = out_frame[:, j, 0].astype(float).mean(0)
    g = out_frame[j, :, 1].astype(float).mean(1)
    params = []
    for prof in (r, g):
        slope, icpt = np.polyfit(j, prof, 1)
        w = int(round(slope * S / 2))
        x = int(round(icpt / 2 - 0.5 * w / S + 0.5))
        params.append((x, w))
    (x, w), (y, h) = params
    return x, y, w, h


def recover_flip(src_frame, out_frame, S, axis):
    """True when the output matches the mirrored source, False when it matches the source."""
    base = augment._to_uint8(augment.resize(src_frame.astype(np.float32), S))
    mirrored = base[:, ::-1] if axis == 1 else base[::-1]
    if np.array_equal(out_frame, mirrored):
        return True
    if np.array_equal(out_frame, base):
        return False
    raise AssertionError("output matches neither orientation")


def recover_sigma(src_frame, out_frame, S, resolution=0.01):
    """Blur sigma by least squares over the blurred-and-resized source, snapped to ``resolution``."""
    src = src_frame.astype(np.float32)
    target = out_frame.astype(np.float64)

    def err(sigma):
        pred = augment.resize(augment.gaussian_blur(src, sigma), S).astype(np.float64)
        return float(((pred - target) ** 2).mean())

    res = minimize_scalar(err, bounds=(0.05, 2.5), method="bounded", options={"xatol": 1e-4})
    return round(res.x / resolution) * resolution


def patch_clip(n=16, size=64, seed=0):
    """Synthetic patch clip on a black background plus its integer patch positions."""
    cfg = SyntheticConfig(frames_per_video=n, frame_size=size, background_noise=0.0, texture_noise=0.0)
    frames, drawn, _ = render_video(0, False, cfg, np.random.default_rng(seed))
    P = cfg.resolved_patch_size()
    clean = np.zeros_like(frames)
    for t, (x, y) in enumerate(drawn):
        clean[t, y:y + P, x:x + P] = np.maximum(frames[t, y:y + P, x:x + P], 96)
    return clean, drawn, P


def cutout_mask(shape, params):
    mask = np.zeros(shape[:2], bool)
    if params.cutout_on:
        x, y, s = params.cutout_rect
        mask[y:y + s, x:x + s] = True
    return mask


def patch_mask(frame):
    """Pixels that differ from the (uniform) background colour, taken at the top-left corner."""
    return np.any(frame != frame[0, 0], axis=-1)


def displacement(m0, m1, valid, max_shift=6):
    """Integer (dx, dy) aligning mask ``m0`` onto ``m1`` on ``valid`` pixels; exact match required."""
    best = None
    for dy in range(-max_shift, max_shift + 1):
        for dx in range(-max_shift, max_shift + 1):
            shifted = np.roll(np.roll(m0, dy, axis=0), dx, axis=1)
            v = valid & np.roll(np.roll(valid, dy, axis=0), dx, axis=1)
            if np.array_equal(shifted[v], m1[v]) and m1[v].any():
                if best is not None:
                    raise AssertionError(f"ambiguous displacement {best} vs {(dx, dy)}")
                best = (dx, dy)
    if best is None:
        raise AssertionError("no consistent displacement")
    return best
