"""Temporal-preserved clip augmentation.

Transforms come in two groups. Clip-level transforms (crop, Gaussian blur,
horizontal flip, vertical flip) are drawn once per clip and applied
identically to every frame at source resolution, so motion between frames
is untouched. Frame-level transforms (colour jitter, greyscale, cutout) are
drawn independently for every frame after the resize; they perturb spatial
texture without moving anything.

Three modes are supported:

* ``"temporal"``: the scheme above.
* ``"non_temporal"``: every transform, clip-level ones included, is drawn
  per frame. This breaks inter-frame consistency and exists for ablations.
* ``"none"``: resize only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Sequence

import numpy as np
from scipy.ndimage import convolve1d

from .clips import ClipError, VideoClip

MODES = ("temporal", "non_temporal", "none")
LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)
DTYPE = np.float32


@dataclass(frozen=True)
class AugmentConfig:
    p_crop: float = 0.20
    p_blur: float = 0.10
    p_flip: float = 0.50
    p_vflip: float = 0.50
    p_colorjitter: float = 0.70
    p_greyscale: float = 0.70
    p_cutout: float = 0.70
    size_ratio_range: tuple[float, float] = (0.8, 1.0)
    aspect_range: tuple[float, float] = (0.75, 1.3)
    cutout_side_range: tuple[int, int] = (32, 64)
    output_size: int = 224
    brightness_range: tuple[float, float] = (0.6, 1.4)
    contrast_range: tuple[float, float] = (0.6, 1.4)
    saturation_range: tuple[float, float] = (0.6, 1.4)
    hue_range: tuple[float, float] = (-0.1, 0.1)
    blur_sigma_range: tuple[float, float] = (0.1, 2.0)
    cutout_fill: tuple[float, float, float] = (124.0, 116.0, 104.0)
    mode: str = "temporal"
    # False reproduces the reading where frame-level flags are drawn once per clip.
    per_frame_flags: bool = True

    def __post_init__(self):
        for f in ("p_crop", "p_blur", "p_flip", "p_vflip", "p_colorjitter", "p_greyscale", "p_cutout"):
            p = getattr(self, f)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{f} must lie in [0, 1], got {p}")
        for f in ("size_ratio_range", "aspect_range", "cutout_side_range", "brightness_range",
                  "contrast_range", "saturation_range", "hue_range", "blur_sigma_range"):
            lo, hi = getattr(self, f)
            if lo > hi:
                raise ValueError(f"{f} is empty: {lo} > {hi}")
        if not 0.0 < self.size_ratio_range[0] <= self.size_ratio_range[1] <= 1.0:
            raise ValueError(f"size_ratio_range must lie in (0, 1], got {self.size_ratio_range}")
        if self.aspect_range[0] <= 0:
            raise ValueError("aspect_range must be positive")
        if self.cutout_side_range[0] < 1:
            raise ValueError("cutout sides must be >= 1 pixel")
        if self.output_size <= self.cutout_side_range[1]:
            raise ValueError(
                f"output_size ({self.output_size}) must exceed the largest cutout side "
                f"({self.cutout_side_range[1]})"
            )
        if self.blur_sigma_range[0] <= 0:
            raise ValueError("blur sigma must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown augment config key(s): {sorted(unknown)}")
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d)

    @classmethod
    def for_canvas(cls, output_size: int, **kw) -> "AugmentConfig":
        """Defaults with the cutout range rescaled from the 224 canvas to ``output_size``."""
        lo, hi = cls.cutout_side_range
        scale = output_size / 224.0
        side = (max(1, int(round(lo * scale))), max(1, int(round(hi * scale))))
        return cls(output_size=output_size, cutout_side_range=side, **kw)

    def only(self, *names: str) -> "AugmentConfig":
        """Copy with the named flags forced on and every other flag forced off."""
        flags = ("crop", "blur", "flip", "vflip", "colorjitter", "greyscale", "cutout")
        bad = set(names) - set(flags)
        if bad:
            raise ValueError(f"unknown transform(s): {sorted(bad)}")
        return replace(self, **{f"p_{f}": 1.0 if f in names else 0.0 for f in flags})


@dataclass(frozen=True)
class ClipLevelParams:
    crop_on: bool = False
    crop_rect: tuple[int, int, int, int] = (0, 0, 0, 0)  # x, y, w, h in source pixels
    blur_on: bool = False
    blur_sigma: float = 0.0
    flip_on: bool = False
    vflip_on: bool = False


@dataclass(frozen=True)
class FrameLevelParams:
    jitter_on: bool = False
    jitter_factors: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 0.0)
    greyscale_on: bool = False
    cutout_on: bool = False
    cutout_rect: tuple[int, int, int] = (0, 0, 0)  # x, y, side on the output canvas


@dataclass
class AugmentTrace:
    """Parameters actually used for each frame of one ``apply`` call."""

    clip: list[ClipLevelParams] = field(default_factory=list)
    frame: list[FrameLevelParams] = field(default_factory=list)


def _legal_crop(w, h, W, H, config) -> bool:
    area = (w * h) / float(W * H)
    aspect = w / float(h)
    s_lo, s_hi = config.size_ratio_range
    a_lo, a_hi = config.aspect_range
    return 0 < w <= W and 0 < h <= H and s_lo <= area <= s_hi and a_lo <= aspect <= a_hi


def _sample_crop(rng: np.random.Generator, config: AugmentConfig, H: int, W: int) -> tuple[int, int, int, int]:
    for _ in range(100):
        s = rng.uniform(*config.size_ratio_range)
        a = rng.uniform(*config.aspect_range)
        w = int(round(math.sqrt(s * a * H * W)))
        h = int(round(math.sqrt(s * H * W / a)))
        if _legal_crop(w, h, W, H, config):
            x = int(rng.integers(0, W - w + 1))
            y = int(rng.integers(0, H - h + 1))
            return x, y, w, h
    # Near-degenerate frames: fall back to the largest legal centred square-ish crop.
    for w in range(W, 0, -1):
        for h in range(H, 0, -1):
            if _legal_crop(w, h, W, H, config):
                return (W - w) // 2, (H - h) // 2, w, h
    raise ClipError(f"frame {W}x{H} admits no crop within the configured size/aspect ranges")


def draw_clip_params(rng: np.random.Generator, config: AugmentConfig,
                     frame_size: tuple[int, int]) -> ClipLevelParams:
    """Draw crop/blur/flip decisions shared by all frames of a clip.

    The flag draws always consume the stream in the same order, whether or
    not a flag comes up, so parameters stay aligned across configurations.
    """
    H, W = frame_size
    crop_on = bool(rng.random() < config.p_crop)
    crop_rect = _sample_crop(rng, config, H, W)
    blur_on = bool(rng.random() < config.p_blur)
    blur_sigma = float(rng.uniform(*config.blur_sigma_range))
    flip_on = bool(rng.random() < config.p_flip)
    vflip_on = bool(rng.random() < config.p_vflip)
    return ClipLevelParams(
        crop_on=crop_on,
        crop_rect=crop_rect if crop_on else (0, 0, W, H),
        blur_on=blur_on,
        blur_sigma=blur_sigma if blur_on else 0.0,
        flip_on=flip_on,
        vflip_on=vflip_on,
    )


def draw_frame_params(rng: np.random.Generator, config: AugmentConfig) -> FrameLevelParams:
    """Draw colour-jitter/greyscale/cutout settings for one frame."""
    jitter_on = bool(rng.random() < config.p_colorjitter)
    factors = (
        float(rng.uniform(*config.brightness_range)),
        float(rng.uniform(*config.contrast_range)),
        float(rng.uniform(*config.saturation_range)),
        float(rng.uniform(*config.hue_range)),
    )
    greyscale_on = bool(rng.random() < config.p_greyscale)
    cutout_on = bool(rng.random() < config.p_cutout)
    lo, hi = config.cutout_side_range
    side = int(rng.integers(lo, hi + 1))
    cx = int(rng.integers(0, config.output_size - side + 1))
    cy = int(rng.integers(0, config.output_size - side + 1))
    return FrameLevelParams(
        jitter_on=jitter_on,
        jitter_factors=factors if jitter_on else (1.0, 1.0, 1.0, 0.0),
        greyscale_on=greyscale_on,
        cutout_on=cutout_on,
        cutout_rect=(cx, cy, side) if cutout_on else (0, 0, 0),
    )


# --------------------------------------------------------------------------
# pixel operations; frames are float32 arrays of shape (..., H, W, 3)
# --------------------------------------------------------------------------


def _linear_taps(src: int, dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Bilinear taps with half-pixel centres, built mirror-symmetric.

    Taps for output ``dst-1-k`` are the reflection of those for ``k``. Each
    output is a two-term sum, so resizing commutes exactly with flips.
    """
    half = (dst + 1) // 2
    k = np.arange(half)
    coord = (k + 0.5) * (src / dst) - 0.5
    coord = np.clip(coord, 0.0, src - 1.0)
    i0 = np.floor(coord).astype(np.int64)
    i1 = np.minimum(i0 + 1, src - 1)
    w1 = coord - i0
    w0 = 1.0 - w1
    r = np.arange(dst - half)[::-1]
    i0 = np.concatenate([i0, src - 1 - i0[r]])
    i1m = np.concatenate([i1, src - 1 - i1[r]])
    w0 = np.concatenate([w0, w0[r]])
    w1 = np.concatenate([w1, w1[r]])
    return i0, i1m, w0, w1


def resize(frames: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resize of float (..., H, W, C) to (..., size, size, C), keeping the dtype."""
    H, W = frames.shape[-3], frames.shape[-2]
    if (H, W) == (size, size):
        return frames.copy()
    dt = frames.dtype
    i0, i1, w0, w1 = _linear_taps(W, size)
    out = frames[..., :, i0, :] * w0[:, None].astype(dt) + frames[..., :, i1, :] * w1[:, None].astype(dt)
    i0, i1, w0, w1 = _linear_taps(H, size)
    return out[..., i0, :, :] * w0[:, None, None].astype(dt) + out[..., i1, :, :] * w1[:, None, None].astype(dt)


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(frames: np.ndarray, sigma: float) -> np.ndarray:
    k = gaussian_kernel(sigma).astype(frames.dtype)
    out = convolve1d(frames, k, axis=-3, mode="reflect")
    return convolve1d(out, k, axis=-2, mode="reflect")


def apply_clip_level(frames: np.ndarray, params: ClipLevelParams) -> np.ndarray:
    """Crop, blur and flip (…, H, W, 3) frames with one parameter set."""
    out = frames
    if params.crop_on:
        x, y, w, h = params.crop_rect
        out = out[..., y:y + h, x:x + w, :]
    if params.blur_on:
        out = gaussian_blur(out, params.blur_sigma)
    if params.flip_on:
        out = out[..., :, ::-1, :]
    if params.vflip_on:
        out = out[..., ::-1, :, :]
    return out


def greyscale(frame: np.ndarray) -> np.ndarray:
    y = frame @ LUMA
    return np.repeat(y[..., None], 3, axis=-1)


_RGB2YIQ = np.array([[0.299, 0.587, 0.114], [0.596, -0.274, -0.322], [0.211, -0.523, 0.312]])
_YIQ2RGB = np.linalg.inv(_RGB2YIQ)


def hue_matrix(shift: float) -> np.ndarray:
    """3x3 RGB map rotating chroma by ``shift`` turns of the hue circle (YIQ rotation)."""
    c, s = np.cos(2 * np.pi * shift), np.sin(2 * np.pi * shift)
    rot = np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    return _YIQ2RGB @ rot @ _RGB2YIQ


def _per_frame(values, n: int) -> np.ndarray:
    return np.asarray(values, dtype=DTYPE).reshape(n, 1, 1, 1)


def color_jitter(frames: np.ndarray, factors) -> np.ndarray:
    """Brightness, contrast, saturation, hue, in that order; values in [0, 255].

    ``frames`` is (H, W, 3) with one factor 4-tuple, or (N, H, W, 3) with an
    (N, 4) array of per-frame factors.
    """
    single = frames.ndim == 3
    if single:
        frames = frames[None]
        factors = [factors]
    n = frames.shape[0]
    factors = np.asarray(factors, dtype=DTYPE).reshape(n, 4)
    b, c, s = (_per_frame(factors[:, i], n) for i in range(3))
    out = np.clip(frames * b, 0, 255)
    mean = (out @ LUMA).mean(axis=(1, 2)).reshape(n, 1, 1, 1)
    out = np.clip((out - mean) * c + mean, 0, 255)
    grey = (out @ LUMA)[..., None]
    out = np.clip((out - grey) * s + grey, 0, 255)
    if np.any(factors[:, 3] != 0.0):
        mats = np.stack([hue_matrix(h) for h in factors[:, 3]]).astype(DTYPE)
        out = np.clip(np.einsum("nhwc,ndc->nhwd", out, mats), 0, 255)
    return out[0] if single else out


def apply_frame_level(frames: np.ndarray, params, fill: Sequence[float]) -> np.ndarray:
    """Apply per-frame colour jitter, greyscale and cutout.

    Takes one (H, W, 3) frame with a ``FrameLevelParams``, or an
    (N, H, W, 3) stack with a list of N of them.
    """
    single = frames.ndim == 3
    if single:
        frames, params = frames[None], [params]
    out = frames.astype(DTYPE, copy=True)
    jit = np.array([p.jitter_on for p in params])
    if jit.any():
        out[jit] = color_jitter(out[jit], [p.jitter_factors for p in params if p.jitter_on])
    grey = np.array([p.greyscale_on for p in params])
    if grey.any():
        out[grey] = greyscale(out[grey])
    fill = np.asarray(fill, dtype=DTYPE)
    for i, p in enumerate(params):
        if p.cutout_on:
            x, y, side = p.cutout_rect
            out[i, y:y + side, x:x + side] = fill
    return out[0] if single else out


def _to_uint8(frames: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(frames), 0, 255).astype(np.uint8)


def apply(clip: VideoClip | np.ndarray, rng: np.random.Generator, config: AugmentConfig = AugmentConfig(),
          return_trace: bool = False):
    """Augment a clip, returning an (N, S, S, 3) uint8 array with S = ``output_size``.

    Args:
        clip: a ``VideoClip`` or an (N, H, W, 3) uint8 array.
        rng: numpy Generator; the output is a pure function of its state,
            the clip and the config.
        config: probabilities, ranges and mode.
        return_trace: also return the ``AugmentTrace`` of parameters used.
    """
    frames = clip.frames if isinstance(clip, VideoClip) else np.asarray(clip)
    if frames.ndim != 4 or frames.shape[-1] != 3:
        raise ClipError(f"expected (N, H, W, 3) frames, got {frames.shape}")
    N, H, W, _ = frames.shape
    S = config.output_size
    src = frames.astype(DTYPE)
    trace = AugmentTrace()

    if config.mode == "none":
        out = _to_uint8(resize(src, S))
        return (out, trace) if return_trace else out

    if config.mode == "temporal":
        cp = draw_clip_params(rng, config, (H, W))
        trace.clip = [cp] * N
        resized = resize(apply_clip_level(src, cp), S)
    else:
        resized = np.empty((N, S, S, 3), dtype=DTYPE)
        for i in range(N):
            cp = draw_clip_params(rng, config, (H, W))
            trace.clip.append(cp)
            resized[i] = resize(apply_clip_level(src[i], cp), S)

    if config.per_frame_flags:
        trace.frame = [draw_frame_params(rng, config) for _ in range(N)]
    else:
        trace.frame = [draw_frame_params(rng, config)] * N
    out = _to_uint8(apply_frame_level(resized, trace.frame, config.cutout_fill))
    return (out, trace) if return_trace else out


def resize_clip(clip: VideoClip | np.ndarray, size: int) -> np.ndarray:
    """Per-frame resize only, as uint8; the evaluation-time transform."""
    frames = clip.frames if isinstance(clip, VideoClip) else np.asarray(clip)
    return _to_uint8(resize(frames.astype(DTYPE), size))
