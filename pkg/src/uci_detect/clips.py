"""Video clips, the on-disk corpus format and the synthetic multi-domain generator.

Corpus layout::

    <root>/manifest.jsonl
    <root>/videos/<video_id>/frame_00000.png
    <root>/videos/<video_id>/frame_00001.png
    ...

The manifest holds one JSON object per line with the keys, in this order,
``video_id, frame_dir, label, domain, split, frame_count``. ``frame_dir`` is
relative to the manifest's directory unless absolute. Labels follow the
convention used throughout the package: real = 0, fake = 1.
"""

from __future__ import annotations

import json
import logging
import os
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

logger = logging.getLogger(__name__)

MANIFEST_FIELDS = ("video_id", "frame_dir", "label", "domain", "split", "frame_count")
SPLITS = ("train", "val", "test")
LABELS = (0, 1)
MIN_FRAME_SIDE = 64
FRAME_PATTERN = "frame_{:05d}.png"


class ClipError(ValueError):
    """Raised for invalid clips, windows or frame files."""


class ManifestError(ValueError):
    """Raised for a malformed manifest; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class ClipRecord:
    video_id: str
    frame_dir: Path
    label: int
    domain: str
    split: str
    frame_count: int

    def __post_init__(self):
        if self.label not in LABELS:
            raise ManifestError(f"label must be 0 (real) or 1 (fake), got {self.label!r}")
        if self.split not in SPLITS:
            raise ManifestError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.frame_count < 0:
            raise ManifestError(f"frame_count must be non-negative, got {self.frame_count}")

    def to_json(self, root: Path | None = None) -> str:
        frame_dir = Path(self.frame_dir)
        if root is not None:
            try:
                frame_dir = frame_dir.relative_to(root)
            except ValueError:
                pass
        row = {
            "video_id": self.video_id,
            "frame_dir": frame_dir.as_posix(),
            "label": self.label,
            "domain": self.domain,
            "split": self.split,
            "frame_count": self.frame_count,
        }
        return json.dumps(row)


@dataclass
class VideoClip:
    """An ordered stack of RGB frames, shape (N, H, W, 3), dtype uint8."""

    frames: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 4 or frames.shape[-1] != 3:
            raise ClipError(f"expected frames of shape (N, H, W, 3), got {frames.shape}")
        if frames.shape[0] < 2:
            raise ClipError(f"a clip needs at least 2 frames, got {frames.shape[0]}")
        if frames.dtype != np.uint8:
            raise ClipError(f"frames must be uint8 RGB, got {frames.dtype}")
        self.frames = frames

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_size(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]


def _parse_record(row: dict, root: Path, lineno: int) -> ClipRecord:
    missing = [k for k in MANIFEST_FIELDS if k not in row]
    if missing:
        raise ManifestError(f"missing field(s) {missing}", lineno)
    label = row["label"]
    if isinstance(label, bool) or not isinstance(label, int) or label not in LABELS:
        raise ManifestError(f"unknown label {label!r}; expected 0 or 1", lineno)
    if row["split"] not in SPLITS:
        raise ManifestError(f"unknown split {row['split']!r}; expected one of {SPLITS}", lineno)
    count = row["frame_count"]
    if isinstance(count, bool) or not isinstance(count, int) or count < 0:
        raise ManifestError(f"frame_count must be a non-negative integer, got {count!r}", lineno)
    frame_dir = Path(row["frame_dir"])
    if not frame_dir.is_absolute():
        frame_dir = root / frame_dir
    return ClipRecord(
        video_id=str(row["video_id"]),
        frame_dir=frame_dir,
        label=label,
        domain=str(row["domain"]),
        split=row["split"],
        frame_count=count,
    )


def load_manifest(path: str | os.PathLike, check_files: bool = False) -> list[ClipRecord]:
    """Read a JSON-lines manifest, preserving record order.

    Args:
        path: manifest file.
        check_files: also verify that ``frame_count`` matches the frame files
            present in each ``frame_dir``.

    Raises:
        FileNotFoundError: the manifest does not exist.
        ManifestError: a line is malformed; the message names the line.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    root = path.parent
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"not valid JSON ({exc.msg})", lineno) from None
            if not isinstance(row, dict):
                raise ManifestError("expected a JSON object", lineno)
            record = _parse_record(row, root, lineno)
            if check_files:
                on_disk = len(list(Path(record.frame_dir).glob("frame_*.png")))
                if on_disk != record.frame_count:
                    raise ManifestError(
                        f"{record.video_id}: frame_count={record.frame_count} but {on_disk} files on disk",
                        lineno,
                    )
            records.append(record)
    return records


def write_manifest(records: Iterable[ClipRecord], path: str | os.PathLike) -> Path:
    path = Path(path)
    root = path.parent.resolve()
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            rec = ClipRecord(**{**asdict(rec), "frame_dir": Path(rec.frame_dir).resolve()})
            fh.write(rec.to_json(root) + "\n")
    return path


def frame_path(frame_dir: str | os.PathLike, index: int) -> Path:
    return Path(frame_dir) / FRAME_PATTERN.format(index)


def read_frame(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            if img.mode != "RGB":
                img = img.convert("RGB")
            arr = np.asarray(img, dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise ClipError(f"unreadable frame file {path}: {exc}") from exc
    if arr.shape[0] < MIN_FRAME_SIDE or arr.shape[1] < MIN_FRAME_SIDE:
        raise ClipError(f"frame {path} is {arr.shape[1]}x{arr.shape[0]}, below {MIN_FRAME_SIDE}px minimum")
    return arr


def _read_frames(frame_dir: Path, indices: Sequence[int]) -> np.ndarray:
    frames = []
    for i in indices:
        arr = read_frame(frame_path(frame_dir, i))
        if frames and arr.shape != frames[0].shape:
            raise ClipError(
                f"frame {i} in {frame_dir} has size {arr.shape[:2]}, expected {frames[0].shape[:2]}"
            )
        frames.append(arr)
    return np.stack(frames)


def load_clip(record: ClipRecord, clip_len: int, start: int = 0) -> VideoClip:
    """Load frames ``[start, start + clip_len)`` of a video in temporal order."""
    if clip_len < 2:
        raise ClipError(f"clip_len must be >= 2, got {clip_len}")
    if start < 0 or start + clip_len > record.frame_count:
        raise ClipError(
            f"window [{start}, {start + clip_len}) out of range for {record.video_id} "
            f"with {record.frame_count} frames"
        )
    frames = _read_frames(Path(record.frame_dir), range(start, start + clip_len))
    return VideoClip(frames, source_id=record.video_id)


def load_video(record: ClipRecord) -> np.ndarray:
    """All frames of a video as an (N, H, W, 3) uint8 array."""
    return _read_frames(Path(record.frame_dir), range(record.frame_count))


def load_frame_dir(frame_dir: str | os.PathLike, max_frames: int | None = None) -> VideoClip:
    """Read the consecutive ``frame_XXXXX.png`` files of a directory as a clip."""
    frame_dir = Path(frame_dir)
    if not frame_dir.is_dir():
        raise FileNotFoundError(f"clip directory not found: {frame_dir}")
    n = 0
    while frame_path(frame_dir, n).is_file() and (max_frames is None or n < max_frames):
        n += 1
    if n < 2:
        raise ClipError(f"{frame_dir} holds {n} consecutive frame files; at least 2 are needed")
    return VideoClip(_read_frames(frame_dir, range(n)), source_id=frame_dir.name)


def window_starts(frame_count: int, clip_len: int, stride: int | None = None) -> list[int]:
    """Start indices of full windows; consecutive non-overlapping by default."""
    if clip_len < 1:
        raise ClipError(f"clip_len must be positive, got {clip_len}")
    if frame_count < clip_len:
        raise ClipError(f"video has {frame_count} frames, fewer than clip_len={clip_len}")
    stride = clip_len if stride is None else stride
    return list(range(0, frame_count - clip_len + 1, stride))


def sample_clip_windows(record: ClipRecord, clip_len: int, stride: int | None = None) -> list[VideoClip]:
    """Split a video into consecutive windows of ``clip_len`` frames.

    A trailing partial window is dropped rather than padded.
    """
    starts = window_starts(record.frame_count, clip_len, stride)
    video = load_video(record)
    return [VideoClip(video[s:s + clip_len], source_id=record.video_id) for s in starts]


class VideoStore:
    """In-memory cache of decoded videos keyed by ``video_id``."""

    def __init__(self, records: Iterable[ClipRecord] = ()):
        self._records = {}
        self._videos: dict[str, np.ndarray] = {}
        for rec in records:
            self._records[rec.video_id] = rec

    @classmethod
    def from_arrays(cls, videos: dict[str, np.ndarray]) -> "VideoStore":
        store = cls()
        for vid, arr in videos.items():
            store._videos[vid] = np.asarray(arr, dtype=np.uint8)
        return store

    def add(self, record: ClipRecord) -> None:
        self._records[record.video_id] = record

    def video(self, video_id: str) -> np.ndarray:
        if video_id not in self._videos:
            if video_id not in self._records:
                raise KeyError(f"unknown video {video_id!r}")
            self._videos[video_id] = load_video(self._records[video_id])
        return self._videos[video_id]

    def clip(self, video_id: str, start: int, clip_len: int) -> VideoClip:
        video = self.video(video_id)
        if start < 0 or start + clip_len > video.shape[0]:
            raise ClipError(f"window [{start}, {start + clip_len}) out of range for {video_id}")
        return VideoClip(video[start:start + clip_len], source_id=video_id)

    def frame_count(self, video_id: str) -> int:
        if video_id in self._records:
            return self._records[video_id].frame_count
        return self.video(video_id).shape[0]


# --------------------------------------------------------------------------
# synthetic corpus
# --------------------------------------------------------------------------


@dataclass
class SyntheticConfig:
    """Generator settings. ``fake_jitter_px`` is the per-axis uniform jitter bound."""

    num_domains: int = 3
    videos_per_domain_per_label: int = 10
    frames_per_video: int = 16
    frame_size: int = 64
    motion_smoothness: float = 0.8
    fake_jitter_px: int = 2
    seed: int = 0
    patch_size: int | None = None
    max_speed: float = 2.0
    texture_noise: float = 20.0
    background_noise: float = 6.0
    split_fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)
    # Per-domain std of a global per-frame illumination gain, applied to real
    # and fake videos alike (a capture condition, not a manipulation cue).
    # Domains beyond the tuple get none.
    illumination_flicker: tuple[float, ...] = ()

    def validate(self) -> None:
        if self.num_domains < 2:
            raise ValueError(f"num_domains must be >= 2, got {self.num_domains}")
        if self.videos_per_domain_per_label < 1:
            raise ValueError("videos_per_domain_per_label must be >= 1")
        if self.frames_per_video < 2:
            raise ValueError("frames_per_video must be >= 2")
        if self.frame_size < MIN_FRAME_SIDE:
            raise ValueError(f"frame_size must be >= {MIN_FRAME_SIDE}, got {self.frame_size}")
        if not 0.0 < self.motion_smoothness <= 1.0:
            raise ValueError(f"motion_smoothness must lie in (0, 1], got {self.motion_smoothness}")
        if self.fake_jitter_px < 1:
            raise ValueError(f"fake_jitter_px must be >= 1, got {self.fake_jitter_px}")
        if self.resolved_patch_size() + 2 * self.fake_jitter_px >= self.frame_size:
            raise ValueError("patch_size plus jitter does not fit inside the frame")
        fr = self.split_fractions
        if len(fr) != 3 or any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"split_fractions must be three non-negative values summing to 1, got {fr}")
        if any(not 0.0 <= a < 0.5 for a in self.illumination_flicker):
            raise ValueError(f"illumination_flicker values must lie in [0, 0.5), got {self.illumination_flicker}")

    def resolved_patch_size(self) -> int:
        return self.patch_size if self.patch_size is not None else self.frame_size // 4

    def flicker(self, domain_index: int) -> float:
        fl = self.illumination_flicker
        return float(fl[domain_index]) if domain_index < len(fl) else 0.0

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown synthetic config key(s): {sorted(unknown)}")
        d = dict(d)
        for key in ("split_fractions", "illumination_flicker"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def domain_tag(index: int) -> str:
    tag = ""
    index += 1
    while index:
        index, rem = divmod(index - 1, 26)
        tag = chr(65 + rem) + tag
    return tag


def _hsv_to_rgb(h: float, s: float, v: float) -> np.ndarray:
    i = int(h * 6.0) % 6
    f = h * 6.0 - int(h * 6.0)
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    rgb = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]
    return np.array(rgb) * 255.0


@dataclass(frozen=True)
class DomainStyle:
    background: np.ndarray = field(repr=False)
    texture_lo: np.ndarray = field(repr=False)
    texture_hi: np.ndarray = field(repr=False)
    family: int = 0


def domain_style(index: int, num_domains: int) -> DomainStyle:
    """Spatial style of a domain: background palette plus texture family."""
    hue = (index / num_domains + 0.05) % 1.0
    bg = _hsv_to_rgb(hue, 0.45, 0.55)
    lo = _hsv_to_rgb((hue + 0.5) % 1.0, 0.7, 0.35)
    hi = _hsv_to_rgb((hue + 0.33) % 1.0, 0.3, 0.95)
    return DomainStyle(bg, lo, hi, family=index % 4)


def _texture_pattern(family: int, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    period = rng.uniform(3.0, 6.0)
    phase = rng.uniform(0, 2 * np.pi)
    if family == 0:
        pat = 0.5 + 0.5 * np.sin(2 * np.pi * yy / period + phase)
    elif family == 1:
        cell = max(1, int(round(period / 2)))
        pat = (((xx // cell) + (yy // cell)) % 2).astype(np.float64)
    elif family == 2:
        c = (size - 1) / 2.0
        r = np.hypot(xx - c, yy - c)
        pat = 0.5 + 0.5 * np.cos(2 * np.pi * r / period + phase)
    else:
        pat = 0.5 + 0.5 * np.sin(2 * np.pi * (xx + yy) / (period * 1.4) + phase)
    return pat


def smooth_trajectory(n: int, limit: float, smoothness: float, max_speed: float,
                      rng: np.random.Generator) -> np.ndarray:
    """Float (x, y) positions of a patch corner, reflected into ``[0, limit]``."""
    pos = np.empty((n, 2))
    p = rng.uniform(0, limit, size=2)
    angle = rng.uniform(0, 2 * np.pi)
    v = max_speed * np.array([np.cos(angle), np.sin(angle)])
    for t in range(n):
        pos[t] = p
        v = smoothness * v + (1.0 - smoothness) * rng.normal(0.0, max_speed, size=2)
        speed = np.hypot(*v)
        if speed > max_speed:
            v *= max_speed / speed
        p = p + v
        for k in range(2):
            if p[k] < 0:
                p[k], v[k] = -p[k], -v[k]
            elif p[k] > limit:
                p[k], v[k] = 2 * limit - p[k], -v[k]
    return np.clip(pos, 0, limit)


def render_video(domain_index: int, fake: bool, config: SyntheticConfig,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Render one synthetic video.

    Returns:
        frames: (T, S, S, 3) uint8.
        positions: (T, 2) integer top-left (x, y) of the patch as drawn.
        smooth_positions: (T, 2) integer positions of the un-jittered trajectory.
    """
    S, P, T = config.frame_size, config.resolved_patch_size(), config.frames_per_video
    J = config.fake_jitter_px
    style = domain_style(domain_index, config.num_domains)

    background = style.background + rng.normal(0.0, config.background_noise, size=(S, S, 3))
    pattern = _texture_pattern(style.family, P, rng)[..., None]
    texture = style.texture_lo + pattern * (style.texture_hi - style.texture_lo)
    fixed_noise = rng.normal(0.0, config.texture_noise, size=(P, P, 3))

    # Keep J pixels of margin so the jittered patch never needs clipping.
    lo, hi = J, S - P - J
    traj = lo + smooth_trajectory(T, hi - lo, config.motion_smoothness, config.max_speed, rng)
    smooth = np.rint(traj).astype(np.int64)
    if fake:
        jitter = rng.uniform(-J, J, size=(T, 2))
        drawn = np.rint(traj + jitter).astype(np.int64)
    else:
        drawn = smooth.copy()

    frames = np.empty((T, S, S, 3), dtype=np.uint8)
    raw = np.empty((T, S, S, 3))
    for t in range(T):
        noise = rng.normal(0.0, config.texture_noise, size=(P, P, 3)) if fake else fixed_noise
        raw[t] = background
        x, y = drawn[t]
        raw[t, y:y + P, x:x + P] = texture + noise
    amp = config.flicker(domain_index)
    if amp > 0:
        gain = np.clip(1.0 + amp * rng.normal(size=T), 0.5, 1.5)
        raw *= gain[:, None, None, None]
    frames[:] = np.clip(np.rint(raw), 0, 255).astype(np.uint8)
    return frames, drawn, smooth


def _video_rng(seed: int, domain_index: int, label: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, domain_index, label, index]))


def _split_for(index: int, n: int, fractions: Sequence[float]) -> str:
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    if index < n_train:
        return "train"
    if index < n_train + n_val:
        return "val"
    return "test"


def write_frames(frames: np.ndarray, frame_dir: Path) -> None:
    frame_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        Image.fromarray(frame, mode="RGB").save(frame_path(frame_dir, i), format="PNG", compress_level=6)


def generate_synthetic_dataset(config: SyntheticConfig, out_dir: str | os.PathLike) -> Path:
    """Write a synthetic multi-domain corpus and return its manifest path.

    Real and fake videos share construction; fakes get per-frame position
    jitter and per-frame texture re-noising, so single frames are
    statistically alike and only inter-frame consistency separates them.
    """
    config.validate()
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.touch()
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out_dir} is not writable: {exc}") from exc

    records = []
    n = config.videos_per_domain_per_label
    for d in range(config.num_domains):
        tag = domain_tag(d)
        for label in LABELS:
            name = "fake" if label else "real"
            for i in range(n):
                vid = f"{tag}_{name}_{i:04d}"
                frames, drawn, smooth = render_video(d, bool(label), config, _video_rng(config.seed, d, label, i))
                vdir = out_dir / "videos" / vid
                write_frames(frames, vdir)
                meta = {"positions": drawn.tolist(), "smooth_positions": smooth.tolist(),
                        "patch_size": config.resolved_patch_size()}
                (vdir / "trajectory.json").write_text(json.dumps(meta))
                records.append(ClipRecord(vid, vdir, label, tag, _split_for(i, n, config.split_fractions),
                                          config.frames_per_video))
    manifest = write_manifest(records, out_dir / "manifest.jsonl")
    logger.info("wrote %d videos to %s", len(records), out_dir)
    return manifest


def stable_hash(*parts) -> int:
    """Process-independent 32-bit hash for seeding (``hash()`` is salted per process)."""
    return zlib.crc32("\x1f".join(str(p) for p in parts).encode("utf-8"))
