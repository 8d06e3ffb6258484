"""Command-line entry point: ``uci-detect {synth,train,eval,augment-preview,selfcheck}``.

Every command takes ``--config``, a JSON file whose keys match the long
flag names (dashes become underscores); flags given on the command line
override it. Relative paths resolve against ``--workspace`` (default: the
current directory). ``UCI_DETECT_SEED`` overrides the seed of every
command that has one.

Exit codes: 0 success, 2 config/usage error, 3 I/O error, 4 non-finite loss.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from PIL import Image

from . import augment, selfcheck
from .clips import ClipError, ManifestError, SyntheticConfig, generate_synthetic_dataset, load_frame_dir
from .evaluate import cross_domain_report
from .trainer import ConfigError, NonFiniteLossError, load_config, train, write_oracle_checkpoint

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
SEED_ENV = "UCI_DETECT_SEED"

logger = logging.getLogger("uci_detect")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _resolve(path, workspace: Path) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    return p if p.is_absolute() else workspace / p


def _read_json(path: Path) -> dict:
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return data


def _merged(args, keys: tuple[str, ...], workspace: Path) -> dict:
    """Config-file values overridden by explicitly given flags, restricted to ``keys``."""
    data = {}
    if getattr(args, "config", None):
        data = _read_json(_resolve(args.config, workspace))
        unknown = set(data) - set(keys)
        if unknown:
            raise ConfigError(f"unknown config key(s) for {args.command}: {sorted(unknown)}")
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            data[k] = v
    return data


def _env_seed() -> int | None:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

SYNTH_KEYS = ("out", "num_domains", "videos_per_domain_per_label", "frames_per_video", "frame_size",
              "motion_smoothness", "fake_jitter_px", "seed", "patch_size", "max_speed", "texture_noise",
              "background_noise", "split_fractions")


def cmd_synth(args, ws: Path) -> int:
    data = _merged(args, SYNTH_KEYS, ws)
    out = data.pop("out", None)
    if out is None:
        raise ConfigError("synth needs --out (or 'out' in the config file)")
    if (seed := _env_seed()) is not None:
        data["seed"] = seed
    try:
        cfg = SyntheticConfig.from_dict(data)
        cfg.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    print(generate_synthetic_dataset(cfg, _resolve(out, ws)))
    return EXIT_OK


TRAIN_FLAGS = ("manifest", "out_dir", "epochs", "batch_size", "learning_rate", "seed", "augment_mode",
               "contrastive", "hold_out_domain", "clip_len", "frame_size")


def cmd_train(args, ws: Path) -> int:
    source = args.config if args.config is not None else "desk"
    if args.config is not None and (Path(args.config).suffix == ".json" or _resolve(args.config, ws).exists()):
        source = _resolve(args.config, ws)
    overrides = {k: getattr(args, k) for k in TRAIN_FLAGS}
    if (seed := _env_seed()) is not None:
        overrides["seed"] = seed
    cfg = load_config(source, **overrides)
    if cfg.manifest is None:
        raise ConfigError("train needs a manifest (--manifest or 'manifest' in the config)")
    manifest = _resolve(cfg.manifest, ws)
    if not manifest.is_file():
        raise FileNotFoundError(f"manifest not found: {manifest}")
    cfg = replace(cfg, manifest=str(manifest), out_dir=str(_resolve(cfg.out_dir, ws)))
    result = train(cfg, resume=_resolve(args.resume, ws))
    print(f"checkpoint: {result.checkpoint}")
    print(f"metrics: {result.metrics}")
    print(f"epochs: {result.epoch_log}")
    return EXIT_OK


EVAL_KEYS = ("ckpt", "manifest", "hold_out", "split", "out")


def cmd_eval(args, ws: Path) -> int:
    data = _merged(args, EVAL_KEYS, ws)
    for k in ("ckpt", "manifest", "hold_out"):
        if data.get(k) is None:
            raise ConfigError(f"eval needs --{k.replace('_', '-')}")
    ckpt = _resolve(data["ckpt"], ws)
    if not ckpt.is_file():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    out = _resolve(data.get("out") or ckpt.parent, ws)
    try:
        rows = cross_domain_report(ckpt, _resolve(data["manifest"], ws), data["hold_out"],
                                   split=data.get("split") or "test", out_dir=out)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from exc
    for r in rows:
        print(f"domain={r.domain} n_videos={r.n_videos} auc={r.auc!r} acc={r.acc!r}")
    stem = f"report_{data['hold_out']}"
    print(f"report: {out / (stem + '.csv')} {out / (stem + '.json')}")
    return EXIT_OK


PREVIEW_KEYS = ("clip", "seed", "out", "mode", "force", "size", "max_frames")


def cmd_augment_preview(args, ws: Path) -> int:
    data = _merged(args, PREVIEW_KEYS, ws)
    if data.get("clip") is None or data.get("out") is None:
        raise ConfigError("augment-preview needs --clip and --out")
    seed = _env_seed()
    seed = data.get("seed", 0) if seed is None else seed
    clip = load_frame_dir(_resolve(data["clip"], ws), data.get("max_frames"))
    size = int(data.get("size") or clip.frames.shape[1])
    try:
        cfg = augment.AugmentConfig.for_canvas(size, mode=data.get("mode") or "temporal")
        force = data.get("force")
        if force:
            names = force.split(",") if isinstance(force, str) else list(force)
            cfg = cfg.only(*[n.strip() for n in names])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = augment.apply(clip, np.random.default_rng(seed), cfg)
    original = augment.resize_clip(clip, size)
    strip = np.concatenate([np.concatenate(list(original), axis=1), np.concatenate(list(out), axis=1)], axis=0)
    out_dir = _resolve(data["out"], ws)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"preview_{clip.source_id}_seed{seed}.png"
    Image.fromarray(strip, mode="RGB").save(path, format="PNG")
    print(path)
    return EXIT_OK


def cmd_selfcheck(args, ws: Path) -> int:
    results = selfcheck.run_all()
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_NUMERIC


def cmd_oracle(args, ws: Path) -> int:
    print(write_oracle_checkpoint(_resolve(args.out, ws)))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="uci-detect", description="Deepfake video detection with temporal-preserved augmentation.")
    p.add_argument("--workspace", default=None, help="root for relative paths (default: current directory)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic multi-domain corpus")
    s.add_argument("--config")
    s.add_argument("--out")
    for k in SYNTH_KEYS[1:]:
        kind = {"motion_smoothness": float, "max_speed": float, "texture_noise": float,
                "background_noise": float}.get(k, int)
        if k == "split_fractions":
            s.add_argument("--split-fractions", type=float, nargs=3, dest=k)
        else:
            s.add_argument("--" + k.replace("_", "-"), type=kind, dest=k)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a detector")
    t.add_argument("--config", help="JSON config file or bundled profile name (default: desk)")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--manifest")
    t.add_argument("--out-dir", dest="out_dir")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int, dest="batch_size")
    t.add_argument("--learning-rate", type=float, dest="learning_rate")
    t.add_argument("--seed", type=int)
    t.add_argument("--augment-mode", choices=augment.MODES, dest="augment_mode")
    t.add_argument("--contrastive", type=_bool)
    t.add_argument("--hold-out-domain", dest="hold_out_domain")
    t.add_argument("--clip-len", type=int, dest="clip_len")
    t.add_argument("--frame-size", type=int, dest="frame_size")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="cross-domain AUC/ACC report for one held-out domain")
    e.add_argument("--config")
    e.add_argument("--ckpt")
    e.add_argument("--manifest")
    e.add_argument("--hold-out", dest="hold_out")
    e.add_argument("--split", choices=("train", "val", "test"))
    e.add_argument("--out", help="report directory (default: next to the checkpoint)")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("augment-preview", help="write original/augmented frame strips for one clip")
    a.add_argument("--config")
    a.add_argument("--clip", help="directory of frame_XXXXX.png files")
    a.add_argument("--seed", type=int)
    a.add_argument("--out")
    a.add_argument("--mode", choices=augment.MODES)
    a.add_argument("--force", help="comma-separated transforms forced on (all others off), e.g. flip,cutout")
    a.add_argument("--size", type=int, help="output canvas side (default: source frame height)")
    a.add_argument("--max-frames", type=int, dest="max_frames")
    a.set_defaults(func=cmd_augment_preview)

    c = sub.add_parser("selfcheck", help="gradient, closed-form and AUC checks")
    c.set_defaults(func=cmd_selfcheck)

    o = sub.add_parser("oracle-checkpoint", help="write a label-oracle checkpoint for pipeline validation")
    o.add_argument("--out", required=True)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"uci-detect: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s")
    ws = Path(args.workspace) if args.workspace else Path.cwd()
    try:
        return args.func(args, ws)
    except NonFiniteLossError as exc:
        print(f"uci-detect: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, ManifestError, ClipError, OSError) as exc:
        print(f"uci-detect: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"uci-detect: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
