"""Checkpoint container.

A checkpoint is a ZIP archive of ``.npy`` members (the NumPy ``.npz``
layout, readable by ``numpy.load``). Every ``.npy`` member carries its own
dtype/shape header, so any language with a ZIP reader and a 10-line NPY
parser can load it. Members:

* ``__meta__.npy``: uint8 bytes of a UTF-8 JSON object with ``format``,
  ``version``, ``kind`` and a ``config`` echo, plus trainer counters.
* ``model/<parameter name>.npy``: float arrays, one per model tensor.
* ``optim/<parameter name>/exp_avg.npy``, ``.../exp_avg_sq.npy``,
  ``.../step.npy``: Adam moments, when present.

Members are written in sorted order with a fixed timestamp, so identical
state gives byte-identical files.
"""

from __future__ import annotations

import io
import json
import os
import zipfile
from pathlib import Path

import numpy as np

FORMAT = "uci-detect-checkpoint"
VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def save(path: str | os.PathLike, arrays: dict[str, np.ndarray], meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"format": FORMAT, "version": VERSION, **meta}
    members = dict(arrays)
    members["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(members):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(members[name]), allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=_EPOCH)
            info.external_attr = 0o644 << 16
            zf.writestr(info, buf.getvalue())
    os.replace(tmp, path)
    return path


def load(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    arrays = {}
    with np.load(path, allow_pickle=False) as npz:
        for name in npz.files:
            arrays[name] = npz[name]
    if "__meta__" not in arrays:
        raise ValueError(f"{path} is not a checkpoint (no __meta__ member)")
    meta = json.loads(arrays.pop("__meta__").tobytes().decode("utf-8"))
    if meta.get("format") != FORMAT:
        raise ValueError(f"{path}: unexpected checkpoint format {meta.get('format')!r}")
    if meta.get("version", 0) > VERSION:
        raise ValueError(f"{path}: checkpoint version {meta['version']} is newer than supported {VERSION}")
    return arrays, meta
