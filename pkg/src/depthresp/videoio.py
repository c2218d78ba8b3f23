"""Depth videos on disk.

A video is a directory holding ``meta.json`` and one raw file per frame,
``fNNNN.depth``: little-endian float32, row-major, no header.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .errors import IngestionError
from .scene import DepthVideo

SCHEMA_VERSION = 1


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def provenance(command: str, config: dict, seed: int | None) -> dict:
    return {
        "command": command,
        "config_sha256": config_hash(config),
        "seed": seed,
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
    }


def frame_name(t: int) -> str:
    return f"f{t:04d}.depth"


def write_video(directory: str | Path, video: DepthVideo, meta: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for old in directory.glob("f*.depth"):
        old.unlink()
    h, w = video.shape
    record = {
        "width": w,
        "height": h,
        "frame_rate_hz": video.frame_rate_hz,
        "frame_count": len(video),
        "sentinel_depth_m": video.background_m,
        "dtype": "<f4",
    }
    record.update(video.meta)
    if meta:
        record.update(meta)
    for t in range(len(video)):
        video.frames[t].astype("<f4", copy=False).tofile(directory / frame_name(t))
    (directory / "meta.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return directory


def read_meta(directory: str | Path) -> dict:
    path = Path(directory) / "meta.json"
    if not path.is_file():
        raise IngestionError(f"not a depth-video directory (no meta.json): {directory}")
    return json.loads(path.read_text(encoding="utf-8"))


def read_video(directory: str | Path) -> DepthVideo:
    directory = Path(directory)
    meta = read_meta(directory)
    h, w, n = int(meta["height"]), int(meta["width"]), int(meta["frame_count"])
    frames = np.empty((n, h, w), dtype=np.float32)
    for t in range(n):
        path = directory / frame_name(t)
        if not path.is_file():
            raise IngestionError(f"missing frame file {path}")
        raw = np.fromfile(path, dtype="<f4")
        if raw.size != h * w:
            raise IngestionError(f"{path}: expected {h * w} floats, found {raw.size}")
        frames[t] = raw.reshape(h, w)
    keep = {k: v for k, v in meta.items()
            if k not in ("width", "height", "frame_rate_hz", "frame_count", "sentinel_depth_m", "dtype")}
    return DepthVideo(frames, float(meta["frame_rate_hz"]), float(meta["sentinel_depth_m"]), keep)
