"""Checkpoint archive: one .npz mapping parameter paths to arrays.

The archive is a standard zip of little-endian .npy members (shape and dtype
live in each member's header), plus one JSON member ``__manifest__`` holding
the full run config, its hash, the class table, and training bookkeeping.
Anything that can read zip + npy can interoperate; docs/formats.md shows the
layout byte by byte.
"""

from __future__ import annotations

import json
import zipfile
import zlib
from pathlib import Path

import numpy as np

from ..data import CLASS_TABLE, ClassTable
from ..errors import DataError
from ..model import VideoSegmenter
from .config import RunConfig, config_from_dict, config_hash

MANIFEST_KEY = "__manifest__"


def build_manifest(cfg: RunConfig, extra: dict | None = None) -> dict:
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg),
        "classes": CLASS_TABLE.to_json(),
        "seed": cfg.seed,
    }
    if extra:
        manifest.update(extra)
    return manifest


def save_checkpoint(path: str | Path, model: VideoSegmenter, manifest: dict) -> Path:
    path = Path(path)
    if path.suffix != ".npz":
        path = Path(str(path) + ".npz")
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {name: p.data.astype("<f4") for name, p in model.named_parameters()}
    blob = json.dumps(manifest, sort_keys=True)
    arrays[MANIFEST_KEY] = np.frombuffer(blob.encode("utf-8"), dtype=np.uint8)
    np.savez(path, **arrays)
    return path


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: checkpoint not found")
    try:
        with np.load(path, allow_pickle=False) as archive:
            names = set(archive.files)
            if MANIFEST_KEY not in names:
                raise DataError(f"{path}: missing {MANIFEST_KEY} member")
            manifest = json.loads(bytes(archive[MANIFEST_KEY]).decode("utf-8"))
            state = {n: archive[n] for n in names if n != MANIFEST_KEY}
    except (OSError, ValueError, zlib.error, zipfile.BadZipFile, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: unreadable checkpoint ({exc})") from exc
    return state, manifest


def restore_model(path: str | Path) -> tuple[VideoSegmenter, dict]:
    state, manifest = load_checkpoint(path)
    try:
        cfg = config_from_dict(manifest["config"])
    except KeyError as exc:
        raise DataError(f"{path}: manifest lacks a config") from exc
    model = VideoSegmenter(cfg.model_config(), np.random.default_rng(cfg.seed))
    try:
        model.load_state_dict(state)
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    return model, manifest


def check_class_table(manifest: dict, classes: ClassTable, where: str) -> None:
    stored = manifest.get("classes")
    if stored != classes.to_json():
        raise DataError(f"{where}: checkpoint class table {stored} != dataset {classes.to_json()}")
