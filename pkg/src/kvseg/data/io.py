"""On-disk dataset layout. Exact byte formats are described in docs/formats.md.

    <root>/meta.json
    <root>/video_0000/frame_0000.img   raw RGB, KVIM header
    <root>/video_0000/frame_0000.pan   semantic+instance planes, KVPN header

Prediction directories reuse the .pan format plus a tracks.jsonl log.
Every parse failure raises DataError naming the file and byte offset.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError
from .annotations import ClassTable, Dataset, PanopticFrame, VideoAnnotation, VideoRecord

FORMAT_VERSION = 1
_IMG_MAGIC = b"KVIM"
_PAN_MAGIC = b"KVPN"
_HEADER = struct.Struct("<4sHHII")  # magic, version, reserved, height, width


def _write_header(fh, magic: bytes, h: int, w: int) -> None:
    fh.write(_HEADER.pack(magic, FORMAT_VERSION, 0, h, w))


def _read_header(path: Path, magic: bytes) -> tuple[int, int, bytes]:
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise DataError(f"{path}: truncated header at byte {len(blob)}")
    got_magic, version, _, h, w = _HEADER.unpack_from(blob, 0)
    if got_magic != magic:
        raise DataError(f"{path}: bad magic {got_magic!r} at byte 0, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {version}")
    return h, w, blob[_HEADER.size :]


def write_image(path: Path, rgb: np.ndarray) -> None:
    h, w, c = rgb.shape
    if c != 3 or rgb.dtype != np.uint8:
        raise DataError(f"{path}: image must be [H, W, 3] uint8")
    with open(path, "wb") as fh:
        _write_header(fh, _IMG_MAGIC, h, w)
        fh.write(rgb.tobytes(order="C"))


def read_image(path: Path) -> np.ndarray:
    h, w, payload = _read_header(path, _IMG_MAGIC)
    expect = h * w * 3
    if len(payload) != expect:
        raise DataError(f"{path}: payload is {len(payload)} bytes at byte {_HEADER.size}, expected {expect}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3).copy()


def write_panoptic(path: Path, frame: PanopticFrame) -> None:
    h, w = frame.shape
    sem = frame.semantic.astype("<u2")
    inst = frame.instance.astype("<u2")
    if frame.semantic.max(initial=0) > 65535 or frame.instance.max(initial=0) > 65535:
        raise DataError(f"{path}: ids exceed uint16 range")
    with open(path, "wb") as fh:
        _write_header(fh, _PAN_MAGIC, h, w)
        fh.write(sem.tobytes(order="C"))
        fh.write(inst.tobytes(order="C"))


def read_panoptic(path: Path) -> PanopticFrame:
    h, w, payload = _read_header(path, _PAN_MAGIC)
    plane = h * w * 2
    if len(payload) != 2 * plane:
        raise DataError(f"{path}: payload is {len(payload)} bytes at byte {_HEADER.size}, expected {2 * plane}")
    sem = np.frombuffer(payload[:plane], dtype="<u2").reshape(h, w).astype(np.int32)
    inst = np.frombuffer(payload[plane:], dtype="<u2").reshape(h, w).astype(np.int32)
    return PanopticFrame(semantic=sem, instance=inst)


def video_dir_name(index: int) -> str:
    return f"video_{index:04d}"


def frame_stem(index: int) -> str:
    return f"frame_{index:04d}"


def write_dataset(root: Path, videos: list[tuple[np.ndarray, VideoAnnotation]], classes: ClassTable, extra_meta: dict | None = None) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    meta: dict = {
        "format_version": FORMAT_VERSION,
        "classes": classes.to_json(),
        "videos": [],
    }
    if extra_meta:
        meta.update(extra_meta)
    for vi, (frames_rgb, ann) in enumerate(videos):
        vdir = root / video_dir_name(vi)
        vdir.mkdir(exist_ok=True)
        t_total, h, w, _ = frames_rgb.shape
        for t in range(t_total):
            write_image(vdir / f"{frame_stem(t)}.img", frames_rgb[t])
            write_panoptic(vdir / f"{frame_stem(t)}.pan", ann.frames[t])
        meta["videos"].append({"name": vdir.name, "num_frames": t_total, "height": h, "width": w})
    (root / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def _load_meta(root: Path) -> dict:
    meta_path = root / "meta.json"
    if not meta_path.is_file():
        raise DataError(f"{meta_path}: missing dataset metadata")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{meta_path}: invalid JSON ({exc})") from exc
    if meta.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{meta_path}: unsupported format_version {meta.get('format_version')}")
    return meta


def load_dataset(root: Path, with_images: bool = True) -> Dataset:
    root = Path(root)
    meta = _load_meta(root)
    classes = ClassTable.from_json(meta.get("classes", {}))
    videos: list[VideoRecord] = []
    for vid, entry in enumerate(meta.get("videos", [])):
        vdir = root / entry["name"]
        if not vdir.is_dir():
            raise DataError(f"{vdir}: listed in meta.json but missing")
        frames = []
        rgbs = []
        for t in range(int(entry["num_frames"])):
            pan = read_panoptic(vdir / f"{frame_stem(t)}.pan")
            frames.append(pan)
            if with_images:
                rgbs.append(read_image(vdir / f"{frame_stem(t)}.img"))
        ann = VideoAnnotation(frames=frames, classes=classes, video_id=vid)
        ann.validate()
        rgb_arr = np.stack(rgbs) if rgbs else np.zeros((len(frames),) + frames[0].shape + (3,), np.uint8)
        videos.append(VideoRecord(frames_rgb=rgb_arr, annotation=ann, name=entry["name"]))
    if not videos:
        raise DataError(f"{root}: dataset lists no videos")
    return Dataset(videos=videos, classes=classes, root=str(root))


def write_predictions(root: Path, per_video: list[tuple[str, list[PanopticFrame], list[dict]]], classes: ClassTable, extra_meta: dict | None = None) -> None:
    """per_video: (video name, predicted frames, track log rows)."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    meta: dict = {"format_version": FORMAT_VERSION, "classes": classes.to_json(), "videos": []}
    if extra_meta:
        meta.update(extra_meta)
    for name, frames, log_rows in per_video:
        vdir = root / name
        vdir.mkdir(exist_ok=True)
        for t, fr in enumerate(frames):
            write_panoptic(vdir / f"{frame_stem(t)}.pan", fr)
        with open(vdir / "tracks.jsonl", "w") as fh:
            for row in log_rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        h, w = frames[0].shape if frames else (0, 0)
        meta["videos"].append({"name": name, "num_frames": len(frames), "height": h, "width": w})
    (root / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_predictions(root: Path) -> dict[str, list[PanopticFrame]]:
    root = Path(root)
    meta = _load_meta(root)
    out: dict[str, list[PanopticFrame]] = {}
    for entry in meta.get("videos", []):
        vdir = root / entry["name"]
        frames = [read_panoptic(vdir / f"{frame_stem(t)}.pan") for t in range(int(entry["num_frames"]))]
        out[entry["name"]] = frames
    if not out:
        raise DataError(f"{root}: prediction set lists no videos")
    return out
