"""Dataset-level metric aggregation and the MetricReport JSON format.

Per-video metrics (see .video) expose their integer accumulators; this module
merges them across videos: semantic IoU tables are pooled, association terms
are concatenated and renormalized by the total track count, VPQ spans and mVC
clips are pooled before averaging, and frame PQ is averaged over all frames.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..data.annotations import Dataset, PanopticFrame, VideoAnnotation
from ..errors import DataError
from .video import compute_mvc, compute_pq, compute_stq, compute_vpq

REPORT_VERSION = 1


@dataclass
class VideoMetrics:
    name: str
    pq_frames: list[float]
    stq: object
    vpq: dict
    mvc: dict
    miou_table: dict[int, tuple[int, int]]


def evaluate_video(gt: VideoAnnotation, pred_frames: list[PanopticFrame], windows: list[int], clip_lengths: list[int], name: str = "") -> VideoMetrics:
    from .video import _semantic_iou  # shared accumulator helper

    if len(pred_frames) != len(gt.frames):
        raise DataError(f"{name}: prediction frame count {len(pred_frames)} != gt {len(gt.frames)}")
    for t, (g, p) in enumerate(zip(gt.frames, pred_frames)):
        if g.shape != p.shape:
            raise DataError(f"{name}: frame {t} shape mismatch {p.shape} vs {g.shape}")
    pq_frames = [compute_pq(g, p, gt.classes) for g, p in zip(gt.frames, pred_frames)]
    return VideoMetrics(
        name=name,
        pq_frames=pq_frames,
        stq=compute_stq(gt, pred_frames),
        vpq=compute_vpq(gt, pred_frames, windows),
        mvc=compute_mvc(gt, pred_frames, clip_lengths),
        miou_table=_semantic_iou(
            [f.semantic for f in gt.frames], [f.semantic for f in pred_frames], gt.classes.ignore_id
        ),
    )


def build_report(per_video: list[VideoMetrics], windows: list[int], clip_lengths: list[int], config_hash: str | None = None) -> dict:
    sq_pool: dict[int, list[int]] = {}
    aq_rows: list[dict] = []
    pq_all: list[float] = []
    vpq_spans: dict[int, list[float]] = {k: [] for k in windows}
    vpq_thing: dict[int, list[float]] = {k: [] for k in windows}
    vpq_stuff: dict[int, list[float]] = {k: [] for k in windows}
    mvc_pool: dict[int, list[float]] = {c: [] for c in clip_lengths}

    for vm in per_video:
        pq_all.extend(vm.pq_frames)
        for c, (i, u) in vm.miou_table.items():
            cell = sq_pool.setdefault(c, [0, 0])
            cell[0] += i
            cell[1] += u
        for tid in sorted(vm.stq.aq_terms):
            aq_rows.append(
                {
                    "video": vm.name,
                    "track": int(tid),
                    "term": vm.stq.aq_terms[tid],
                    "size": vm.stq.gt_tube_sizes[tid],
                }
            )
        # Videos with no GT tubes still influence pooled AQ via their vacuous
        # value so that dataset AQ matches the mean of per-video AQs when every
        # video is degenerate; record them as synthetic rows.
        if not vm.stq.gt_tube_sizes:
            aq_rows.append({"video": vm.name, "track": None, "term": vm.stq.aq, "size": 0})
        for k, win in vm.vpq.items():
            vpq_spans[k].extend(win.span_values)
            if win.span_values:
                vpq_thing[k].append((win.vpq_thing, len(win.span_values)))
                vpq_stuff[k].append((win.vpq_stuff, len(win.span_values)))
        for c, v in vm.mvc.items():
            if v is not None:
                mvc_pool[c].append(v)

    sq_classes = sorted(c for c, (i, u) in sq_pool.items() if u > 0)
    sq = sum(sq_pool[c][0] / sq_pool[c][1] for c in sq_classes) / len(sq_classes) if sq_classes else 1.0
    aq = sum(r["term"] for r in aq_rows) / len(aq_rows) if aq_rows else 1.0
    stq = float(np.sqrt(aq * sq))

    windows_out = {}
    means = []
    for k in windows:
        vals = vpq_spans[k]
        v = sum(vals) / len(vals) if vals else 1.0
        th_pairs = vpq_thing[k]
        st_pairs = vpq_stuff[k]
        th = sum(x * n for x, n in th_pairs) / sum(n for _, n in th_pairs) if th_pairs else 1.0
        st = sum(x * n for x, n in st_pairs) / sum(n for _, n in st_pairs) if st_pairs else 1.0
        windows_out[str(k)] = {"vpq": v, "vpq_thing": th, "vpq_stuff": st, "num_spans": len(vals)}
        means.append(v)
    vpq_mean = sum(means) / len(means) if means else 1.0

    mvc_out = {str(c): (sum(vs) / len(vs) if vs else None) for c, vs in mvc_pool.items()}

    report = {
        "format_version": REPORT_VERSION,
        "num_videos": len(per_video),
        "pq": sum(pq_all) / len(pq_all) if pq_all else 1.0,
        "stq": stq,
        "aq": aq,
        "sq": sq,
        "miou": sq,
        "vpq": {"mean": vpq_mean, "windows": windows_out},
        "mvc": mvc_out,
        "accumulators": {
            "sq": {str(c): list(v) for c, v in sorted(sq_pool.items())},
            "aq_terms": aq_rows,
            "vpq_spans": {str(k): v for k, v in vpq_spans.items()},
            "pq_frames": pq_all,
            "videos": [vm.name for vm in per_video],
        },
    }
    if config_hash is not None:
        report["config_hash"] = config_hash
    return report


def evaluate_predictions(dataset: Dataset, preds: dict[str, list[PanopticFrame]], windows: list[int], clip_lengths: list[int], config_hash: str | None = None) -> dict:
    per_video = []
    for vr in dataset.videos:
        if vr.name not in preds:
            raise DataError(f"missing predictions for {vr.name}")
        per_video.append(evaluate_video(vr.annotation, preds[vr.name], windows, clip_lengths, name=vr.name))
    return build_report(per_video, windows, clip_lengths, config_hash=config_hash)


def save_report(path: Path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True))


def load_report(path: Path) -> dict:
    try:
        report = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: cannot read report ({exc})") from exc
    if report.get("format_version") != REPORT_VERSION:
        raise DataError(f"{path}: unsupported report version")
    return report
