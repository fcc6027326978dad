"""Video panoptic / tracking quality metrics.

All metrics reduce integer pixel counts (derived with the accelerated
``pair_counts`` kernel) and apply their final floating-point expression in a
fixed, sorted order. That makes results reproducible to the last bit and lets
the test suite compare against brute-force per-pixel oracles with zero
tolerance.

Pixels whose ground-truth semantic id equals the ignore id are excluded from
every metric before any counting happens. The ignore id acts as void on the
prediction side as well: predicted void pixels never form segments, never
count as false positives, and are skipped in semantic class averages.

Conventions:
  * a panoptic *segment* is a maximal set of pixels sharing (semantic id,
    instance id); stuff segments have instance id 0;
  * matching between segments of the same class uses strict IoU > 0.5, which
    makes matches unique;
  * class scores are averaged over classes present in GT or prediction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import accel
from ..data.annotations import ClassTable, PanopticFrame, VideoAnnotation

_SEG_OFF = 1 << 17  # instance ids are uint16, so (sem, inst) packs into sem * 2^17 + inst
_PAIR_OFF = 1 << 40


def _flat_valid(gt_sem, gt_inst, pred_sem, pred_inst, ignore_id):
    keep = gt_sem.ravel() != ignore_id
    return (
        gt_sem.ravel()[keep].astype(np.int64),
        gt_inst.ravel()[keep].astype(np.int64),
        pred_sem.ravel()[keep].astype(np.int64),
        pred_inst.ravel()[keep].astype(np.int64),
    )


def _areas(codes: np.ndarray, counts: np.ndarray) -> dict[int, int]:
    return {int(c): int(n) for c, n in zip(codes, counts)}


@dataclass
class ClassStat:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    iou_sum: float = 0.0

    def pq(self) -> float:
        denom = self.tp + 0.5 * self.fp + 0.5 * self.fn
        return self.iou_sum / denom if denom > 0 else 0.0


def _segment_stats(gt_sem, gt_inst, pred_sem, pred_inst, classes: ClassTable) -> dict[int, ClassStat]:
    """Per-class TP/FP/FN/IoU-sum for one frame or one flattened tube."""
    gs, gi, ps, pi = _flat_valid(gt_sem, gt_inst, pred_sem, pred_inst, classes.ignore_id)
    if gs.size == 0:
        return {}
    gt_code = gs * _SEG_OFF + gi
    pred_code = ps * _SEG_OFF + pi
    g_codes, g_counts = accel.pair_counts(gt_code, np.zeros_like(gt_code), 1)
    p_codes, p_counts = accel.pair_counts(pred_code, np.zeros_like(pred_code), 1)
    g_area = _areas(g_codes, g_counts)
    p_area = _areas(p_codes, p_counts)
    ov_codes, ov_counts = accel.pair_counts(gt_code, pred_code, _PAIR_OFF)

    stats: dict[int, ClassStat] = {}

    def stat(cls: int) -> ClassStat:
        return stats.setdefault(cls, ClassStat())

    matched_gt: set[int] = set()
    matched_pred: set[int] = set()
    # ov_codes ascend, i.e. sorted by (gt segment, pred segment): the iou_sum
    # accumulation order is part of the metric contract.
    for code, inter in zip(ov_codes, ov_counts):
        g = int(code // _PAIR_OFF)
        p = int(code % _PAIR_OFF)
        g_cls = g // _SEG_OFF
        p_cls = p // _SEG_OFF
        if g_cls != p_cls:
            continue
        union = g_area[g] + p_area[p] - int(inter)
        iou = int(inter) / union
        if iou > 0.5:
            s = stat(g_cls)
            s.tp += 1
            s.iou_sum += iou
            matched_gt.add(g)
            matched_pred.add(p)
    for g in sorted(g_area):
        if g not in matched_gt:
            stat(g // _SEG_OFF).fn += 1
    for p in sorted(p_area):
        if p not in matched_pred and p // _SEG_OFF != classes.ignore_id:
            stat(p // _SEG_OFF).fp += 1
    return stats


def _mean_over(stats: dict[int, ClassStat], keep: set[int] | None = None) -> float:
    classes = sorted(c for c in stats if keep is None or c in keep)
    if not classes:
        return 1.0
    return sum(stats[c].pq() for c in classes) / len(classes)


def compute_pq(gt: PanopticFrame, pred: PanopticFrame, classes: ClassTable) -> float:
    """Class-averaged panoptic quality of one frame. Empty-vs-empty is 1.0."""
    return _mean_over(_segment_stats(gt.semantic, gt.instance, pred.semantic, pred.instance, classes))


def pq_class_stats(gt: PanopticFrame, pred: PanopticFrame, classes: ClassTable) -> dict[int, ClassStat]:
    return _segment_stats(gt.semantic, gt.instance, pred.semantic, pred.instance, classes)


@dataclass
class VpqWindow:
    window: int
    vpq: float
    vpq_thing: float
    vpq_stuff: float
    span_values: list[float] = field(default_factory=list)
    class_stats: dict[int, ClassStat] = field(default_factory=dict)


def compute_vpq(
    gt: VideoAnnotation,
    pred_frames: list[PanopticFrame],
    windows: list[int],
) -> dict[int, VpqWindow]:
    """Tube PQ over all (k+1)-frame spans, averaged over spans, per window k.

    A span's maps are the frame maps stacked along the row axis; segments are
    therefore tubes keyed by (class, id) across the span. Windows longer than
    the video yield no spans and are reported as vacuous 1.0 with zero spans.
    """
    classes = gt.classes
    t_total = len(gt.frames)
    if len(pred_frames) != t_total:
        raise ValueError(f"prediction has {len(pred_frames)} frames, gt has {t_total}")
    thing_set = set(classes.thing_classes)
    stuff_set = set(classes.stuff_classes)
    out: dict[int, VpqWindow] = {}
    for k in windows:
        span_vals: list[float] = []
        span_thing: list[float] = []
        span_stuff: list[float] = []
        agg: dict[int, ClassStat] = {}
        for t0 in range(0, t_total - k):
            ts = range(t0, t0 + k + 1)
            g_sem = np.concatenate([gt.frames[t].semantic for t in ts], axis=0)
            g_inst = np.concatenate([gt.frames[t].instance for t in ts], axis=0)
            p_sem = np.concatenate([pred_frames[t].semantic for t in ts], axis=0)
            p_inst = np.concatenate([pred_frames[t].instance for t in ts], axis=0)
            stats = _segment_stats(g_sem, g_inst, p_sem, p_inst, classes)
            span_vals.append(_mean_over(stats))
            span_thing.append(_mean_over(stats, thing_set))
            span_stuff.append(_mean_over(stats, stuff_set))
            for c in sorted(stats):
                a = agg.setdefault(c, ClassStat())
                s = stats[c]
                a.tp += s.tp
                a.fp += s.fp
                a.fn += s.fn
                a.iou_sum += s.iou_sum
        if span_vals:
            win = VpqWindow(
                window=k,
                vpq=sum(span_vals) / len(span_vals),
                vpq_thing=sum(span_thing) / len(span_thing),
                vpq_stuff=sum(span_stuff) / len(span_stuff),
                span_values=span_vals,
                class_stats=agg,
            )
        else:
            win = VpqWindow(window=k, vpq=1.0, vpq_thing=1.0, vpq_stuff=1.0)
        out[k] = win
    return out


def _semantic_iou(gt_sems, pred_sems, ignore_id) -> dict[int, tuple[int, int]]:
    """Pooled per-class (intersection, union) over a stack of frames."""
    gs = np.concatenate([s.ravel() for s in gt_sems]).astype(np.int64)
    ps = np.concatenate([s.ravel() for s in pred_sems]).astype(np.int64)
    keep = gs != ignore_id
    gs, ps = gs[keep], ps[keep]
    g_codes, g_counts = accel.pair_counts(gs, np.zeros_like(gs), 1)
    p_codes, p_counts = accel.pair_counts(ps, np.zeros_like(ps), 1)
    ov_codes, ov_counts = accel.pair_counts(gs, ps, _PAIR_OFF)
    g_area = _areas(g_codes, g_counts)
    p_area = _areas(p_codes, p_counts)
    inter = {}
    for code, n in zip(ov_codes, ov_counts):
        a = int(code // _PAIR_OFF)
        b = int(code % _PAIR_OFF)
        if a == b:
            inter[a] = inter.get(a, 0) + int(n)
    out: dict[int, tuple[int, int]] = {}
    for c in sorted(set(g_area) | set(p_area)):
        if c == ignore_id:
            continue  # predicted void is not a class
        i = inter.get(c, 0)
        u = g_area.get(c, 0) + p_area.get(c, 0) - i
        out[c] = (i, u)
    return out


def compute_miou(gt: VideoAnnotation, pred_frames: list[PanopticFrame]) -> float:
    """Class-mean semantic IoU pooled over all frames of the video."""
    table = _semantic_iou(
        [f.semantic for f in gt.frames], [f.semantic for f in pred_frames], gt.classes.ignore_id
    )
    classes = sorted(c for c, (_, u) in table.items() if u > 0)
    if not classes:
        return 1.0
    return sum(table[c][0] / table[c][1] for c in classes) / len(classes)


@dataclass
class StqResult:
    stq: float
    aq: float
    sq: float
    sq_table: dict[int, tuple[int, int]]  # class -> (intersection, union)
    aq_terms: dict[int, float]  # gt track id -> normalized association term
    gt_tube_sizes: dict[int, int]


def compute_stq(gt: VideoAnnotation, pred_frames: list[PanopticFrame]) -> StqResult:
    """Segmentation-and-tracking quality: sqrt(association * segmentation).

    Association uses class-agnostic prediction tubes (every predicted pixel
    with instance id > 0) against ground-truth instance tubes, weighting each
    overlap by its tube IoU and normalizing per GT tube, then averaging over
    GT tubes. Segmentation is class-mean semantic IoU pooled over the video.
    With no GT tubes at all, association is vacuous: 1.0 if the prediction
    also has no instance pixels, else 0.0.
    """
    classes = gt.classes
    gs = np.concatenate([f.semantic.ravel() for f in gt.frames]).astype(np.int64)
    gi = np.concatenate([f.instance.ravel() for f in gt.frames]).astype(np.int64)
    ps = np.concatenate([f.semantic.ravel() for f in pred_frames]).astype(np.int64)
    pi = np.concatenate([f.instance.ravel() for f in pred_frames]).astype(np.int64)
    keep = gs != classes.ignore_id
    gs, gi, ps, pi = gs[keep], gi[keep], ps[keep], pi[keep]

    sq_table = _semantic_iou([gs], [ps], classes.ignore_id)
    sq_classes = sorted(c for c, (_, u) in sq_table.items() if u > 0)
    sq = sum(sq_table[c][0] / sq_table[c][1] for c in sq_classes) / len(sq_classes) if sq_classes else 1.0

    g_codes, g_counts = accel.pair_counts(gi[gi > 0], np.zeros_like(gi[gi > 0]), 1)
    gt_sizes = _areas(g_codes, g_counts)
    p_codes, p_counts = accel.pair_counts(pi[pi > 0], np.zeros_like(pi[pi > 0]), 1)
    pred_sizes = _areas(p_codes, p_counts)

    aq_terms: dict[int, float] = {}
    if not gt_sizes:
        aq = 1.0 if not pred_sizes else 0.0
    else:
        both = (gi > 0) & (pi > 0)
        ov_codes, ov_counts = accel.pair_counts(gi[both], pi[both], _PAIR_OFF)
        overlaps: dict[int, list[tuple[int, int]]] = {g: [] for g in gt_sizes}
        for code, n in zip(ov_codes, ov_counts):
            g = int(code // _PAIR_OFF)
            p = int(code % _PAIR_OFF)
            overlaps[g].append((p, int(n)))
        total = 0.0
        for g in sorted(gt_sizes):
            inner = 0.0
            for p, tpa in sorted(overlaps[g]):
                union = gt_sizes[g] + pred_sizes[p] - tpa
                inner += tpa * (tpa / union)
            term = inner / gt_sizes[g]
            aq_terms[g] = term
            total += term
        aq = total / len(gt_sizes)

    return StqResult(
        stq=float(np.sqrt(aq * sq)),
        aq=aq,
        sq=sq,
        sq_table=sq_table,
        aq_terms=aq_terms,
        gt_tube_sizes=gt_sizes,
    )


def compute_mvc(gt: VideoAnnotation, pred_frames: list[PanopticFrame], clip_lengths: list[int]) -> dict[int, float | None]:
    """Mean semantic video consistency over sliding clips of each length.

    Per clip, the reference region is the set of pixels whose GT semantic id
    is constant across the clip; the clip scores the fraction of that region
    whose *predicted* id is also constant (correct or not). Clips longer than
    the video contribute nothing; a length with no clips reports None.
    """
    ignore = gt.classes.ignore_id
    g = np.stack([f.semantic for f in gt.frames]).astype(np.int64)
    p = np.stack([f.semantic for f in pred_frames]).astype(np.int64)
    t_total = g.shape[0]
    out: dict[int, float | None] = {}
    for c in clip_lengths:
        vals: list[float] = []
        for t0 in range(0, t_total - c + 1):
            gw = g[t0 : t0 + c]
            pw = p[t0 : t0 + c]
            keep = np.all(gw != ignore, axis=0)
            g_const = np.all(gw == gw[0], axis=0) & keep
            denom = int(g_const.sum())
            if denom == 0:
                continue
            p_const = np.all(pw == pw[0], axis=0)
            num = int((g_const & p_const).sum())
            vals.append(num / denom)
        out[c] = (sum(vals) / len(vals)) if vals else None
    return out
