"""Training loop: sampled (key, reference) pairs, AdamW, divergence guard.

One process, one sample per step. The reference frame is drawn uniformly from
a window around the key frame; all weights are shared across the two frames,
so a step is forward_pair -> total_loss -> backward -> clip -> update. The
loop aborts with a state dump as soon as the total loss goes non-finite or
runs away past ``divergence_factor`` times the first step's loss.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..data import Dataset
from ..engine import AdamW, clip_grad_norm
from ..errors import ConfigError, DivergenceError
from ..losses import compute_pair_loss
from ..model import VideoSegmenter
from .checkpoint import build_manifest, save_checkpoint
from .config import RunConfig


def sample_reference_frame(
    length: int, key_index: int, window: int, rng: np.random.Generator
) -> tuple[int, bool]:
    """Uniform over offsets in [-window, +window] minus 0, clipped to bounds.

    Returns (ref_index, degenerate) with degenerate=True only when the video
    has a single frame and the key must pair with itself.
    """
    if not 0 <= key_index < length:
        raise ConfigError(f"key index {key_index} outside video of length {length}")
    lo = max(0, key_index - window)
    hi = min(length - 1, key_index + window)
    choices = [i for i in range(lo, hi + 1) if i != key_index]
    if not choices:
        return key_index, True
    return int(choices[rng.integers(0, len(choices))]), False


@dataclass
class StepLog:
    step: int
    total: float
    l_cls: float
    l_ce: float
    l_dice: float
    l_track: float
    l_aux: float

    def to_dict(self) -> dict:
        return self.__dict__.copy()


@dataclass
class TrainResult:
    model: VideoSegmenter
    manifest: dict
    logs: list[StepLog]
    checkpoint_path: Path | None


def train(
    cfg: RunConfig,
    dataset: Dataset,
    out_dir: str | Path | None = None,
    print_fn=print,
) -> TrainResult:
    if not len(dataset):
        raise ConfigError("empty dataset")
    rng = np.random.default_rng(cfg.seed)
    model = VideoSegmenter(cfg.model_config(), np.random.default_rng(cfg.seed))
    weights = cfg.loss_weights()
    opt = AdamW(
        model.parameters(),
        lr=cfg.optim.lr,
        weight_decay=cfg.optim.weight_decay,
    )

    logs: list[StepLog] = []
    first_total: float | None = None
    started = time.perf_counter()
    for step in range(1, cfg.optim.steps + 1):
        video = dataset.videos[int(rng.integers(0, len(dataset)))]
        t_total = len(video.annotation)
        key_idx = int(rng.integers(0, t_total))
        ref_idx, _ = sample_reference_frame(t_total, key_idx, cfg.data.ref_window, rng)

        pair = model.forward_pair(video.frames_rgb[key_idx], video.frames_rgb[ref_idx])
        bundle = compute_pair_loss(
            model,
            pair,
            video.annotation.frames[key_idx],
            video.annotation.frames[ref_idx],
            dataset.classes,
            weights,
        )
        log = StepLog(
            step=step,
            total=bundle.total,
            l_cls=bundle.l_cls,
            l_ce=bundle.l_ce,
            l_dice=bundle.l_dice,
            l_track=bundle.l_track,
            l_aux=bundle.l_aux,
        )
        logs.append(log)

        if first_total is None:
            first_total = bundle.total
        runaway = bundle.total > cfg.optim.divergence_factor * max(first_total, 1e-12)
        if not np.isfinite(bundle.total) or runaway:
            manifest = build_manifest(cfg, {"diverged_at_step": step, "losses": [l.to_dict() for l in logs[-20:]]})
            if out_dir is not None:
                save_checkpoint(Path(out_dir) / "diverged.npz", model, manifest)
            raise DivergenceError(
                f"loss {bundle.total} at step {step} (first step {first_total}); state dumped"
            )

        model.zero_grad()
        bundle.total_tensor.backward()
        if cfg.optim.grad_clip > 0:
            clip_grad_norm(model.parameters(), cfg.optim.grad_clip)
        opt.step()

        if print_fn is not None and cfg.optim.log_every and step % cfg.optim.log_every == 0:
            print_fn(
                f"step {step:5d}  total {log.total:9.4f}  cls {log.l_cls:8.4f}  "
                f"ce {log.l_ce:8.4f}  dice {log.l_dice:8.4f}  track {log.l_track:8.4f}  aux {log.l_aux:8.4f}"
            )

    wall = time.perf_counter() - started
    manifest = build_manifest(
        cfg,
        {
            "steps": cfg.optim.steps,
            "wall_time_s": round(wall, 3),
            "first_loss": first_total,
            "final_loss": logs[-1].total if logs else None,
            "final_losses": logs[-1].to_dict() if logs else None,
        },
    )
    ckpt = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        ckpt = save_checkpoint(out_dir / "checkpoint.npz", model, manifest)
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
        (out_dir / "losses.jsonl").write_text("\n".join(json.dumps(l.to_dict()) for l in logs) + ("\n" if logs else ""))
    return TrainResult(model=model, manifest=manifest, logs=logs, checkpoint_path=ckpt)
