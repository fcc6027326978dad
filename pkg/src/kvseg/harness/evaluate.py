"""Evaluation driver: run the tracker over a dataset, score the predictions.

Each video gets its own fresh id ledger; videos are processed in dataset
order and metric accumulators merge in that fixed order, so reports are
reproducible bit for bit. The report embeds the config hash of the weights
that produced it; evaluating against a different config requires --force.
"""

from __future__ import annotations

from pathlib import Path

from ..data import Dataset, PanopticFrame
from ..errors import ConfigError
from ..metrics import evaluate_predictions
from ..model import VideoSegmenter
from ..tracking import TrackParams, decode_clip, step_video
from .checkpoint import check_class_table, restore_model
from .config import RunConfig, config_from_dict, config_hash

DEFAULT_WINDOWS = [0, 1, 2]
DEFAULT_CLIPS = [2, 4]


def predict_dataset(
    model: VideoSegmenter,
    dataset: Dataset,
    params: TrackParams,
    clip_mode: bool = False,
) -> tuple[dict[str, list[PanopticFrame]], dict[str, list[dict]]]:
    preds: dict[str, list[PanopticFrame]] = {}
    logs: dict[str, list[dict]] = {}
    for video in dataset.videos:
        if clip_mode:
            tracked = decode_clip(model, video.frames_rgb, dataset.classes, params=params)
        else:
            tracked = step_video(model, video.frames_rgb, dataset.classes, params=params)
        preds[video.name] = [fr.panoptic for fr in tracked]
        logs[video.name] = [row for fr in tracked for row in fr.records]
    return preds, logs


def evaluate_model(
    model: VideoSegmenter,
    dataset: Dataset,
    cfg: RunConfig,
    windows: list[int] | None = None,
    clip_lengths: list[int] | None = None,
) -> dict:
    params = cfg.track_params()
    preds, _ = predict_dataset(model, dataset, params, clip_mode=cfg.flags.clip_mode)
    report = evaluate_predictions(
        dataset,
        preds,
        windows=windows if windows is not None else DEFAULT_WINDOWS,
        clip_lengths=clip_lengths if clip_lengths is not None else DEFAULT_CLIPS,
        config_hash=config_hash(cfg),
    )
    report["tracker"] = params.to_dict()
    return report


def evaluate_checkpoint(
    checkpoint: str | Path,
    dataset: Dataset,
    override_cfg: RunConfig | None = None,
    force: bool = False,
    windows: list[int] | None = None,
    clip_lengths: list[int] | None = None,
) -> dict:
    model, manifest = restore_model(checkpoint)
    check_class_table(manifest, dataset.classes, str(checkpoint))
    stored_cfg = config_from_dict(manifest["config"])
    cfg = stored_cfg
    if override_cfg is not None:
        if config_hash(override_cfg) != manifest.get("config_hash") and not force:
            raise ConfigError(
                f"config hash {config_hash(override_cfg)} does not match checkpoint "
                f"{manifest.get('config_hash')}; pass force to evaluate anyway"
            )
        cfg = override_cfg
    report = evaluate_model(model, dataset, cfg, windows=windows, clip_lengths=clip_lengths)
    report["checkpoint_hash"] = manifest.get("config_hash")
    return report
