"""Command line entry point.

Verbs: gen-data, train, evaluate, track, render, ablate. Every verb resolves
relative ``--out`` paths under $KVSEG_OUTPUT_ROOT when that is set, so batch
jobs can redirect all artifacts with one environment variable. Exit codes:
0 success, 2 configuration problem, 3 bad input data, 4 training divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from ..data import load_dataset, load_predictions, write_dataset, write_predictions
from ..data.synth import generate_dataset
from ..errors import ConfigError, DataError, DivergenceError
from .ablate import run_ablation
from .checkpoint import restore_model
from .config import (
    RunConfig,
    apply_overrides,
    config_from_dict,
    dump_config,
    load_config,
)
from .evaluate import evaluate_checkpoint, predict_dataset
from .presets import ABLATION_PRESETS, DATASET_PRESETS, OVERFIT_OVERRIDES, dataset_specs
from .render import render_video
from .train import train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


def _out_path(raw: str) -> Path:
    path = Path(raw)
    if path.is_absolute():
        return path
    root = os.environ.get("KVSEG_OUTPUT_ROOT")
    return (Path(root) / path) if root else path


def _resolved_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = list(args.set or [])
    if getattr(args, "preset", None) == "overfit8":
        overrides = OVERFIT_OVERRIDES + overrides
    return apply_overrides(cfg, overrides) if overrides else cfg


def _cmd_gen_data(args) -> int:
    specs = dataset_specs(args.preset)
    videos = generate_dataset(specs)
    out = _out_path(args.out)
    write_dataset(out, videos, videos[0][1].classes, extra_meta={"preset": args.preset})
    print(f"wrote {len(videos)} videos to {out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = _resolved_config(args)
    dataset = load_dataset(Path(args.data))
    out = _out_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.yaml")
    result = train(cfg, dataset, out_dir=out)
    print(
        f"done: {cfg.optim.steps} steps, loss {result.manifest['first_loss']:.4f} -> "
        f"{result.manifest['final_loss']:.4f}, checkpoint {result.checkpoint_path}"
    )
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    dataset = load_dataset(Path(args.data))
    override = None
    if args.config or args.set:
        override = _resolved_config(args)
    report = evaluate_checkpoint(
        args.checkpoint,
        dataset,
        override_cfg=override,
        force=args.force,
        windows=args.windows,
        clip_lengths=args.clips,
    )
    if args.out:
        out = _out_path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(report, indent=2, sort_keys=True))
    print(
        f"stq {report['stq']:.4f}  aq {report['aq']:.4f}  sq {report['sq']:.4f}  "
        f"pq {report['pq']:.4f}  vpq {report['vpq']['mean']:.4f}"
    )
    return EXIT_OK


def _cmd_track(args) -> int:
    dataset = load_dataset(Path(args.data))
    model, manifest = restore_model(args.checkpoint)
    cfg = _resolved_config(args) if (args.config or args.set) else None
    params = (cfg or config_from_dict(manifest["config"])).track_params()
    clip = args.clip or (cfg.flags.clip_mode if cfg else bool(manifest["config"]["flags"]["clip_mode"]))
    preds, logs = predict_dataset(model, dataset, params, clip_mode=clip)
    out = _out_path(args.out)
    per_video = [(name, preds[name], logs[name]) for name in sorted(preds)]
    write_predictions(
        out,
        per_video,
        dataset.classes,
        extra_meta={"checkpoint_hash": manifest.get("config_hash"), "tracker": params.to_dict()},
    )
    print(f"wrote predictions for {len(per_video)} videos to {out}")
    return EXIT_OK


def _cmd_render(args) -> int:
    dataset = load_dataset(Path(args.data))
    preds = load_predictions(Path(args.tracks))
    out = _out_path(args.out)
    names = [args.video] if args.video else sorted(preds)
    total = 0
    for name in names:
        record = next((v for v in dataset.videos if v.name == name), None)
        if record is None:
            raise DataError(f"video {name!r} not present in {args.data}")
        if name not in preds:
            raise DataError(f"no predictions for video {name!r} in {args.tracks}")
        paths = render_video(record.frames_rgb, preds[name], dataset.classes, out / name)
        total += len(paths)
    print(f"rendered {total} frames into {out}")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    seeds = tuple(args.seeds) if args.seeds else None
    run_ablation(args.preset, out_dir=_out_path(args.out) if args.out else None, seeds=seeds)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kvseg", description="kernel video segmentation toolkit")
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_config_args(p, with_preset=False):
        p.add_argument("--config", help="YAML run config (defaults apply when omitted)")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="config override")
        if with_preset:
            p.add_argument(
                "--preset",
                choices=["overfit8"],
                help="apply the named training preset's overrides before --set",
            )

    p = sub.add_parser("gen-data", help="write a synthetic dataset preset to disk")
    p.add_argument("--preset", required=True, choices=sorted(DATASET_PRESETS))
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    add_config_args(p, with_preset=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a dataset")
    add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="write the metric report JSON here")
    p.add_argument("--windows", type=int, nargs="+", help="VPQ window spans")
    p.add_argument("--clips", type=int, nargs="+", help="mVC clip lengths")
    p.add_argument("--force", action="store_true", help="allow a config that does not match the checkpoint")
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("track", help="run tracking and write prediction files")
    add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--clip", action="store_true", help="decode whole clips jointly")
    p.set_defaults(fn=_cmd_track)

    p = sub.add_parser("render", help="overlay predictions on frames as PNGs")
    p.add_argument("--data", required=True)
    p.add_argument("--tracks", required=True, help="directory written by the track verb")
    p.add_argument("--out", required=True)
    p.add_argument("--video", help="render only this video")
    p.set_defaults(fn=_cmd_render)

    p = sub.add_parser("ablate", help="train and compare a preset's flag rows")
    p.add_argument("--preset", required=True, choices=sorted(ABLATION_PRESETS))
    p.add_argument("--out")
    p.add_argument("--seeds", type=int, nargs="+")
    p.set_defaults(fn=_cmd_ablate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    raise SystemExit(main())
