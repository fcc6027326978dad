"""Ablation driver: train every flag row over several seeds, compare means.

Each run builds the preset's base config, applies the row's overrides and the
seed, trains on the preset's train set, and evaluates on its held-out eval
set. The result keeps every per-run report plus per-row means of the headline
metric so callers can assert directions, not just eyeball a table.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..data import CLASS_TABLE, Dataset, SceneSpec, VideoRecord, generate_dataset
from ..data.io import video_dir_name
from .config import RunConfig, apply_overrides
from .evaluate import evaluate_model
from .presets import AblationPreset, ablation_preset, dataset_specs
from .train import train


def build_dataset(specs: list[SceneSpec]) -> Dataset:
    """Materialize scene specs as an in-memory dataset (no disk round trip)."""
    records = [
        VideoRecord(frames_rgb=frames, annotation=ann, name=video_dir_name(i))
        for i, (frames, ann) in enumerate(generate_dataset(specs))
    ]
    return Dataset(videos=records, classes=CLASS_TABLE)


@dataclass
class AblationRun:
    row: str
    seed: int
    headline: float
    report: dict


@dataclass
class AblationResult:
    preset: str
    headline: str
    runs: list[AblationRun]

    def row_means(self) -> dict[str, float]:
        by_row: dict[str, list[float]] = {}
        for r in self.runs:
            by_row.setdefault(r.row, []).append(r.headline)
        return {row: sum(v) / len(v) for row, v in by_row.items()}

    def to_dict(self) -> dict:
        return {
            "preset": self.preset,
            "headline": self.headline,
            "row_means": self.row_means(),
            "runs": [
                {"row": r.row, "seed": r.seed, "headline": r.headline, "report": r.report}
                for r in self.runs
            ],
        }

    def table(self) -> str:
        means = self.row_means()
        width = max(len(r) for r in means)
        lines = [f"{'row':<{width}}  mean {self.headline}"]
        for row, mean in means.items():
            per_seed = ", ".join(f"{r.headline:.4f}" for r in self.runs if r.row == row)
            lines.append(f"{row:<{width}}  {mean:.4f}  [{per_seed}]")
        return "\n".join(lines)


def run_ablation(
    preset: AblationPreset | str,
    out_dir: str | Path | None = None,
    seeds: tuple[int, ...] | None = None,
    print_fn=print,
) -> AblationResult:
    if isinstance(preset, str):
        preset = ablation_preset(preset)
    seeds = tuple(seeds) if seeds is not None else preset.seeds
    train_set = build_dataset(dataset_specs(preset.train_preset))
    eval_set = build_dataset(dataset_specs(preset.eval_preset))

    runs: list[AblationRun] = []
    for row, extra in preset.rows.items():
        for seed in seeds:
            cfg = apply_overrides(RunConfig(), preset.base_overrides + extra + [f"seed={seed}"])
            result = train(cfg, train_set, out_dir=None, print_fn=None)
            report = evaluate_model(result.model, eval_set, cfg)
            value = float(report[preset.headline])
            runs.append(AblationRun(row=row, seed=seed, headline=value, report=report))
            if print_fn is not None:
                print_fn(f"{preset.name}: row={row} seed={seed} {preset.headline}={value:.4f}")

    result = AblationResult(preset=preset.name, headline=preset.headline, runs=runs)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "ablation.json").write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True))
        (out_dir / "ablation.txt").write_text(result.table() + "\n")
    if print_fn is not None:
        print_fn(result.table())
    return result
