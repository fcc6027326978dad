"""Named experiment presets: dataset recipes and ablation matrices.

Dataset presets are plain lists of scene specs, so ``gen-data --preset X``
is reproducible byte for byte. Ablation presets bundle a train set, a
held-out eval set, a base config, and the flag rows to compare; ``ablate``
trains every row over several seeds and tabulates the requested headline
metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..data.synth import LAYOUTS, SceneSpec
from ..errors import ConfigError


def overfit8_specs() -> list[SceneSpec]:
    """Eight easy videos for the memorization run: large slow shapes."""
    return [
        SceneSpec(
            seed=100 + i,
            height=64,
            width=64,
            num_frames=4,
            num_things=2,
            stuff_layout=LAYOUTS[i % len(LAYOUTS)],
            min_half=10,
            max_half=13,
            min_speed=1.0,
            max_speed=2.0,
        )
        for i in range(8)
    ]


def _fast_motion(seed: int) -> SceneSpec:
    return SceneSpec(
        seed=seed,
        height=64,
        width=64,
        num_frames=5,
        num_things=3,
        stuff_layout=LAYOUTS[seed % len(LAYOUTS)],
        min_half=8,
        max_half=11,
        min_speed=5.0,
        max_speed=8.0,
    )


def fast_motion_train_specs() -> list[SceneSpec]:
    return [_fast_motion(200 + i) for i in range(8)]


def fast_motion_eval_specs() -> list[SceneSpec]:
    return [_fast_motion(260 + i) for i in range(6)]


def _occlusion(seed: int) -> SceneSpec:
    return SceneSpec(
        seed=seed,
        height=64,
        width=64,
        num_frames=5,
        num_things=2,
        stuff_layout=LAYOUTS[seed % len(LAYOUTS)],
        min_half=9,
        max_half=12,
        min_speed=2.0,
        max_speed=4.0,
        occluders=True,
    )


def occlusion_train_specs() -> list[SceneSpec]:
    return [_occlusion(300 + i) for i in range(8)]


def occlusion_eval_specs() -> list[SceneSpec]:
    return [_occlusion(360 + i) for i in range(6)]


DATASET_PRESETS = {
    "overfit8": overfit8_specs,
    "fast-motion-train": fast_motion_train_specs,
    "fast-motion-eval": fast_motion_eval_specs,
    "occlusion-train": occlusion_train_specs,
    "occlusion-eval": occlusion_eval_specs,
}


def dataset_specs(name: str) -> list[SceneSpec]:
    try:
        return DATASET_PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown dataset preset {name!r}; known: {sorted(DATASET_PRESETS)}") from None


# Overrides shared by the memorization run (criterion: fast, small, converges).
OVERFIT_OVERRIDES = [
    "optim.steps=300",
    "optim.lr=0.004",
    "optim.log_every=50",
    "tracker.mask_upsample=bilinear",
]


@dataclass(frozen=True)
class AblationPreset:
    name: str
    headline: str  # report key the comparison table extracts, e.g. "aq"
    train_preset: str
    eval_preset: str
    base_overrides: list[str]
    rows: dict[str, list[str]] = field(default_factory=dict)  # row name -> extra overrides
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)


ABLATION_PRESETS = {
    # association-embedding ladder: raw kernels -> learned embeddings -> linked
    "kae-ladder": AblationPreset(
        name="kae-ladder",
        headline="aq",
        train_preset="fast-motion-train",
        eval_preset="fast-motion-eval",
        base_overrides=[
            "optim.steps=300",
            "optim.lr=0.004",
            "optim.log_every=0",
            "flags.fuse=false",
            "tracker.mask_upsample=bilinear",
        ],
        rows={
            "baseline": ["flags.kae=false", "flags.link=false"],
            "kae": ["flags.kae=true", "flags.link=false"],
            "kae+link": ["flags.kae=true", "flags.link=true"],
        },
    ),
    # temporal kernel fusion with vs without the feature-update step
    "fusion-update": AblationPreset(
        name="fusion-update",
        headline="sq",
        train_preset="occlusion-train",
        eval_preset="occlusion-eval",
        base_overrides=[
            "optim.steps=300",
            "optim.lr=0.004",
            "optim.log_every=0",
            "flags.fuse=true",
            "tracker.mask_upsample=bilinear",
        ],
        rows={
            "with-update": ["flags.fuse_update=true"],
            "without-update": ["flags.fuse_update=false"],
        },
    ),
}


def ablation_preset(name: str) -> AblationPreset:
    try:
        return ABLATION_PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown ablation preset {name!r}; known: {sorted(ABLATION_PRESETS)}") from None
