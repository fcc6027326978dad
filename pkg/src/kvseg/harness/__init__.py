from .ablate import AblationResult, AblationRun, build_dataset, run_ablation
from .checkpoint import (
    MANIFEST_KEY,
    build_manifest,
    check_class_table,
    load_checkpoint,
    restore_model,
    save_checkpoint,
)
from .config import (
    HASH_LEN,
    RunConfig,
    apply_overrides,
    config_from_dict,
    config_hash,
    dump_config,
    load_config,
)
from .evaluate import (
    DEFAULT_CLIPS,
    DEFAULT_WINDOWS,
    evaluate_checkpoint,
    evaluate_model,
    predict_dataset,
)
from .presets import (
    ABLATION_PRESETS,
    DATASET_PRESETS,
    OVERFIT_OVERRIDES,
    AblationPreset,
    ablation_preset,
    dataset_specs,
)
from .render import overlay_frame, render_video, track_color
from .train import StepLog, TrainResult, sample_reference_frame, train

__all__ = [
    "AblationResult",
    "AblationRun",
    "build_dataset",
    "run_ablation",
    "MANIFEST_KEY",
    "build_manifest",
    "check_class_table",
    "load_checkpoint",
    "restore_model",
    "save_checkpoint",
    "HASH_LEN",
    "RunConfig",
    "apply_overrides",
    "config_from_dict",
    "config_hash",
    "dump_config",
    "load_config",
    "DEFAULT_CLIPS",
    "DEFAULT_WINDOWS",
    "evaluate_checkpoint",
    "evaluate_model",
    "predict_dataset",
    "ABLATION_PRESETS",
    "DATASET_PRESETS",
    "OVERFIT_OVERRIDES",
    "AblationPreset",
    "ablation_preset",
    "dataset_specs",
    "overlay_frame",
    "render_video",
    "track_color",
    "StepLog",
    "TrainResult",
    "sample_reference_frame",
    "train",
]
