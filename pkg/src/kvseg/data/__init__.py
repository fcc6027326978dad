from .annotations import IGNORE_ID, ClassTable, Dataset, PanopticFrame, VideoAnnotation, VideoRecord
from .io import load_dataset, load_predictions, read_image, read_panoptic, write_dataset, write_image, write_panoptic, write_predictions
from .synth import CLASS_TABLE, LAYOUTS, STUFF_CLASSES, THING_CLASSES, SceneSpec, generate_dataset, generate_video

__all__ = [
    "IGNORE_ID",
    "ClassTable",
    "Dataset",
    "PanopticFrame",
    "VideoAnnotation",
    "VideoRecord",
    "load_dataset",
    "load_predictions",
    "read_image",
    "read_panoptic",
    "write_dataset",
    "write_image",
    "write_panoptic",
    "write_predictions",
    "CLASS_TABLE",
    "LAYOUTS",
    "STUFF_CLASSES",
    "THING_CLASSES",
    "SceneSpec",
    "generate_dataset",
    "generate_video",
]
