from .report import build_report, evaluate_predictions, evaluate_video, load_report, save_report
from .video import StqResult, VpqWindow, compute_miou, compute_mvc, compute_pq, compute_stq, compute_vpq, pq_class_stats

__all__ = [
    "build_report",
    "evaluate_predictions",
    "evaluate_video",
    "load_report",
    "save_report",
    "StqResult",
    "VpqWindow",
    "compute_miou",
    "compute_mvc",
    "compute_pq",
    "compute_stq",
    "compute_vpq",
    "pq_class_stats",
]
