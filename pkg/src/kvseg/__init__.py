"""kvseg: dynamic-kernel video panoptic segmentation at desk scale."""

__version__ = "0.1.0"
