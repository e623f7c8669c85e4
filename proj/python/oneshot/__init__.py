"""One-shot object detection on VGG16 features."""

from ._core import (
    ImageError,
    Weights,
    WeightsError,
    adaptive_threshold,
    describe,
    detect,
    features,
    load_image,
    match,
    planted_scene,
    region_grid,
    setting_labels,
    setting_spec,
    tank_object,
    window_average_map,
    window_max_map,
)

__all__ = [
    "ImageError",
    "Weights",
    "WeightsError",
    "adaptive_threshold",
    "describe",
    "detect",
    "features",
    "load_image",
    "match",
    "planted_scene",
    "region_grid",
    "setting_labels",
    "setting_spec",
    "tank_object",
    "window_average_map",
    "window_max_map",
]
