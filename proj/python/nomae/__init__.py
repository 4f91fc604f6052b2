"""Python access to the voxel pyramid, masking and neighborhood-target pipeline."""

from ._nomae import (
    NomaeError,
    build_targets,
    dilate,
    expected_total_ratio,
    generate_mask,
    gradcheck,
    hmg_ratio_for_total,
    load_points,
    pyramid,
    run_command,
    save_points,
    synth_scene,
    voxelize,
)

__all__ = [
    "NomaeError",
    "build_targets",
    "dilate",
    "expected_total_ratio",
    "generate_mask",
    "gradcheck",
    "hmg_ratio_for_total",
    "load_points",
    "pyramid",
    "run_command",
    "save_points",
    "synth_scene",
    "voxelize",
]
