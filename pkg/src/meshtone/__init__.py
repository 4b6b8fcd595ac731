"""Consistent per-face mesh colors from uncalibrated multi-view images."""

from .config import PipelineConfig
from .consistency import (
    ColorMatrix,
    FaceColorTable,
    GainMatrix,
    TrimParams,
    aggregate_face_colors,
    build_color_matrix,
    build_gain_matrix,
    estimate_face_colors,
    infill_color_matrix,
    overlap_faces,
    pairwise_gain,
    run_estimate,
    trimmed_mean,
)
from .geometry import ImageBuffer, PinholeView, TextureAtlas, TriangleMesh, face_world_data, project_point
from .io import export_face_colored_mesh, load_mesh, load_views
from .texture import correct_atlas, correct_patch, extract_patch, patch_mean
from .visibility import classify_faces, rasterize_depth, sample_face_pixels

__version__ = "0.1.0"

__all__ = [
    "PipelineConfig",
    "ColorMatrix",
    "FaceColorTable",
    "GainMatrix",
    "TrimParams",
    "aggregate_face_colors",
    "build_color_matrix",
    "build_gain_matrix",
    "estimate_face_colors",
    "infill_color_matrix",
    "overlap_faces",
    "pairwise_gain",
    "run_estimate",
    "trimmed_mean",
    "ImageBuffer",
    "PinholeView",
    "TextureAtlas",
    "TriangleMesh",
    "face_world_data",
    "project_point",
    "export_face_colored_mesh",
    "load_mesh",
    "load_views",
    "correct_atlas",
    "correct_patch",
    "extract_patch",
    "patch_mean",
    "classify_faces",
    "rasterize_depth",
    "sample_face_pixels",
]
