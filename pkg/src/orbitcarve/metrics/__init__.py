"""Evaluation metrics: surface distances, silhouette IoU, view embedding score."""

from .geometry_metrics import ChamferResult, MetricError, chamfer, normal_consistency, sample_surface
from .image_metrics import (
    ClipScoreError,
    EmbeddingProvider,
    IoUResult,
    ToyEmbeddingProvider,
    clip_score,
    mask_iou,
    silhouette_iou,
)
from .nearest import BVH, brute_force, closest_point_triangle, point_triangle_distance
from .report import EvalReport

__all__ = [
    "BVH",
    "ChamferResult",
    "ClipScoreError",
    "EmbeddingProvider",
    "EvalReport",
    "IoUResult",
    "MetricError",
    "ToyEmbeddingProvider",
    "brute_force",
    "chamfer",
    "clip_score",
    "closest_point_triangle",
    "mask_iou",
    "normal_consistency",
    "point_triangle_distance",
    "sample_surface",
    "silhouette_iou",
]
