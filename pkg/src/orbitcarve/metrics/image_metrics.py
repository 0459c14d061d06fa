"""Image-space metrics: silhouette IoU and the CLIP-style view score."""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import cv2
import numpy as np

from ..dataset import OrbitDataset
from ..geometry import TriMesh
from ..raster import RasterConfig, render


def mask_iou(pred: np.ndarray, target: np.ndarray, threshold: float = 0.5) -> tuple[float, bool]:
    """IoU of two masks thresholded at ``threshold``; ``(1.0, True)`` if both are empty."""
    a = np.asarray(pred) >= threshold
    b = np.asarray(target) >= threshold
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0, True
    return np.count_nonzero(a & b) / union, False


@dataclass(frozen=True)
class IoUResult:
    per_view: list[float]
    mean: float
    empty_union: list[int]  # views whose union was empty (scored 1.0)


def silhouette_iou(mesh: TriMesh, dataset: OrbitDataset) -> IoUResult:
    """Per-view IoU between hard renders of ``mesh`` and the dataset masks."""
    config = RasterConfig(mode="hard")
    per_view, empty = [], []
    for k, view in enumerate(dataset.views):
        iou, is_empty = mask_iou(render(mesh, view.camera, config).mask, view.mask)
        per_view.append(float(iou))
        if is_empty:
            empty.append(k)
    return IoUResult(per_view, float(np.mean(per_view)), empty)


class EmbeddingProvider(ABC):
    """Maps an image to a feature vector of fixed dimension ``dim``."""

    dim: int

    @abstractmethod
    def embed(self, image: np.ndarray) -> np.ndarray: ...


class ToyEmbeddingProvider(EmbeddingProvider):
    """Deterministic stand-in encoder.

    Area-downsample to ``size x size``, flatten, subtract the mean and
    normalize to unit length. Constant images have no direction and
    embed to the zero vector.
    """

    def __init__(self, size: int = 16):
        self.size = int(size)
        self.dim = 3 * self.size * self.size

    def embed(self, image: np.ndarray) -> np.ndarray:
        img = np.asarray(image, dtype=np.float64)
        if img.ndim == 2:
            img = np.repeat(img[..., None], 3, axis=2)
        if img.ndim != 3 or img.shape[2] != 3:
            raise ValueError(f"expected an (H, W, 3) or (H, W) image, got shape {img.shape}")
        if np.ptp(img) == 0:
            # INTER_AREA works in float32 and leaves ~1e-8 ripple on constant input
            return np.zeros(self.dim)
        small = cv2.resize(img, (self.size, self.size), interpolation=cv2.INTER_AREA)
        v = small.reshape(-1)
        v = v - v.mean()
        n = np.linalg.norm(v)
        return v / n if n > 0 else np.zeros_like(v)


class ClipScoreError(ValueError):
    def __init__(self, offenders: list[str]):
        super().__init__("zero-norm embedding for " + ", ".join(offenders))
        self.offenders = offenders


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    # sqrt(x * x) == x in IEEE arithmetic, so identical inputs give exactly 1.0
    return float(np.dot(a, b) / np.sqrt(np.dot(a, a) * np.dot(b, b)))


def clip_score(prompt: np.ndarray, views: Sequence[np.ndarray], provider: EmbeddingProvider) -> float:
    """Mean cosine similarity between the prompt embedding and each view's."""
    if len(views) == 0:
        raise ValueError("clip_score needs at least one view")
    e_p = np.asarray(provider.embed(prompt), dtype=np.float64)
    e_v = [np.asarray(provider.embed(v), dtype=np.float64) for v in views]
    offenders = [] if np.dot(e_p, e_p) > 0 else ["prompt"]
    offenders += [f"view {i}" for i, e in enumerate(e_v) if not np.dot(e, e) > 0]
    if offenders:
        raise ClipScoreError(offenders)
    for i, e in enumerate(e_v):
        if e.shape != e_p.shape or not np.isfinite(e).all():
            raise ValueError(f"view {i}: embedding shape {e.shape} or values invalid")
    # fsum is exactly rounded, so the mean does not depend on view order
    return math.fsum(cosine(e_p, e) for e in e_v) / len(e_v)
