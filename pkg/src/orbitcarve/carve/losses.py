"""Reconstruction losses over aligned lists of per-view images.

Each loss returns the scalar value together with its gradient with
respect to the rendered images, so the caller can hand the per-pixel
gradients straight to ``render_backward``.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np


class LossTerm(NamedTuple):
    value: float
    grads: list[np.ndarray]


def _aligned(rendered: Sequence, target: Sequence, what: str) -> None:
    if len(rendered) != len(target):
        raise ValueError(f"{what}: {len(rendered)} rendered views but {len(target)} targets")
    for i, (r, t) in enumerate(zip(rendered, target)):
        if np.shape(r) != np.shape(t):
            raise ValueError(f"{what}: view {i} rendered shape {np.shape(r)} != target shape {np.shape(t)}")


def mask_view(rendered: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    r = target - rendered
    return float(np.sum(r * r)), -2.0 * r


def normal_view(rendered: np.ndarray, target: np.ndarray, mask: np.ndarray) -> tuple[float, np.ndarray]:
    r = target - rendered
    w = mask[..., None]
    return float(np.sum(w * r * r)), -2.0 * w * r


def mask_loss(rendered: Sequence[np.ndarray], target: Sequence[np.ndarray]) -> LossTerm:
    """``sum_i sum_p (M_i - M^_i)^2``."""
    _aligned(rendered, target, "mask_loss")
    parts = [mask_view(np.asarray(r, np.float64), np.asarray(t, np.float64)) for r, t in zip(rendered, target)]
    return LossTerm(float(sum(p[0] for p in parts)), [p[1] for p in parts])


def normal_loss(rendered: Sequence[np.ndarray], target: Sequence[np.ndarray], masks: Sequence[np.ndarray]) -> LossTerm:
    """``sum_i sum_p M_i ||N_i - N^_i||^2``; pixels outside the mask do not count."""
    _aligned(rendered, target, "normal_loss")
    if len(masks) != len(target):
        raise ValueError(f"normal_loss: {len(masks)} masks for {len(target)} views")
    for i, (m, t) in enumerate(zip(masks, target)):
        if np.shape(m) != np.shape(t)[:2]:
            raise ValueError(f"normal_loss: view {i} mask shape {np.shape(m)} does not match {np.shape(t)[:2]}")
    parts = [
        normal_view(np.asarray(r, np.float64), np.asarray(t, np.float64), np.asarray(m, np.float64))
        for r, t, m in zip(rendered, target, masks)
    ]
    return LossTerm(float(sum(p[0] for p in parts)), [p[1] for p in parts])


def total_loss(mask_part: float, normal_part: float, mask_weight: float = 1.0, normal_weight: float = 1.0) -> float:
    """Weighted sum of the two terms; unit weights by default."""
    if not (np.isfinite(mask_part) and np.isfinite(normal_part)):
        raise ValueError(f"non-finite loss parts: mask={mask_part}, normal={normal_part}")
    return mask_weight * mask_part + normal_weight * normal_part


class ColorLoss(NamedTuple):
    squared: float  # optimized objective
    unsquared: float  # sum_p M ||I - I^|| (reported)
    grads: list[np.ndarray]


def color_loss(rendered: Sequence[np.ndarray], target: Sequence[np.ndarray], masks: Sequence[np.ndarray]) -> ColorLoss:
    """Masked color residual; the squared form is optimized, both are reported."""
    term = normal_loss(rendered, target, masks)
    unsquared = sum(
        float(np.sum(np.asarray(m) * np.linalg.norm(np.asarray(t) - np.asarray(r), axis=-1)))
        for r, t, m in zip(rendered, target, masks)
    )
    return ColorLoss(term.value, unsquared, term.grads)
