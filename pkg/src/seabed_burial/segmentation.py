"""Split a dense cloud into object and floor points by counting mask hits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NoMaskedViews, ValidationError
from .scene import BinaryMask, CameraView, Label, LabeledPointCloud


@dataclass(frozen=True)
class SegmentationParams:
    min_mask_hits: int | None = None  # None: ceil(half the masked views)
    require_in_front: bool = True

    def __post_init__(self):
        if self.min_mask_hits is not None and self.min_mask_hits < 1:
            raise ValidationError("min_mask_hits must be >= 1")
        if not self.require_in_front:
            raise ValidationError("points behind a camera can never count as a mask hit")


def default_min_hits(n_masked_views: int) -> int:
    return max(1, math.ceil(0.5 * n_masked_views))


def mask_hit_counts(points: np.ndarray, views, masks: dict) -> np.ndarray:
    """Number of masks each world point lands on (nearest pixel centre, z > 0 only)."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    hits = np.zeros(len(points), dtype=np.int64)
    for view in views:
        mask = masks.get(view.id)
        if mask is None:
            continue
        K = view.intrinsics
        if (mask.width, mask.height) != (K.width, K.height):
            raise DimensionMismatch(f"mask of camera {view.id!r} does not match its image size")
        pc = view.world_pose.inverse().apply(points)
        z = pc[:, 2]
        front = z > 0
        u = np.full(len(points), -1, dtype=np.int64)
        v = np.full(len(points), -1, dtype=np.int64)
        zf = z[front]
        u[front] = np.rint(K.f * pc[front, 0] / zf + K.cx).astype(np.int64)
        v[front] = np.rint(K.f * pc[front, 1] / zf + K.cy).astype(np.int64)
        ok = front & (u >= 0) & (u < K.width) & (v >= 0) & (v < K.height)
        hit = np.zeros(len(points), dtype=bool)
        hit[ok] = mask.values[v[ok], u[ok]]
        hits += hit
    return hits


def segment_cloud(
    cloud: LabeledPointCloud,
    views: list[CameraView],
    masks: dict[str, BinaryMask],
    params: SegmentationParams = SegmentationParams(),
) -> LabeledPointCloud:
    if len(cloud) == 0:
        raise ValidationError("cannot segment an empty cloud")
    masked = [v for v in views if v.id in masks]
    if not masked:
        raise NoMaskedViews("no camera carries a mask")
    min_hits = params.min_mask_hits or default_min_hits(len(masked))
    hits = mask_hit_counts(cloud.points, masked, masks)
    labels = np.where(hits >= min_hits, Label.OBJECT, Label.FLOOR).astype(np.int8)
    return LabeledPointCloud(cloud.points, labels)
