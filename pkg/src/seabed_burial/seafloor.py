"""Seafloor plane fitting, the floor-aligned frame, and burial depth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometry, NoConsensus, ValidationError
from .geometry import RigidTransform, compose
from .scene import ReferenceModel


@dataclass(frozen=True, eq=False)
class Plane:
    """Points ``p`` with ``normal @ p == offset``; ``normal`` points up (toward the cameras)."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if not np.isfinite(norm) or norm == 0:
            raise ValidationError("plane normal must be non-zero")
        if abs(norm - 1.0) > 1e-12:
            n = n / norm
            object.__setattr__(self, "offset", float(self.offset) / norm)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    def signed_distance(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.normal - self.offset

    def flipped(self) -> Plane:
        return Plane(-self.normal, -self.offset)

    def oriented_toward(self, point) -> Plane:
        return self.flipped() if self.signed_distance(point) < 0 else self


@dataclass
class BurialResult:
    depth: float
    oriented_height: float
    depth_ratio: float
    z_bot: float
    floor_to_world: RigidTransform


def _tls_plane(points: np.ndarray) -> tuple[np.ndarray, float]:
    c = points.mean(axis=0)
    _, _, Vt = np.linalg.svd(points - c, full_matrices=False)
    n = Vt[-1]
    return n, float(n @ c)


def _orient(normal: np.ndarray, offset: float, up_hint) -> Plane:
    plane = Plane(normal, offset)
    if up_hint is not None:
        return plane.oriented_toward(up_hint)
    # no hint: make the first non-zero of (z, y, x) positive
    for c in normal[::-1]:
        if abs(c) > 1e-12:
            return plane if c > 0 else plane.flipped()
    return plane


def fit_plane_ransac(
    floor_points,
    inlier_dist: float = 0.05,
    iterations: int = 500,
    seed: int = 0,
    up_hint=None,
) -> Plane:
    """Three-point RANSAC, then total least squares over the winning inliers.

    ``up_hint`` (usually the mean camera centre) selects the normal sign;
    without it the normal's z component is made positive.
    """
    P = np.asarray(floor_points, dtype=float).reshape(-1, 3)
    if len(P) < 3:
        raise DegenerateGeometry("need at least three points")
    if inlier_dist <= 0:
        raise ValidationError("inlier_dist must be positive")
    spread = np.linalg.svd(P - P.mean(axis=0), compute_uv=False)
    if spread[1] <= 1e-12 * max(spread[0], 1.0):
        raise DegenerateGeometry("points are collinear or coincident")

    n_pts = len(P)
    best = None  # (count, iteration, normal, offset)
    for it in range(iterations):
        rng = np.random.default_rng([seed, it])
        idx = rng.choice(n_pts, size=3, replace=False)
        a, b, c = P[idx]
        nrm = np.cross(b - a, c - a)
        ln = np.linalg.norm(nrm)
        if ln <= 1e-12 * max(np.linalg.norm(b - a) * np.linalg.norm(c - a), 1e-300):
            continue
        nrm = nrm / ln
        count = int((np.abs(P @ nrm - nrm @ a) < inlier_dist).sum())
        if best is None or count > best[0]:
            best = (count, it, nrm, float(nrm @ a))
    if best is None or best[0] < 3:
        raise NoConsensus("no plane hypothesis gathered three inliers")
    _, _, nrm, off = best
    inl = P[np.abs(P @ nrm - off) < inlier_dist]
    n_ref, off_ref = _tls_plane(inl)
    return _orient(n_ref, off_ref, up_hint)


def floor_frame(plane: Plane) -> RigidTransform:
    """World -> floor transform: the plane becomes z = 0 with +z along the normal.

    The in-plane gauge sends the projection of the world x axis onto the
    floor x axis (world y when x is parallel to the normal).
    """
    z = plane.normal
    ref = np.array([1.0, 0.0, 0.0])
    x = ref - (ref @ z) * z
    if np.linalg.norm(x) < 1e-9:
        ref = np.array([0.0, 1.0, 0.0])
        x = ref - (ref @ z) * z
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.vstack([x, y, z])
    return RigidTransform.from_rt(R, [0.0, 0.0, -plane.offset])


def burial_depth(model: ReferenceModel, object_pose: RigidTransform, plane: Plane) -> BurialResult:
    """Depth of the lowest mesh point below the plane.

    A linear height function over a triangle is minimised at a corner, so the
    lowest point of the surface is always a vertex, convex mesh or not.
    """
    W = floor_frame(plane)
    z = compose(W, object_pose).apply(model.vertices)[:, 2]
    z_bot = float(z.min())
    height = float(z.max() - z_bot)
    depth = -z_bot if z_bot < 0 else 0.0
    return BurialResult(
        depth=depth,
        oriented_height=height,
        depth_ratio=min(1.0, depth / height) if height > 0 else 0.0,
        z_bot=z_bot,
        floor_to_world=W.inverse(),
    )
