"""Metric scale of an unscaled reconstruction from metric per-camera object poses.

Each camera ``i`` and hypothesis ``j`` implies an object position. With the
reconstruction scaled by ``s``, the camera centre moves to ``s * t_cam`` while
the metric object offset is unchanged, so the implied position is
``t_obj + t_cam * (s - 1)`` with ``t_obj`` the unscaled composition. The scale
that makes these positions agree best minimises the trace of their covariance,
which is a 1-D least-squares problem with a closed-form solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateCameras, NoConsensus, ValidationError
from .geometry import RigidTransform, compose
from .scene import CameraView, LabeledPointCloud, SceneInput


@dataclass
class ScaleSolution:
    s: float
    inlier_ids: list  # [(camera id, hypothesis index), ...]
    objective: float
    diagnostics: dict = field(default_factory=dict)


def implied_object_position(view: CameraView, j: int, s: float) -> np.ndarray:
    t_obj = compose(view.world_pose, view.hypotheses[j]).t
    return t_obj + view.world_pose.t * (s - 1.0)


def scale_samples(views) -> tuple[list, np.ndarray, np.ndarray]:
    """Flatten views into ``ids, t_cam (n, 3), t_obj (n, 3)``, one row per hypothesis."""
    ids, tc, to = [], [], []
    for v in views:
        for j, h in enumerate(v.hypotheses):
            ids.append((v.id, j))
            tc.append(v.world_pose.t)
            to.append(compose(v.world_pose, h).t)
    return ids, np.array(tc).reshape(-1, 3), np.array(to).reshape(-1, 3)


def _split(samples):
    if isinstance(samples, tuple) and len(samples) == 2 and np.ndim(samples[0]) == 2:
        tc, to = samples
    else:
        samples = list(samples)
        tc = np.array([s[0] for s in samples], dtype=float).reshape(-1, 3)
        to = np.array([s[1] for s in samples], dtype=float).reshape(-1, 3)
    return np.asarray(tc, dtype=float), np.asarray(to, dtype=float)


def variance_trace(samples, s: float) -> float:
    tc, to = _split(samples)
    p = to + tc * (s - 1.0)
    return float(((p - p.mean(axis=0)) ** 2).sum(axis=1).mean())


def solve_scale_closed_form(samples) -> float:
    """Minimiser of ``variance_trace`` over s.

    ``samples`` is a sequence of ``(t_cam, t_obj)`` pairs or a tuple of two
    (n, 3) arrays. Means are taken over pairs, so cameras contributing
    different numbers of hypotheses are weighted by their pair count; with an
    equal count per camera this is the same as ``solve_scale_balanced``.
    """
    tc, to = _split(samples)
    if len(tc) < 2:
        raise ValidationError("need at least two samples")
    dc = tc - tc.mean(axis=0)
    do = to - to.mean(axis=0)
    denom = float((dc * dc).sum())
    if np.all(tc == tc[0]) or denom <= 1e-24 * (1.0 + float((tc * tc).sum())):
        raise DegenerateCameras("all camera positions coincide")
    return 1.0 - float((dc * do).sum()) / denom


def solve_scale_balanced(t_cam, t_obj) -> float:
    """Same minimiser written per camera: ``t_cam`` (N, 3), ``t_obj`` (N, H, 3)."""
    t_cam = np.asarray(t_cam, dtype=float)
    t_obj = np.asarray(t_obj, dtype=float)
    H = t_obj.shape[1]
    dc = t_cam - t_cam.mean(axis=0)
    do = t_obj - t_obj.reshape(-1, 3).mean(axis=0)
    denom = H * float((dc * dc).sum())
    if denom == 0.0:
        raise DegenerateCameras("all camera positions coincide")
    num = float(np.einsum("ik,ijk->", dc, do))
    return 1.0 - num / denom


def solve_scale_ransac(
    views,
    inlier_dist: float = 0.15,
    iterations: int = 500,
    seed: int = 0,
    min_inliers: int | None = None,
) -> ScaleSolution:
    """Robust scale from minimal samples of two hypotheses seen by different cameras.

    A candidate's inliers are the hypotheses whose implied position, at the
    candidate scale, lies within ``inlier_dist`` metres of the sample centroid.
    The winner (most inliers, then lower variance, then earlier iteration) is
    re-solved in closed form over its inliers. ``min_inliers`` defaults to
    ``min(3, number of hypotheses)``: a bare two-point sample always agrees
    with itself, so it carries no evidence on its own.
    """
    if inlier_dist <= 0:
        raise ValidationError("inlier_dist must be positive")
    ids, tc, to = scale_samples(views)
    n = len(ids)
    cam_of = np.array([i for i, v in enumerate(views) for _ in v.hypotheses], dtype=np.int64)
    if n < 2 or len({tuple(t) for t in tc.tolist()}) < 2:
        raise DegenerateCameras("need hypotheses from at least two distinct camera positions")
    if min_inliers is None:
        min_inliers = min(3, n)

    best = None  # (count, -objective, iteration, s, mask)
    for it in range(iterations):
        rng = np.random.default_rng([seed, it])
        a = int(rng.integers(n))
        others = np.flatnonzero(cam_of != cam_of[a])
        b = int(others[rng.integers(len(others))])
        pair = (tc[[a, b]], to[[a, b]])
        if np.all(pair[0][0] == pair[0][1]):
            continue
        s = solve_scale_closed_form(pair)
        if not s > 0:
            continue
        p = to + tc * (s - 1.0)
        centre = 0.5 * (p[a] + p[b])
        mask = np.linalg.norm(p - centre, axis=1) < inlier_dist
        count = int(mask.sum())
        if count < 2 or len({tuple(t) for t in tc[mask].tolist()}) < 2:
            continue
        obj = variance_trace((tc[mask], to[mask]), s)
        key = (count, -obj)
        if best is None or key > best[0]:
            best = (key, it, s, mask)

    if best is None or best[0][0] < min_inliers:
        got = 0 if best is None else best[0][0]
        raise NoConsensus(f"best scale hypothesis has {got} inliers, need {min_inliers}")

    (_, _), it, s_sample, mask = best
    s = solve_scale_closed_form((tc[mask], to[mask]))
    if not s > 0:
        raise NoConsensus("re-solved scale over the inliers is not positive")
    inliers = [ids[k] for k in np.flatnonzero(mask)]
    per_cam = {}
    for cid, _ in inliers:
        per_cam[cid] = per_cam.get(cid, 0) + 1
    return ScaleSolution(
        s=s,
        inlier_ids=inliers,
        objective=variance_trace((tc[mask], to[mask]), s),
        diagnostics={
            "n_hypotheses": n,
            "n_inliers": len(inliers),
            "winning_iteration": it,
            "sample_scale": s_sample,
            # uneven per-camera counts: pair-weighted means are used
            "unbalanced_inliers": len(set(per_cam.values())) > 1,
        },
    )


def apply_scale(scene: SceneInput, s: float) -> SceneInput:
    """Scale camera centres and cloud points by ``s``; rotations and hypotheses are kept."""
    if not s > 0:
        raise ValidationError("scale must be positive")
    cams = tuple(
        replace(c, world_pose=RigidTransform(c.world_pose.q, c.world_pose.t * s)) for c in scene.cameras
    )
    cloud = LabeledPointCloud(scene.cloud.points * s, scene.cloud.labels)
    return replace(scene, cameras=cams, cloud=cloud, metric=True)
