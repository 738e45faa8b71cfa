"""Pose error functions (VSD, MSSD, MSPD), average recall and burial-depth statistics."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonPositiveDepth, ValidationError
from .geometry import CameraIntrinsics, RigidTransform, project_points
from .scene import ReferenceModel, SymmetrySet, expand_symmetries

# Threshold grids: fractions of the object diameter, plain VSD values, and
# pixels at 640 px image width.
VSD_TAU_FRACTIONS = np.arange(1, 11) * 0.05
VSD_THETAS = np.arange(1, 11) * 0.05
MSSD_FRACTIONS = np.arange(1, 11) * 0.05
MSPD_PIXELS_640 = np.arange(1, 11) * 5.0


# --------------------------------------------------------------------------- rendering


def pixel_rays(K: CameraIntrinsics) -> np.ndarray:
    """(H, W, 3) rays with unit z through every pixel centre."""
    u = np.arange(K.width, dtype=float)
    v = np.arange(K.height, dtype=float)
    uu, vv = np.meshgrid(u, v)
    return np.dstack([(uu - K.cx) / K.f, (vv - K.cy) / K.f, np.ones_like(uu)])


def render_distance_map(model: ReferenceModel, pose: RigidTransform, K: CameraIntrinsics) -> np.ndarray:
    """Z-buffered distance map (metres from the camera centre, 0 where empty).

    ``pose`` maps model to camera coordinates. Coverage is decided at pixel
    centres with edge functions on the projected triangle; the stored value is
    the exact ray/plane intersection distance. Ties keep the lower triangle index.
    """
    V = pose.apply(model.vertices)
    H, W = K.height, K.width
    depth = np.full((H, W), np.inf)
    for tri in model.triangles:
        a, b, c = V[tri]
        z = np.array([a[2], b[2], c[2]])
        if np.all(z <= 0):
            continue
        nrm = np.cross(b - a, c - a)
        if np.all(z > 0):
            _raster_front(a, b, c, nrm, K, depth)
        else:
            _raster_crossing(a, b, c, nrm, K, depth)
    depth[~np.isfinite(depth)] = 0.0
    return depth


def _raster_front(a, b, c, nrm, K, depth):
    pa = (K.f * a[0] / a[2] + K.cx, K.f * a[1] / a[2] + K.cy)
    pb = (K.f * b[0] / b[2] + K.cx, K.f * b[1] / b[2] + K.cy)
    pc = (K.f * c[0] / c[2] + K.cx, K.f * c[1] / c[2] + K.cy)
    us = (pa[0], pb[0], pc[0])
    vs = (pa[1], pb[1], pc[1])
    u0 = max(int(np.ceil(min(us))), 0)
    u1 = min(int(np.floor(max(us))), K.width - 1)
    v0 = max(int(np.ceil(min(vs))), 0)
    v1 = min(int(np.floor(max(vs))), K.height - 1)
    if u0 > u1 or v0 > v1:
        return
    area = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pb[1] - pa[1]) * (pc[0] - pa[0])
    if area == 0:
        return
    uu, vv = np.meshgrid(np.arange(u0, u1 + 1, dtype=float), np.arange(v0, v1 + 1, dtype=float))
    e0 = (pc[0] - pb[0]) * (vv - pb[1]) - (pc[1] - pb[1]) * (uu - pb[0])
    e1 = (pa[0] - pc[0]) * (vv - pc[1]) - (pa[1] - pc[1]) * (uu - pc[0])
    e2 = (pb[0] - pa[0]) * (vv - pa[1]) - (pb[1] - pa[1]) * (uu - pa[0])
    if area > 0:
        inside = (e0 >= 0) & (e1 >= 0) & (e2 >= 0)
    else:
        inside = (e0 <= 0) & (e1 <= 0) & (e2 <= 0)
    if not inside.any():
        return
    rx = (uu[inside] - K.cx) / K.f
    ry = (vv[inside] - K.cy) / K.f
    denom = nrm[0] * rx + nrm[1] * ry + nrm[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = (nrm @ a) / denom
    dist = lam * np.sqrt(rx * rx + ry * ry + 1.0)
    dist[~(lam > 0)] = np.inf
    rows = vv[inside].astype(int)
    cols = uu[inside].astype(int)
    cur = depth[rows, cols]
    closer = dist < cur
    depth[rows[closer], cols[closer]] = dist[closer]


def _raster_crossing(a, b, c, nrm, K, depth):
    # Triangle straddles the camera plane: intersect every pixel ray in 3-D.
    rays = pixel_rays(K).reshape(-1, 3)
    lam = _ray_triangle(rays, a, b, c)
    dist = lam * np.linalg.norm(rays, axis=1)
    flat = depth.reshape(-1)
    closer = dist < flat
    flat[closer] = dist[closer]


def _ray_triangle(rays: np.ndarray, a, b, c) -> np.ndarray:
    """Ray parameter of the hit for rays from the origin (inf when missed)."""
    e1 = b - a
    e2 = c - a
    p = np.cross(rays, e2)
    det = p @ e1
    out = np.full(len(rays), np.inf)
    ok = np.abs(det) > 1e-15
    inv = np.zeros_like(det)
    inv[ok] = 1.0 / det[ok]
    s = -a
    u = (p @ s) * inv
    qv = np.cross(s, e1)
    v = (rays @ qv) * inv
    t = (qv @ e2) * inv
    hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
    out[hit] = t[hit]
    return out


# --------------------------------------------------------------------------- errors


@dataclass
class PoseErrors:
    vsd: list
    mssd: float
    mspd: float


@dataclass
class RecallReport:
    ar_vsd: float
    ar_mssd: float
    ar_mspd: float
    mean_depth_error: float | None = None
    mean_depth_ratio_error: float | None = None
    rows: list = field(default_factory=list)


def vsd(est: np.ndarray, gt: np.ndarray, tau: float) -> float:
    est = np.asarray(est)
    gt = np.asarray(gt)
    if est.shape != gt.shape:
        raise DimensionMismatch(f"distance maps differ in shape: {est.shape} vs {gt.shape}")
    if not tau > 0:
        raise ValidationError("tau must be positive")
    ve = est > 0
    vg = gt > 0
    union = int((ve | vg).sum())
    if union == 0:
        return 0.0
    good = ve & vg & (np.abs(est - gt) < tau)
    return 1.0 - int(good.sum()) / union


def _sym_matrices(model: ReferenceModel, symmetries=None) -> np.ndarray:
    syms = expand_symmetries(model.symmetries if symmetries is None else symmetries)
    return np.array([s.R for s in syms])


def _gt_copies(gt: RigidTransform, V: np.ndarray, Rs: np.ndarray) -> np.ndarray:
    # (S, n, 3); the same apply() as the estimate, so est == gt gives exactly 0
    return np.stack([gt.apply(V @ R.T) for R in Rs])


def mssd(est: RigidTransform, gt: RigidTransform, model: ReferenceModel, symmetries: SymmetrySet | None = None) -> float:
    V = model.vertices
    pe = est.apply(V)
    pg = _gt_copies(gt, V, _sym_matrices(model, symmetries))
    d = np.linalg.norm(pg - pe[None], axis=2)
    return float(d.max(axis=1).min())


def mspd(
    est: RigidTransform,
    gt: RigidTransform,
    model: ReferenceModel,
    K: CameraIntrinsics,
    symmetries: SymmetrySet | None = None,
) -> float:
    V = model.vertices
    ue = project_points(K, est.apply(V))
    pg = _gt_copies(gt, V, _sym_matrices(model, symmetries))
    if np.any(pg[..., 2] <= 0):
        raise NonPositiveDepth("a ground-truth vertex is behind the camera")
    ug = np.stack([K.f * pg[..., 0] / pg[..., 2] + K.cx, K.f * pg[..., 1] / pg[..., 2] + K.cy], axis=-1)
    d = np.linalg.norm(ug - ue[None], axis=2)
    return float(d.max(axis=1).min())


def pose_errors(est_cam: RigidTransform, gt_cam: RigidTransform, model: ReferenceModel, K: CameraIntrinsics) -> PoseErrors:
    """All three errors for one object-in-camera estimate; unprojectable poses get inf MSPD."""
    d_est = render_distance_map(model, est_cam, K)
    d_gt = render_distance_map(model, gt_cam, K)
    taus = VSD_TAU_FRACTIONS * model.diameter
    try:
        e_mspd = mspd(est_cam, gt_cam, model, K)
    except NonPositiveDepth:
        e_mspd = float("inf")
    return PoseErrors([vsd(d_est, d_gt, t) for t in taus], mssd(est_cam, gt_cam, model), e_mspd)


def _per_item(x, n):
    arr = np.asarray(x, dtype=float)
    return np.full(n, float(arr)) if arr.ndim == 0 else arr.reshape(n)


def average_recall(errors: list, model_diameter, image_width) -> RecallReport:
    """AR over the standard grids; ``model_diameter``/``image_width`` may be per-error sequences."""
    if not errors:
        raise ValidationError("no errors to average")
    n = len(errors)
    diam = _per_item(model_diameter, n)
    r = _per_item(image_width, n) / 640.0
    V = np.array([e.vsd for e in errors], dtype=float)  # (n, n_tau)
    if V.shape[1] != len(VSD_TAU_FRACTIONS):
        raise ValidationError(f"expected {len(VSD_TAU_FRACTIONS)} VSD values per pose")
    ar_vsd = float(np.mean(V[:, :, None] < VSD_THETAS[None, None, :]))
    m = np.array([e.mssd for e in errors], dtype=float)
    ar_mssd = float(np.mean(m[:, None] < diam[:, None] * MSSD_FRACTIONS[None, :]))
    p = np.array([e.mspd for e in errors], dtype=float)
    ar_mspd = float(np.mean(p[:, None] < r[:, None] * MSPD_PIXELS_640[None, :]))
    return RecallReport(ar_vsd, ar_mssd, ar_mspd)


def burial_error_stats(pairs: list) -> tuple[float, float]:
    """Mean |depth error| and mean |depth-ratio error| over (predicted, labelled) pairs."""
    if not pairs:
        raise ValidationError("no burial pairs")
    dd = [abs(p.depth - g.depth) for p, g in pairs]
    rr = [abs(p.depth_ratio - g.depth_ratio) for p, g in pairs]
    return float(np.mean(dd)), float(np.mean(rr))


CSV_COLUMNS = ["id", "lat", "lon", "gt_depth_m", "pred_depth_m", "error_m", "abs_error_m", "ratio_error"]


def write_burial_csv(rows: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: row.get(k, "") for k in CSV_COLUMNS})
