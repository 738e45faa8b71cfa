"""ICP refinement of coarse poses and their symmetry-aware fusion."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import AllPointsRejected, DegenerateAverage, EmptyCloud, NoConsensus, ValidationError
from .geometry import RigidTransform, canonical_sign, closest_point_on_triangle, kabsch, rotation_angle_between
from .scene import SymmetrySet, expand_symmetries


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 50
    rel_change_tol: float = 1e-6
    outlier_std_mult: float = 2.0
    # "cloud_to_model": every cloud point is matched to the model surface near
    # its nearest model sample, and cloud points farther than mean + t*std are
    # dropped. "model_to_cloud" reverses the roles.
    direction: str = "cloud_to_model"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")
        if not self.rel_change_tol > 0:
            raise ValidationError("rel_change_tol must be positive")
        if not self.outlier_std_mult > 0:
            raise ValidationError("outlier_std_mult must be positive")
        if self.direction not in ("cloud_to_model", "model_to_cloud"):
            raise ValidationError(f"unknown ICP direction {self.direction!r}")


@dataclass
class IcpResult:
    pose: RigidTransform
    mse_history: list
    iterations: int
    n_kept: int


def _filtered(d: np.ndarray, t: float) -> np.ndarray:
    return d <= d.mean() + t * d.std()


def icp(
    model_samples,
    init: RigidTransform,
    object_cloud,
    params: IcpParams = IcpParams(),
    tree: cKDTree | None = None,
    faces: np.ndarray | None = None,
) -> IcpResult:
    """Point-to-point ICP with a mean + t*std distance filter.

    ``tree`` may be a prebuilt KD-tree over the model samples (cloud_to_model)
    or over the cloud (model_to_cloud) to share it across many runs.
    ``faces`` (n_samples, 3, 3) holds the triangle each sample was drawn from;
    with it, cloud_to_model matches every cloud point to its closest point on
    the triangle of its nearest sample instead of to the sample itself, which
    removes most of the sampling bias on a noiseless cloud. The
    returned MSE history is non-increasing: a step that would raise the
    filtered MSE is rolled back and the iteration stops.
    """
    model_samples = np.asarray(model_samples, dtype=float).reshape(-1, 3)
    cloud = np.asarray(object_cloud, dtype=float).reshape(-1, 3)
    if len(cloud) == 0:
        raise EmptyCloud("object cloud is empty")
    if len(model_samples) == 0:
        raise EmptyCloud("no model samples")
    c2m = params.direction == "cloud_to_model"
    if faces is not None:
        faces = np.asarray(faces, dtype=float)
        if faces.shape != (len(model_samples), 3, 3):
            raise ValidationError("faces must be (n_samples, 3, 3)")
    if tree is None:
        tree = cKDTree(model_samples if c2m else cloud)

    def evaluate(T: RigidTransform):
        # cloud_to_model returns the matched model point per cloud point,
        # model_to_cloud the matched cloud index per model sample
        if c2m:
            local = T.inverse().apply(cloud)
            d, nn = tree.query(local)
            if faces is None:
                match = model_samples[nn]
            else:
                tri = faces[nn]
                match = closest_point_on_triangle(local, tri[:, 0], tri[:, 1], tri[:, 2])
                d = np.linalg.norm(match - local, axis=1)
        else:
            d, match = tree.query(T.apply(model_samples))
        keep = _filtered(d, params.outlier_std_mult)
        if keep.sum() < 3:
            raise AllPointsRejected(f"only {int(keep.sum())} correspondences survive the filter")
        return float(np.mean(d[keep] ** 2)), match, keep

    pose = prev = init
    history: list[float] = []
    kept = 0
    it = 0
    for it in range(1, params.max_iterations + 1):
        mse, match, keep = evaluate(pose)
        if history and mse > history[-1]:
            pose = prev
            break
        history.append(mse)
        kept = int(keep.sum())
        if mse == 0.0:
            break
        if len(history) > 1 and history[-2] - mse <= params.rel_change_tol * history[-2]:
            break
        prev = pose
        if c2m:
            pose = kabsch(match[keep], cloud[keep])
        else:
            pose = kabsch(model_samples[keep], cloud[match[keep]])
    else:
        mse, _, keep = evaluate(pose)
        if mse > history[-1]:
            pose = prev
        else:
            history.append(mse)
            kept = int(keep.sum())
    return IcpResult(pose, history, it, kept)


def icp_refine(model_samples, init, object_cloud, params: IcpParams = IcpParams(), faces=None) -> RigidTransform:
    return icp(model_samples, init, object_cloud, params, faces=faces).pose


def refine_all(
    model_samples, inits: list, object_cloud, params: IcpParams = IcpParams(), workers: int = 1, faces=None
) -> list[IcpResult]:
    """Run ICP from every initial pose; output order matches ``inits`` for any ``workers``."""
    model_samples = np.asarray(model_samples, dtype=float)
    cloud = np.asarray(object_cloud, dtype=float)
    if len(cloud) == 0:
        raise EmptyCloud("object cloud is empty")
    tree = cKDTree(model_samples if params.direction == "cloud_to_model" else cloud)

    def one(T):
        return icp(model_samples, T, cloud, params, tree, faces)

    if workers <= 1:
        return [one(T) for T in inits]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(one, inits))


# --------------------------------------------------------------------------- rotations


def _quat_mul_batch(q: np.ndarray, S: np.ndarray) -> np.ndarray:
    """``q (4,) * S (m, 4)`` row-wise."""
    w, x, y, z = q
    sw, sx, sy, sz = S.T
    return np.column_stack(
        [
            w * sw - x * sx - y * sy - z * sz,
            w * sx + x * sw + y * sz - z * sy,
            w * sy - x * sz + y * sw + z * sx,
            w * sz + x * sy - y * sx + z * sw,
        ]
    )


def _sym_quats(symmetries) -> np.ndarray:
    if isinstance(symmetries, np.ndarray):
        return symmetries.reshape(-1, 4)
    if isinstance(symmetries, SymmetrySet):
        symmetries = expand_symmetries(symmetries)
    return np.array([s.q for s in symmetries]).reshape(-1, 4)


def symmetry_align(reference, q, symmetries) -> np.ndarray:
    """The representative ``q * S`` closest to ``reference``; ties go to the lowest S index."""
    cands = _quat_mul_batch(np.asarray(q, dtype=float), _sym_quats(symmetries))
    dots = np.abs(cands @ np.asarray(reference, dtype=float))
    return cands[int(np.argmax(dots))]


def symmetric_rotation_error(q_est, q_gt, symmetries) -> float:
    """Smallest angle between ``q_est`` and any symmetric copy of ``q_gt``."""
    return rotation_angle_between(q_est, symmetry_align(q_est, q_gt, symmetries))


def average_quaternions(qs, weights=None) -> np.ndarray:
    """Principal eigenvector of the weighted outer-product sum, with w >= 0."""
    Q = np.asarray(qs, dtype=float).reshape(-1, 4)
    if len(Q) == 0:
        raise ValidationError("need at least one quaternion")
    w = np.ones(len(Q)) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()
    A = (Q * w[:, None]).T @ Q
    vals, vecs = np.linalg.eigh(A)
    if vals[3] - vals[2] <= 1e-9:
        raise DegenerateAverage("top two eigenvalues coincide; the mean rotation is ambiguous")
    q = vecs[:, 3]
    return canonical_sign(q / np.linalg.norm(q))


# --------------------------------------------------------------------------- fusion


@dataclass
class FusedPose:
    pose: RigidTransform
    inlier_ids: list
    per_view_pose: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)


def _pairwise_angles(Q: np.ndarray) -> np.ndarray:
    d = np.clip(np.abs(Q @ Q.T), 0.0, 1.0)
    return 2.0 * np.arccos(d)


def fuse_poses(
    refined: list,
    symmetries,
    rot_inlier: float = 0.2,
    trans_inlier: float = 0.15,
    seed: int = 0,
    reference: str = "first",
    camera_poses: dict | None = None,
    iterations: int = 500,
    realign: bool = True,
) -> FusedPose:
    """Fuse ``[(camera id, hypothesis index, pose), ...]`` into one object pose.

    Rotations are first moved to the symmetric copy nearest the reference
    rotation (the first entry, or with ``reference="medoid"`` the entry with the
    most symmetric neighbours). Each candidate pose proposes the set of poses
    within ``rot_inlier`` radians and ``trans_inlier`` metres of it; that set
    is re-centred on its own mean and re-thresholded once. The largest set wins
    (ties: earlier candidate), and its rotations and translations are averaged.
    With ``realign`` the winners' symmetric copies are re-chosen against the
    consensus rotation before the final average.
    """
    if not refined:
        raise ValidationError("nothing to fuse")
    ids = [(cid, j) for cid, j, _ in refined]
    poses = [T for _, _, T in refined]
    syms = _sym_quats(symmetries)
    Q = np.array([T.q for T in poses])
    t = np.array([T.t for T in poses])
    n = len(poses)

    ref_index = 0
    if reference == "medoid":
        counts = []
        for i in range(n):
            al = np.array([symmetry_align(Q[i], q, syms) for q in Q])
            counts.append(int((_pairwise_angles(np.vstack([Q[i], al]))[0, 1:] < rot_inlier).sum()))
        ref_index = int(np.argmax(counts))
    elif reference != "first":
        raise ValidationError(f"unknown reference mode {reference!r}")
    ref = Q[ref_index]
    aligned = np.array([symmetry_align(ref, q, syms) for q in Q])

    if n == 1:
        T = RigidTransform(aligned[0], t[0])
        return FusedPose(T, ids, _per_view(T, camera_poses), {"n_inliers": 1, "reference": ids[0]})

    if n <= iterations:
        candidates = range(n)
    else:
        candidates = [int(np.random.default_rng([seed, i]).integers(n)) for i in range(iterations)]

    def inliers_around(q, c):
        ang = 2.0 * np.arccos(np.clip(np.abs(aligned @ q), 0.0, 1.0))
        return (ang < rot_inlier) & (np.linalg.norm(t - c, axis=1) < trans_inlier)

    best_mask, best_count = None, 0
    for c in candidates:
        mask = inliers_around(aligned[c], t[c])
        if mask.sum() >= 2:
            try:
                qm = average_quaternions(aligned[mask])
            except DegenerateAverage:
                qm = aligned[c]
            refit = inliers_around(qm, t[mask].mean(axis=0))
            if refit.sum() >= mask.sum():
                mask = refit
        if mask.sum() > best_count:
            best_mask, best_count = mask, int(mask.sum())
    if best_count < 2:
        raise NoConsensus("no two refined poses agree within the rotation/translation thresholds")

    q_star = average_quaternions(aligned[best_mask])
    if realign:
        # Representatives picked against a single noisy reference can wrap by one
        # symmetry step; re-pick them against the consensus mean until stable.
        raw = Q[best_mask]
        for _ in range(5):
            reps = np.array([symmetry_align(q_star, q, syms) for q in raw])
            q_new = average_quaternions(reps)
            done = rotation_angle_between(q_new, q_star) < 1e-12
            q_star = q_new
            if done:
                break
    T = RigidTransform(q_star, t[best_mask].mean(axis=0))
    inl = [ids[k] for k in np.flatnonzero(best_mask)]
    return FusedPose(
        T,
        inl,
        _per_view(T, camera_poses),
        {"n_poses": n, "n_inliers": best_count, "reference": ids[ref_index]},
    )


def _per_view(T: RigidTransform, camera_poses: dict | None) -> dict:
    if not camera_poses:
        return {}
    return {cid: P.inverse() @ T for cid, P in camera_poses.items()}
