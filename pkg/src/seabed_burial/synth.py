"""Synthetic partially buried objects with full ground truth.

A scene is built in a floor frame (floor = z=0) that is tilted and shifted
into the world. Cameras sit on an arc around the object looking at its exposed
part. The reconstruction a photogrammetry tool would return is emulated by
dividing every world position by ``true_scale``; hypotheses stay metric.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .geometry import (
    CameraIntrinsics,
    RigidTransform,
    look_at,
    quat_from_axis_angle,
    quat_mul,
    random_quaternion,
)
from .metrics import pixel_rays, render_distance_map
from .scene import (
    BinaryMask,
    CameraView,
    Label,
    LabeledPointCloud,
    ReferenceModel,
    SceneInput,
    dump_json,
    pose_to_json,
    sample_surface,
    save_scene,
    symmetry_to_json,
)
from .seafloor import Plane, burial_depth


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_cameras: int = 8
    n_hypotheses: int = 5
    arc_degrees: float = 180.0
    camera_distance: float = 3.0
    camera_elevation: float = 0.6  # radians above the floor
    true_scale: float = 2.0  # metres per reconstruction unit
    burial_fraction: float = 0.3
    hypothesis_noise: tuple = (0.0, 0.0)  # (rotation sigma rad, translation sigma m)
    outlier_fraction: float = 0.0
    cloud_noise: float = 0.0
    cloud_density: float = 1500.0  # points per square metre
    floor_tilt: float = 0.1
    floor_radius: float | None = None  # None: 0.5 m beyond the object diameter
    object_tilt: float | None = None  # axis tilt from vertical; None: uniform in [0, pi/2]
    focal: float = 500.0
    width: int = 640
    height: int = 480
    label_cloud: bool = True  # False: cloud is unlabeled and must be segmented
    lat: float | None = None
    lon: float | None = None

    def __post_init__(self):
        if self.n_cameras < 2:
            raise ValidationError("n_cameras must be >= 2")
        if self.n_hypotheses < 1:
            raise ValidationError("n_hypotheses must be >= 1")
        if not 0.0 <= self.burial_fraction < 1.0:
            raise ValidationError("burial_fraction must be in [0, 1)")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise ValidationError("outlier_fraction must be in [0, 1)")
        if not (self.true_scale > 0 and self.camera_distance > 0 and self.cloud_density > 0):
            raise ValidationError("true_scale, camera_distance and cloud_density must be positive")
        if self.cloud_noise < 0 or min(self.hypothesis_noise) < 0:
            raise ValidationError("noise levels must be non-negative")
        if not 0 < self.arc_degrees <= 360:
            raise ValidationError("arc_degrees must be in (0, 360]")
        object.__setattr__(self, "hypothesis_noise", tuple(float(x) for x in self.hypothesis_noise))

    @classmethod
    def from_dict(cls, d: dict) -> SynthConfig:
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValidationError(f"unknown SynthConfig fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class GroundTruth:
    object_pose: RigidTransform
    plane: Plane
    scale: float
    burial_depth: float
    oriented_height: float
    depth_ratio: float
    camera_poses: dict  # id -> metric camera-to-world pose
    intrinsics: CameraIntrinsics
    true_hypotheses: dict  # id -> object-in-camera pose
    outlier_ids: list = field(default_factory=list)
    lat: float = 0.0
    lon: float = 0.0


def _rotation_noise(rng, sigma: float) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return quat_from_axis_angle(axis, rng.normal(0.0, sigma)) if sigma > 0 else np.array([1.0, 0, 0, 0])


def _ball(rng, radius: float) -> np.ndarray:
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    return d * radius * rng.random() ** (1.0 / 3.0)


def generate_scene(model: ReferenceModel, cfg: SynthConfig) -> tuple[SceneInput, GroundTruth]:
    rng = np.random.default_rng(cfg.seed)

    # floor frame -> world
    tilt_axis_angle = rng.uniform(0, 2 * np.pi)
    tilt_axis = np.array([np.cos(tilt_axis_angle), np.sin(tilt_axis_angle), 0.0])
    q_floor = quat_mul(
        quat_from_axis_angle(tilt_axis, cfg.floor_tilt),
        quat_from_axis_angle([0, 0, 1], rng.uniform(0, 2 * np.pi)),
    )
    floor_to_world = RigidTransform(q_floor, rng.uniform(-2.0, 2.0, size=3))
    normal = floor_to_world.R[:, 2]
    plane = Plane(normal, float(normal @ floor_to_world.t))

    # object in the floor frame
    obj_tilt = rng.uniform(0, np.pi / 2) if cfg.object_tilt is None else cfg.object_tilt
    q_obj = quat_mul(
        quat_from_axis_angle([0, 0, 1], rng.uniform(0, 2 * np.pi)),
        quat_from_axis_angle([1, 0, 0], obj_tilt),
    )
    Rv = RigidTransform(q_obj, np.zeros(3)).apply(model.vertices)
    zmin, zmax = Rv[:, 2].min(), Rv[:, 2].max()
    h = zmax - zmin
    t_obj = np.array([0.0, 0.0, -cfg.burial_fraction * h - zmin])
    obj_floor = RigidTransform(q_obj, t_obj)
    object_pose = floor_to_world @ obj_floor
    top = zmax + t_obj[2]
    target_floor = np.array([0.0, 0.0, 0.5 * max(top, 0.0)])

    # cameras on an arc, jittered in range
    K = CameraIntrinsics(cfg.focal, (cfg.width - 1) / 2.0, (cfg.height - 1) / 2.0, cfg.width, cfg.height)
    az0 = rng.uniform(0, 2 * np.pi)
    arc = np.deg2rad(cfg.arc_degrees)
    steps = cfg.n_cameras if cfg.arc_degrees >= 360 else cfg.n_cameras - 1
    cam_poses = {}
    for k in range(cfg.n_cameras):
        az = az0 + arc * k / steps
        d = cfg.camera_distance * rng.uniform(0.9, 1.1)
        el = cfg.camera_elevation * rng.uniform(0.85, 1.15)
        eye = target_floor + d * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
        cam_poses[f"cam{k:02d}"] = floor_to_world @ look_at(eye, target_floor)

    # masks: object silhouette where the object is in front of the floor
    masks, obj_maps = {}, {}
    rays = pixel_rays(K)
    ray_len = np.linalg.norm(rays, axis=2)
    for cid, P in cam_poses.items():
        cam_T_obj = P.inverse() @ object_pose
        dmap = render_distance_map(model, cam_T_obj, K)
        n_c = P.R.T @ plane.normal
        off_c = plane.offset - plane.normal @ P.t
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = off_c / (rays @ n_c)
        floor_dist = np.where(lam > 0, lam * ray_len, np.inf)
        masks[cid] = BinaryMask((dmap > 0) & (dmap < floor_dist))
        obj_maps[cid] = dmap

    # hypotheses
    ids = list(cam_poses)
    true_h = {cid: cam_poses[cid].inverse() @ object_pose for cid in ids}
    n_total = cfg.n_cameras * cfg.n_hypotheses
    n_out = int(round(cfg.outlier_fraction * n_total))
    out_set = set(rng.choice(n_total, size=n_out, replace=False).tolist()) if n_out else set()
    sig_r, sig_t = cfg.hypothesis_noise
    hyps, outlier_ids = {}, []
    for ci, cid in enumerate(ids):
        T = true_h[cid]
        lst = []
        for j in range(cfg.n_hypotheses):
            flat = ci * cfg.n_hypotheses + j
            if flat in out_set:
                lst.append(RigidTransform(random_quaternion(rng), T.t + _ball(rng, 2 * cfg.camera_distance)))
                outlier_ids.append((cid, j))
            else:
                q = quat_mul(_rotation_noise(rng, sig_r), T.q)
                lst.append(RigidTransform(q, T.t + rng.normal(0.0, sig_t, size=3)))
        hyps[cid] = lst

    # point cloud: exposed object surface + visible floor disc
    area = float(model.triangle_areas().sum())
    obj_pts = object_pose.apply(sample_surface(model, max(1, int(round(area * cfg.cloud_density))), cfg.seed))
    obj_pts = obj_pts[plane.signed_distance(obj_pts) > 0]
    radius = cfg.floor_radius or (model.diameter + 0.5)
    n_floor = int(round(np.pi * radius**2 * cfg.cloud_density))
    rr = radius * np.sqrt(rng.random(n_floor))
    th = rng.uniform(0, 2 * np.pi, n_floor)
    floor_pts = floor_to_world.apply(np.column_stack([rr * np.cos(th), rr * np.sin(th), np.zeros(n_floor)]))
    floor_pts = floor_pts[_visible_somewhere(floor_pts, cam_poses, obj_maps, K)]
    if cfg.cloud_noise > 0:
        obj_pts = obj_pts + rng.normal(0.0, cfg.cloud_noise, obj_pts.shape)
        floor_pts = floor_pts + rng.normal(0.0, cfg.cloud_noise, floor_pts.shape)
    pts = np.vstack([obj_pts, floor_pts])
    if cfg.label_cloud:
        labels = np.concatenate(
            [np.full(len(obj_pts), Label.OBJECT), np.full(len(floor_pts), Label.FLOOR)]
        )
    else:
        labels = np.zeros(len(pts))

    s = cfg.true_scale
    cameras = tuple(
        CameraView(cid, K, RigidTransform(P.q, P.t / s), tuple(hyps[cid]), f"masks/{cid}.pgm")
        for cid, P in cam_poses.items()
    )
    scene = SceneInput(cameras, LabeledPointCloud(pts / s, labels), model, masks, metric=False)

    b = burial_depth(model, object_pose, plane)
    lat = cfg.lat if cfg.lat is not None else float(33.58 + 0.02 * rng.random())
    lon = cfg.lon if cfg.lon is not None else float(-118.49 + 0.02 * rng.random())
    gt = GroundTruth(
        object_pose=object_pose,
        plane=plane,
        scale=s,
        burial_depth=b.depth,
        oriented_height=b.oriented_height,
        depth_ratio=b.depth_ratio,
        camera_poses=cam_poses,
        intrinsics=K,
        true_hypotheses=true_h,
        outlier_ids=outlier_ids,
        lat=lat,
        lon=lon,
    )
    return scene, gt


def _visible_somewhere(points, cam_poses, obj_maps, K) -> np.ndarray:
    """Points seen unoccluded by the object in at least one camera."""
    vis = np.zeros(len(points), dtype=bool)
    for cid, P in cam_poses.items():
        pc = P.inverse().apply(points)
        z = pc[:, 2]
        front = z > 1e-9
        u = np.full(len(points), -1)
        v = np.full(len(points), -1)
        u[front] = np.rint(K.f * pc[front, 0] / z[front] + K.cx)
        v[front] = np.rint(K.f * pc[front, 1] / z[front] + K.cy)
        ok = front & (u >= 0) & (u < K.width) & (v >= 0) & (v < K.height)
        occ = np.zeros(len(points), dtype=bool)
        d_obj = obj_maps[cid][v[ok], u[ok]]
        occ[ok] = (d_obj > 0) & (d_obj < np.linalg.norm(pc[ok], axis=1))
        vis |= ok & ~occ
    return vis


# --------------------------------------------------------------------------- files


def gt_document(gt: GroundTruth, model: ReferenceModel, scene_id: str) -> dict:
    K = gt.intrinsics
    return {
        "schema_version": 1,
        "id": scene_id,
        "lat": gt.lat,
        "lon": gt.lon,
        "scale": gt.scale,
        "object_pose": pose_to_json(gt.object_pose),
        "plane": {"normal": gt.plane.normal.tolist(), "offset": gt.plane.offset},
        "burial_depth": gt.burial_depth,
        "oriented_height": gt.oriented_height,
        "depth_ratio": gt.depth_ratio,
        "model": {"mesh": "model.obj", "symmetry": symmetry_to_json(model.symmetries)},
        "intrinsics": {"f": K.f, "cx": K.cx, "cy": K.cy, "width": K.width, "height": K.height},
        "cameras": [{"id": cid, **pose_to_json(P)} for cid, P in gt.camera_poses.items()],
        "true_hypotheses": {cid: pose_to_json(T) for cid, T in gt.true_hypotheses.items()},
        "outlier_ids": [list(x) for x in gt.outlier_ids],
    }


def write_synthetic(scene: SceneInput, gt: GroundTruth, out_dir, scene_id: str | None = None) -> dict:
    """Write scene files plus gt.json; returns the written paths by role."""
    out = Path(out_dir)
    scene_path = save_scene(scene, out)
    sid = scene_id or out.name
    gt_path = out / "gt.json"
    gt_path.write_text(dump_json(gt_document(gt, scene.model, sid)))
    return {
        "scene": scene_path,
        "cloud": out / "cloud.ply",
        "model": out / "model.obj",
        "masks": sorted((out / "masks").glob("*.pgm")),
        "gt": gt_path,
    }


def config_document(cfg: SynthConfig) -> dict:
    d = asdict(cfg)
    d["hypothesis_noise"] = list(cfg.hypothesis_noise)
    return d


def load_synth_config(path) -> SynthConfig:
    d = json.loads(Path(path).read_text())
    if "hypothesis_noise" in d:
        d["hypothesis_noise"] = tuple(d["hypothesis_noise"])
    return SynthConfig.from_dict(d)


def with_field(cfg: SynthConfig, name: str, value) -> SynthConfig:
    if name not in {f.name for f in fields(SynthConfig)}:
        raise ValidationError(f"{name!r} is not a SynthConfig field")
    return replace(cfg, **{name: value})

