"""End-to-end estimate: segment -> scale -> ICP -> fuse -> plane -> burial."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import errors as E
from .geometry import RigidTransform
from .refine import FusedPose, IcpParams, fuse_poses, refine_all
from .scale import ScaleSolution, apply_scale, solve_scale_ransac
from .scene import Label, ReferenceModel, SceneInput, pose_to_json, sample_surface
from .seafloor import BurialResult, Plane, burial_depth, fit_plane_ransac
from .segmentation import SegmentationParams, segment_cloud

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_PARSE = 10
EXIT_VALIDATION = 11
STAGE_EXIT = {"segment": 11, "scale": 20, "icp": 21, "fuse": 22, "plane": 23, "burial": 1}


@dataclass(frozen=True)
class PipelineConfig:
    scale_inlier_m: float = 0.15
    plane_inlier_m: float = 0.05
    rot_inlier_rad: float = 0.2
    trans_inlier_m: float = 0.15
    icp_std_mult: float = 2.0
    icp_max_iterations: int = 50
    icp_rel_tol: float = 1e-6
    icp_direction: str = "cloud_to_model"
    ransac_iterations: int = 500
    model_samples: int = 20000
    min_mask_hits: int | None = None
    reference: str = "first"
    realign_to_mean: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("scale_inlier_m", "plane_inlier_m", "rot_inlier_rad", "trans_inlier_m", "icp_std_mult"):
            if not getattr(self, name) > 0:
                raise E.ValidationError(f"{name} must be positive")
        if self.ransac_iterations < 1 or self.model_samples < 1:
            raise E.ValidationError("ransac_iterations and model_samples must be >= 1")


@dataclass
class SceneEstimate:
    scale: ScaleSolution | None = None
    fused: FusedPose | None = None
    plane: Plane | None = None
    burial: BurialResult | None = None
    timings: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    failed_stage: str | None = None
    error_type: str | None = None
    error_message: str | None = None

    @property
    def ok(self) -> bool:
        return self.failed_stage is None

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.ok else STAGE_EXIT[self.failed_stage]


class _Stage:
    def __init__(self, est: SceneEstimate, name: str):
        self.est, self.name = est, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.est.timings[self.name] = time.perf_counter() - self.t0
        if exc is not None and isinstance(exc, E.BurialError):
            self.est.failed_stage = self.name
            self.est.error_type = type(exc).__name__
            self.est.error_message = str(exc)
            log.warning("stage %s failed: %s: %s", self.name, type(exc).__name__, exc)
            raise _Abort from exc
        return False


class _Abort(Exception):
    pass


def run_pipeline(
    scene: SceneInput,
    config: PipelineConfig = PipelineConfig(),
    model: ReferenceModel | None = None,
    workers: int = 1,
) -> SceneEstimate:
    """Run every stage; a typed failure stops the run and is recorded on the estimate."""
    model = model or scene.model
    if model is None:
        raise E.ValidationError("no reference model given")
    est = SceneEstimate()
    try:
        _run(scene, config, model, workers, est)
    except _Abort:
        pass
    return est


def _run(scene, cfg: PipelineConfig, model, workers, est: SceneEstimate):
    with _Stage(est, "segment"):
        cloud = scene.cloud
        if not cloud.is_labeled:
            if not scene.masks:
                raise E.ValidationError("cloud is unlabeled and no masks are available")
            cloud = segment_cloud(cloud, list(scene.cameras), scene.masks, SegmentationParams(cfg.min_mask_hits))
            scene = SceneInput(scene.cameras, cloud, scene.model, scene.masks, scene.metric)
            est.diagnostics["segmented"] = True
        else:
            est.diagnostics["segmented"] = False
        est.diagnostics["n_object_points"] = int((cloud.labels == Label.OBJECT).sum())
        est.diagnostics["n_floor_points"] = int((cloud.labels == Label.FLOOR).sum())

    with _Stage(est, "scale"):
        views = [c for c in scene.cameras if c.hypotheses]
        est.scale = solve_scale_ransac(views, cfg.scale_inlier_m, cfg.ransac_iterations, cfg.seed)
        est.diagnostics["scale_inliers"] = len(est.scale.inlier_ids)
        metric = apply_scale(scene, est.scale.s)

    with _Stage(est, "icp"):
        obj_pts = metric.cloud.select(Label.OBJECT)
        if len(obj_pts) == 0:
            raise E.EmptyCloud("no object points after segmentation")
        samples, tri = sample_surface(model, cfg.model_samples, cfg.seed, return_triangles=True)
        faces = model.vertices[model.triangles[tri]]
        keys, inits = [], []
        for c in metric.cameras:
            for j, h in enumerate(c.hypotheses):
                keys.append((c.id, j))
                inits.append(c.world_pose @ h)
        params = IcpParams(cfg.icp_max_iterations, cfg.icp_rel_tol, cfg.icp_std_mult, cfg.icp_direction)
        results = refine_all(samples, inits, obj_pts, params, workers, faces)
        est.diagnostics["icp_iterations"] = [r.iterations for r in results]

    with _Stage(est, "fuse"):
        refined = [(cid, j, r.pose) for (cid, j), r in zip(keys, results)]
        est.fused = fuse_poses(
            refined,
            model.symmetries,
            cfg.rot_inlier_rad,
            cfg.trans_inlier_m,
            cfg.seed,
            cfg.reference,
            camera_poses={c.id: c.world_pose for c in metric.cameras},
            iterations=cfg.ransac_iterations,
            realign=cfg.realign_to_mean,
        )
        est.diagnostics["fuse_inliers"] = len(est.fused.inlier_ids)

    with _Stage(est, "plane"):
        floor = metric.cloud.select(Label.FLOOR)
        up = np.mean([c.world_pose.t for c in metric.cameras], axis=0)
        est.plane = fit_plane_ransac(floor, cfg.plane_inlier_m, cfg.ransac_iterations, cfg.seed, up_hint=up)
        est.diagnostics["plane_inliers"] = int(
            (np.abs(est.plane.signed_distance(floor)) < cfg.plane_inlier_m).sum()
        )

    with _Stage(est, "burial"):
        est.burial = burial_depth(model, est.fused.pose, est.plane)


def _pose_or_none(T: RigidTransform | None):
    return None if T is None else pose_to_json(T)


def report_document(est: SceneEstimate, config: PipelineConfig, scene_id: str, provenance: dict | None = None) -> dict:
    """JSON-ready report. Timings are left out so reruns are byte-identical."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "id": scene_id,
        "status": "ok" if est.ok else "failed",
        "failed_stage": est.failed_stage,
        "error": None if est.ok else {"type": est.error_type, "message": est.error_message},
        "provenance": {"config": asdict(config), **(provenance or {})},
        "scale": None,
        "fused": None,
        "plane": None,
        "burial": None,
        "diagnostics": est.diagnostics,
    }
    if est.scale is not None:
        doc["scale"] = {
            "s": est.scale.s,
            "objective": est.scale.objective,
            "inlier_ids": [list(x) for x in est.scale.inlier_ids],
            "diagnostics": est.scale.diagnostics,
        }
    if est.fused is not None:
        doc["fused"] = {
            "pose": pose_to_json(est.fused.pose),
            "inlier_ids": [list(x) for x in est.fused.inlier_ids],
            "per_view_pose": {k: pose_to_json(v) for k, v in est.fused.per_view_pose.items()},
            "diagnostics": {k: (list(v) if isinstance(v, tuple) else v) for k, v in est.fused.diagnostics.items()},
        }
    if est.plane is not None:
        doc["plane"] = {"normal": est.plane.normal.tolist(), "offset": est.plane.offset}
    if est.burial is not None:
        b = est.burial
        doc["burial"] = {
            "depth": b.depth,
            "oriented_height": b.oriented_height,
            "depth_ratio": b.depth_ratio,
            "z_bot": b.z_bot,
            "floor_to_world": _pose_or_none(b.floor_to_world),
        }
    return doc


def infer_sedimentation_rate(depth_m: float, dump_year: float, observation_year: float) -> float:
    """Burial rate in cm per year, assuming the object sat on the surface when dumped."""
    if not observation_year > dump_year:
        raise E.InvalidYears("observation year must be after the dump year")
    if depth_m < 0:
        raise E.ValidationError("depth must be non-negative")
    return 100.0 * depth_m / (observation_year - dump_year)
