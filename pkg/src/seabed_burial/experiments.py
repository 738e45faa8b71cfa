"""Synthetic experiments: parameter sweeps and the single-hypothesis baseline."""

from __future__ import annotations

import numpy as np

from .errors import BurialError
from .metrics import mssd
from .pipeline import PipelineConfig, run_pipeline
from .scene import ReferenceModel
from .seafloor import burial_depth
from .synth import GroundTruth, SynthConfig, generate_scene, with_field

SWEEP_COLUMNS = [
    "axis",
    "value",
    "runs",
    "failures",
    "median_depth_error_m",
    "mean_depth_error_m",
    "median_ratio_error",
    "failed_stages",
]


def single_hypothesis_errors(scene, gt: GroundTruth, model: ReferenceModel) -> list[dict]:
    """Each hypothesis on its own, placed with the true metric camera pose.

    This is the monocular baseline with oracle scale and oracle floor, so it
    is the most favourable single-view reading of the input.
    """
    out = []
    for cam in scene.cameras:
        P = gt.camera_poses[cam.id]
        for j, h in enumerate(cam.hypotheses):
            T = P @ h
            b = burial_depth(model, T, gt.plane)
            out.append(
                {
                    "id": (cam.id, j),
                    "mssd": mssd(T, gt.object_pose, model),
                    "depth_error": abs(b.depth - gt.burial_depth),
                }
            )
    return out


def trial(model: ReferenceModel, cfg: SynthConfig, pcfg: PipelineConfig = PipelineConfig(), workers: int = 1) -> dict:
    """Generate one scene, run the pipeline and score it against ground truth."""
    scene, gt = generate_scene(model, cfg)
    est = run_pipeline(scene, pcfg, model, workers)
    row = {
        "seed": cfg.seed,
        "ok": est.ok,
        "failed_stage": est.failed_stage,
        "gt_depth": gt.burial_depth,
        "gt_ratio": gt.depth_ratio,
        "depth_error": None,
        "ratio_error": None,
        "mssd": None,
        "scale_rel_error": None,
    }
    if est.scale is not None:
        row["scale_rel_error"] = abs(est.scale.s - gt.scale) / gt.scale
    if est.fused is not None:
        row["mssd"] = mssd(est.fused.pose, gt.object_pose, model)
    if est.burial is not None:
        row["depth_error"] = abs(est.burial.depth - gt.burial_depth)
        row["ratio_error"] = abs(est.burial.depth_ratio - gt.depth_ratio)
    row["estimate"], row["scene"], row["gt"] = est, scene, gt
    return row


def sweep(
    model: ReferenceModel,
    base: SynthConfig,
    axis: str,
    values,
    seeds,
    pcfg: PipelineConfig = PipelineConfig(),
    workers: int = 1,
) -> list[dict]:
    """One CSV row per swept value. Failed runs are counted, never raised."""
    with_field(base, axis, getattr(base, axis, None))  # unknown axis names raise here
    rows = []
    for v in values:
        errs, ratios, stages = [], [], []
        try:
            cfg_v = with_field(base, axis, v)
        except BurialError as exc:
            cfg_v = None
            stages = [f"config:{type(exc).__name__}"] * len(seeds)
        for s in seeds if cfg_v is not None else ():
            try:
                r = trial(model, with_field(cfg_v, "seed", int(s)), pcfg, workers)
            except BurialError as exc:
                stages.append(f"synth:{type(exc).__name__}")
                continue
            if r["depth_error"] is None:
                stages.append(r["failed_stage"])
            else:
                errs.append(r["depth_error"])
                ratios.append(r["ratio_error"])
        rows.append(
            {
                "axis": axis,
                "value": v,
                "runs": len(seeds),
                "failures": len(stages),
                "median_depth_error_m": float(np.median(errs)) if errs else "",
                "mean_depth_error_m": float(np.mean(errs)) if errs else "",
                "median_ratio_error": float(np.median(ratios)) if ratios else "",
                "failed_stages": ";".join(sorted(set(stages))),
            }
        )
    return rows
