"""Score a directory of pipeline reports against synthetic ground truth."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .errors import IdMismatch, MissingFile, ParseError
from .geometry import CameraIntrinsics
from .metrics import (
    VSD_TAU_FRACTIONS,
    PoseErrors,
    RecallReport,
    average_recall,
    pose_errors,
)
from .scene import load_mesh, pose_from_json, symmetry_from_json


def _read_json(path: Path):
    if not path.is_file():
        raise MissingFile(f"missing file: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def collect_ids(estimates_dir, gts_dir) -> list[str]:
    est = {p.stem for p in Path(estimates_dir).glob("*.json")}
    gts = {p.parent.name for p in Path(gts_dir).glob("*/gt.json")}
    if est != gts:
        raise IdMismatch(
            f"ids differ: only in estimates {sorted(est - gts)}, only in ground truth {sorted(gts - est)}"
        )
    if not est:
        raise IdMismatch("no scenes to evaluate")
    return sorted(est)


_FAILED = PoseErrors([1.0] * len(VSD_TAU_FRACTIONS), float("inf"), float("inf"))


def evaluate_one(report: dict, gt: dict, gt_dir: Path):
    """Pose errors for every camera of one object plus its CSV row."""
    model = load_mesh(gt_dir / gt["model"]["mesh"], symmetry_from_json(gt["model"]["symmetry"]))
    K = CameraIntrinsics(**gt["intrinsics"])
    T_gt = pose_from_json(gt["object_pose"])
    fused = report.get("fused")
    errs = []
    for cam in gt["cameras"]:
        P = pose_from_json(cam)
        gt_cam = P.inverse() @ T_gt
        est = None if fused is None else fused["per_view_pose"].get(cam["id"])
        if est is None:
            errs.append(_FAILED)
        else:
            errs.append(pose_errors(pose_from_json(est), gt_cam, model, K))
    row = {
        "id": gt["id"],
        "lat": gt["lat"],
        "lon": gt["lon"],
        "gt_depth_m": gt["burial_depth"],
        "pred_depth_m": "",
        "error_m": "",
        "abs_error_m": "",
        "ratio_error": "",
    }
    b = report.get("burial")
    if b is not None:
        row["pred_depth_m"] = b["depth"]
        row["error_m"] = b["depth"] - gt["burial_depth"]
        row["abs_error_m"] = abs(row["error_m"])
        row["ratio_error"] = abs(b["depth_ratio"] - gt["depth_ratio"])
    return errs, model.diameter, K.width, row


def evaluate_dirs(estimates_dir, gts_dir, workers: int = 1) -> tuple[RecallReport, dict]:
    ids = collect_ids(estimates_dir, gts_dir)

    def one(sid):
        report = _read_json(Path(estimates_dir) / f"{sid}.json")
        gdir = Path(gts_dir) / sid
        return evaluate_one(report, _read_json(gdir / "gt.json"), gdir)

    if workers <= 1:
        results = [one(s) for s in ids]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(one, ids))

    errors, diams, widths, rows = [], [], [], []
    for errs, diam, width, row in results:
        errors += errs
        diams += [diam] * len(errs)
        widths += [width] * len(errs)
        rows.append(row)
    rep = average_recall(errors, np.array(diams), np.array(widths))
    done = [r for r in rows if r["abs_error_m"] != ""]
    if done:
        rep.mean_depth_error = float(np.mean([r["abs_error_m"] for r in done]))
        rep.mean_depth_ratio_error = float(np.mean([r["ratio_error"] for r in done]))
    rep.rows = rows
    summary = {
        "schema_version": 1,
        "n_objects": len(ids),
        "n_poses": len(errors),
        "n_burial_failures": len(rows) - len(done),
        "ar_vsd": rep.ar_vsd,
        "ar_mssd": rep.ar_mssd,
        "ar_mspd": rep.ar_mspd,
        "ar": (rep.ar_vsd + rep.ar_mssd + rep.ar_mspd) / 3.0,
        "mean_depth_error_m": rep.mean_depth_error,
        "mean_depth_ratio_error": rep.mean_depth_ratio_error,
        "objects": rows,
    }
    return rep, summary
