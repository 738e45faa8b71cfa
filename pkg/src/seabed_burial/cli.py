"""Command-line entry point: run, synth, eval, sweep and rate.

Every pipeline flag can also be set through an environment variable named
``SEABED_<FLAG>`` (for example ``SEABED_SCALE_INLIER=0.2``); explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import errors as E
from .evaluate import evaluate_dirs
from .experiments import SWEEP_COLUMNS, sweep
from .metrics import write_burial_csv
from .models import OBJECT_DIMENSIONS, catalog_model
from .pipeline import (
    EXIT_PARSE,
    EXIT_VALIDATION,
    PipelineConfig,
    infer_sedimentation_rate,
    report_document,
    run_pipeline,
)
from .scene import dump_json, load_mesh, load_scene
from .synth import SynthConfig, config_document, generate_scene, load_synth_config, with_field, write_synthetic

log = logging.getLogger("seabed_burial")

def _bool(raw: str) -> bool:
    v = str(raw).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


_bool.__name__ = "bool"

# flag -> (PipelineConfig field, type)
PIPELINE_FLAGS = {
    "seed": ("seed", int),
    "scale_inlier": ("scale_inlier_m", float),
    "plane_inlier": ("plane_inlier_m", float),
    "rot_inlier": ("rot_inlier_rad", float),
    "trans_inlier": ("trans_inlier_m", float),
    "icp_std_mult": ("icp_std_mult", float),
    "icp_max_iterations": ("icp_max_iterations", int),
    "icp_rel_tol": ("icp_rel_tol", float),
    "icp_direction": ("icp_direction", str),
    "iterations": ("ransac_iterations", int),
    "model_samples": ("model_samples", int),
    "min_mask_hits": ("min_mask_hits", int),
    "reference": ("reference", str),
    "realign": ("realign_to_mean", _bool),
}


def _env_default(flag: str, typ):
    raw = os.environ.get("SEABED_" + flag.upper())
    if raw is None:
        return None
    try:
        return typ(raw)
    except ValueError:
        raise E.ValidationError(f"SEABED_{flag.upper()}={raw!r} is not a valid {typ.__name__}") from None


def _add_pipeline_flags(p: argparse.ArgumentParser):
    for flag, (_, typ) in PIPELINE_FLAGS.items():
        p.add_argument("--" + flag.replace("_", "-"), dest=flag, type=typ, default=None)
    p.add_argument("--workers", type=int, default=None, help="ICP threads; does not change results")


def pipeline_config(args) -> PipelineConfig:
    kw = {}
    for flag, (name, typ) in PIPELINE_FLAGS.items():
        v = getattr(args, flag, None)
        if v is None:
            v = _env_default(flag, typ)
        if v is not None:
            kw[name] = v
    return PipelineConfig(**kw)


def _workers(args) -> int:
    w = args.workers if args.workers is not None else _env_default("workers", int)
    return max(1, w or 1)


def _model(name: str | None):
    if name is None:
        return None
    if name in OBJECT_DIMENSIONS:
        return catalog_model(name)
    return load_mesh(name)


def _write(path, text: str):
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)


# --------------------------------------------------------------------------- commands


def cmd_run(args) -> int:
    cfg = pipeline_config(args)
    model = _model(args.model)
    scene = load_scene(args.scene, model)
    sid = args.id or Path(args.scene).parent.name
    est = run_pipeline(scene, cfg, model or scene.model, _workers(args))
    prov = {"scene": str(args.scene), "model": args.model}
    _write(args.out, dump_json(report_document(est, cfg, sid, prov)))
    if not est.ok:
        log.error("failed at %s: %s: %s", est.failed_stage, est.error_type, est.error_message)
    return est.exit_code


def _synth_config(args) -> SynthConfig:
    cfg = load_synth_config(args.config) if args.config else SynthConfig()
    for item in args.set or []:
        key, _, raw = item.partition("=")
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        if isinstance(val, list):
            val = tuple(val)
        cfg = with_field(cfg, key, val)
    if args.seed is not None:
        cfg = with_field(cfg, "seed", args.seed)
    return cfg


def cmd_synth(args) -> int:
    cfg = _synth_config(args)
    model = _model(args.model)
    scene, gt = generate_scene(model, cfg)
    paths = write_synthetic(scene, gt, args.out, args.id)
    _write(Path(args.out) / "synth_config.json", dump_json(config_document(cfg)))
    print(json.dumps({k: str(v) if not isinstance(v, list) else [str(x) for x in v] for k, v in paths.items()}))
    return 0


def cmd_eval(args) -> int:
    rep, summary = evaluate_dirs(args.estimates, args.gts, _workers(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval.json").write_text(dump_json(summary))
    write_burial_csv(rep.rows, out / "burial.csv")
    print(f"AR_VSD {rep.ar_vsd:.3f}  AR_MSSD {rep.ar_mssd:.3f}  AR_MSPD {rep.ar_mspd:.3f}")
    return 0


def cmd_sweep(args) -> int:
    base = _synth_config(args)
    model = _model(args.model)
    values = [json.loads(v) for v in args.values.split(",") if v.strip()]
    seeds = list(range(args.seeds))
    rows = sweep(model, base, args.axis, values, seeds, pipeline_config(args), _workers(args))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return 0


def cmd_rate(args) -> int:
    print(f"{infer_sedimentation_rate(args.depth, args.dump_year, args.obs_year):.6f}")
    return 0


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="seabed-burial", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="estimate pose and burial depth for one scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--model", help="catalog name or .obj path; default: the scene's own model")
    p.add_argument("--out", required=True)
    p.add_argument("--id", help="report id; default: the scene directory name")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("synth", help="write a synthetic scene with ground truth")
    p.add_argument("--model", required=True, help="catalog name or .obj path")
    p.add_argument("--config", help="SynthConfig JSON")
    p.add_argument("--set", action="append", metavar="FIELD=VALUE", help="override one SynthConfig field")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--id")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score reports against ground truth")
    p.add_argument("--estimates", required=True, help="directory of <id>.json reports")
    p.add_argument("--gts", required=True, help="directory of <id>/gt.json")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="burial error over one SynthConfig field")
    p.add_argument("--model", required=True)
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="FIELD=VALUE")
    p.add_argument("--axis", required=True)
    p.add_argument("--values", required=True, help="comma-separated JSON values")
    p.add_argument("--seeds", type=int, default=10, help="seeds 0..N-1 per value")
    p.add_argument("--out", required=True)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("rate", help="sedimentation rate in cm/yr from a burial depth")
    p.add_argument("--depth", type=float, required=True, help="metres")
    p.add_argument("--dump-year", type=float, required=True)
    p.add_argument("--obs-year", type=float, required=True)
    p.set_defaults(func=cmd_rate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except E.ParseError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_PARSE
    except E.ValidationError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_VALIDATION
    except E.BurialError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
