"""Acceptance criteria 1-8. Each test records one PASS/FAIL line."""

import json
import math
import time

import numpy as np
from _oracles import agreement, mspd_loop, mssd_loop, random_small_case, raytrace_distance_map, vsd_loop

from seabed_burial.cli import main
from seabed_burial.experiments import single_hypothesis_errors, trial
from seabed_burial.geometry import CameraIntrinsics, RigidTransform, quat_from_axis_angle
from seabed_burial.metrics import PoseErrors, average_recall, mspd, mssd, render_distance_map, vsd
from seabed_burial.models import OBJECT_DIMENSIONS, catalog_model, make_box, make_cylinder
from seabed_burial.pipeline import PipelineConfig, infer_sedimentation_rate, run_pipeline
from seabed_burial.refine import symmetric_rotation_error
from seabed_burial.scale import solve_scale_closed_form, variance_trace
from seabed_burial.seafloor import Plane, burial_depth
from seabed_burial.synth import SynthConfig, generate_scene

IDENT = np.array([1.0, 0, 0, 0])


# ---------------------------------------------------------------- 1


def test_criterion_1_noiseless_fixed_point(acceptance):
    names = sorted(OBJECT_DIMENSIONS)
    models = {n: catalog_model(n) for n in names}
    worst = {"scale": 0.0, "t": 0.0, "rot_deg": 0.0, "depth": 0.0}
    t0 = time.perf_counter()
    for seed in range(20):
        m = models[names[seed % len(names)]]
        scene, gt = generate_scene(m, SynthConfig(seed=seed))
        est = run_pipeline(scene, PipelineConfig(), m)
        assert est.ok, (seed, est.failed_stage, est.error_message)
        worst["scale"] = max(worst["scale"], abs(est.scale.s - gt.scale) / gt.scale)
        worst["t"] = max(worst["t"], float(np.linalg.norm(est.fused.pose.t - gt.object_pose.t)))
        rot = symmetric_rotation_error(est.fused.pose.q, gt.object_pose.q, m.symmetries)
        worst["rot_deg"] = max(worst["rot_deg"], math.degrees(rot))
        worst["depth"] = max(worst["depth"], abs(est.burial.depth - gt.burial_depth))
    elapsed = time.perf_counter() - t0
    ok = (
        worst["scale"] < 1e-6
        and worst["t"] < 1e-3
        and worst["rot_deg"] < 0.1
        and worst["depth"] < 1e-3
        and elapsed < 60
    )
    acceptance(
        1,
        ok,
        f"20 scenes, worst scale {worst['scale']:.1e} rel, translation {worst['t']:.1e} m, "
        f"rotation {worst['rot_deg']:.3f} deg, depth {worst['depth']:.1e} m, {elapsed:.1f} s",
    )
    assert ok


# ---------------------------------------------------------------- 2


def _hypothesis_set(rng):
    """Unscaled camera positions and hypothesis translations with noise and a few outliers."""
    n_cam, H = int(rng.integers(2, 7)), int(rng.integers(1, 5))
    s_true = rng.uniform(0.5, 5.0)
    obj = rng.normal(size=3)
    tc, to = [], []
    for _ in range(n_cam):
        c = rng.normal(size=3) * 2
        for _ in range(H):
            t = obj - s_true * c + rng.normal(0, 0.05, 3)
            if rng.random() < 0.1:
                t = t + rng.normal(0, 1.0, 3)
            tc.append(c)
            to.append(c + t)  # object position implied at s = 1
    return np.array(tc), np.array(to)


def test_criterion_2_closed_form_vs_grid(acceptance):
    rng = np.random.default_rng(2024)
    grid = np.linspace(0.01, 10.0, 10_000)
    cell = grid[1] - grid[0]
    worst_gap, worst_obj = 0.0, -np.inf
    for _ in range(100):
        tc, to = _hypothesis_set(rng)
        s_cf = solve_scale_closed_form((tc, to))
        p = to[None] + tc[None] * (grid - 1.0)[:, None, None]
        vals = ((p - p.mean(axis=1, keepdims=True)) ** 2).sum(axis=2).mean(axis=1)
        k = int(np.argmin(vals))
        assert 0 < k < len(grid) - 1, "grid minimum on the boundary"
        worst_gap = max(worst_gap, abs(s_cf - grid[k]) / cell)
        worst_obj = max(worst_obj, variance_trace((tc, to), s_cf) - vals[k])
    ok = worst_gap <= 1.0 and worst_obj <= 0.0
    acceptance(2, ok, f"100 sets, worst |s - grid argmin| {worst_gap:.3f} cells, worst objective excess {worst_obj:.2e}")
    assert ok


# ---------------------------------------------------------------- 3

ROBUST = dict(hypothesis_noise=(math.radians(2.0), 0.02), outlier_fraction=0.4, burial_fraction=0.3)


def test_criterion_3_robustness(acceptance, barrel):
    depth_err, wins, lines = [], 0, []
    burial_wins = 0
    for seed in range(30):
        r = trial(barrel, SynthConfig(seed=seed, **ROBUST))
        assert r["ok"], (seed, r["failed_stage"])
        singles = single_hypothesis_errors(r["scene"], r["gt"], barrel)
        best_mssd = min(h["mssd"] for h in singles)
        best_depth = min(h["depth_error"] for h in singles)
        depth_err.append(r["depth_error"])
        wins += r["mssd"] < best_mssd
        burial_wins += r["depth_error"] < best_depth
        lines.append(f"{seed}: mssd {r['mssd']:.4f} vs {best_mssd:.4f}")
    med = float(np.median(depth_err))
    frac = wins / 30
    ok = med <= 0.05 and frac >= 0.8
    acceptance(
        3,
        ok,
        f"median depth error {100 * med:.2f} cm; fused MSSD below the best single hypothesis in "
        f"{wins}/30 seeds ({100 * frac:.0f}%); by depth error alone {burial_wins}/30",
    )
    assert ok, "\n".join(lines)


# ---------------------------------------------------------------- 4


# Hypothesis noise calibrated beforehand (seeds 200-209, burial 0.3) so the mean
# depth error is a few cm, the magnitude reported for field data; no outliers.
DEGRADED = dict(hypothesis_noise=(math.radians(20.0), 0.2), cloud_noise=0.01)


def test_criterion_4_deep_burial(acceptance, barrel):
    stats, failures = {}, 0
    for frac in (0.1, 0.5, 0.9):
        errs = []
        for seed in range(20):
            r = trial(barrel, SynthConfig(seed=seed, burial_fraction=frac, **DEGRADED))
            if r["depth_error"] is None:
                failures += 1
            else:
                errs.append(r["depth_error"])
        stats[frac] = (np.median(errs), np.mean(errs), np.percentile(errs, 90))
    ok = failures == 0 and stats[0.9][0] > stats[0.1][0]
    acceptance(
        4,
        ok,
        "depth error median/mean/p90 (cm) "
        + "; ".join(f"{f}: {100 * a:.2f}/{100 * b:.2f}/{100 * c:.2f}" for f, (a, b, c) in stats.items())
        + f"; 20 seeds each, {failures} failed runs",
    )
    assert ok


# ---------------------------------------------------------------- 5


def _trivial_examples():
    """The exact-valued examples for the metric functions, as (name, passed)."""
    K = CameraIntrinsics(f=500.0, cx=79.5, cy=59.5, width=160, height=120)
    box = make_box((0.3, 0.2, 0.1), origin=(-0.15, -0.1, -0.05))
    T = RigidTransform(quat_from_axis_angle([1, 2, 3], 0.7), [0.1, -0.05, 2.0])
    d = render_distance_map(box, T, K)
    a, b_ = np.zeros((4, 4)), np.zeros((4, 4))
    a[0, 0], b_[3, 3] = 1.0, 1.0
    shift = np.where(d > 0, d + 0.2, 0.0)
    cyl = make_cylinder(0.762, 1.0668)
    step = RigidTransform(quat_from_axis_angle([0, 0, 1], 2 * math.pi / 64), np.zeros(3))
    cube = make_box((1, 1, 1), origin=(-0.5, -0.5, -0.5))
    floor = Plane([0, 0, 1], 0)
    b = burial_depth(cube, RigidTransform(IDENT, [0, 0, 0.2]), floor)
    lying = burial_depth(cyl, RigidTransform(quat_from_axis_angle([1, 0, 0], math.pi / 2), np.zeros(3)), floor)
    behind = render_distance_map(box, RigidTransform(IDENT, [0, 0, -2.0]), K)
    zero = average_recall([PoseErrors([0.0] * 10, 0.0, 0.0)], 1.0, 640)
    inf = average_recall([PoseErrors([math.inf] * 10, math.inf, math.inf)], 1.0, 640)
    return [
        ("vsd est=gt", vsd(d, d, 0.01) == 0.0),
        ("vsd shifted 2 tau", vsd(shift, d, 0.1) == 1.0),
        ("vsd disjoint", vsd(a, b_, 0.1) == 1.0),
        ("mssd est=gt", mssd(T, T, box) == 0.0),
        ("mssd offset", abs(mssd(T @ RigidTransform(IDENT, [0.03, 0.04, 0]), T, box) - 0.05) < 1e-15),
        ("mssd one symmetry step", mssd(T @ step, T, cyl) < 1e-9),
        ("mspd est=gt", mspd(T, T, box, K) == 0.0),
        ("render behind camera", not behind.any()),
        ("cube burial", abs(b.depth - 0.3) < 1e-15 and b.oriented_height == 1.0),
        ("lying barrel", abs(lying.depth - 0.381) < 1e-12 and abs(lying.depth_ratio - 0.5) < 1e-12),
        ("AR all zero", (zero.ar_vsd, zero.ar_mssd, zero.ar_mspd) == (1.0, 1.0, 1.0)),
        ("AR all inf", (inf.ar_vsd, inf.ar_mssd, inf.ar_mspd) == (0.0, 0.0, 0.0)),
    ]


def test_criterion_5_metric_oracles(acceptance):
    worst = {"raster": 1.0, "vsd": 0.0, "mssd": 0.0, "mspd": 0.0}
    for seed in range(50):
        model, K, est, gt = random_small_case(seed)
        de, dg = render_distance_map(model, est, K), render_distance_map(model, gt, K)
        oe, og = raytrace_distance_map(model, est, K), raytrace_distance_map(model, gt, K)
        worst["raster"] = min(worst["raster"], agreement(de, oe), agreement(dg, og))
        for frac in (0.05, 0.25, 0.5):
            tau = frac * model.diameter
            worst["vsd"] = max(worst["vsd"], abs(vsd(de, dg, tau) - vsd_loop(oe, og, tau)))
        worst["mssd"] = max(worst["mssd"], abs(mssd(est, gt, model) - mssd_loop(est, gt, model)))
        worst["mspd"] = max(worst["mspd"], abs(mspd(est, gt, model, K) - mspd_loop(est, gt, model, K)))
    trivial = _trivial_examples()
    failed = [name for name, passed in trivial if not passed]
    ok = worst["raster"] >= 0.999 and max(worst["vsd"], worst["mssd"], worst["mspd"]) <= 1e-6 and not failed
    acceptance(
        5,
        ok,
        f"50 cases: pixel agreement >= {100 * worst['raster']:.2f}%, max |dVSD| {worst['vsd']:.1e}, "
        f"|dMSSD| {worst['mssd']:.1e} m, |dMSPD| {worst['mspd']:.1e} px; "
        f"{len(trivial) - len(failed)}/{len(trivial)} exact examples" + (f" (failed: {failed})" if failed else ""),
    )
    assert ok


# ---------------------------------------------------------------- 6


def test_criterion_6_average_recall(acceptance):
    hand = average_recall([PoseErrors([1.0] * 10, 0.275 * 2.0, math.inf)], 2.0, 640)
    zeros = average_recall([PoseErrors([0.0] * 10, 0.0, 0.0)] * 4, 1.3, 640)
    triple = (zeros.ar_vsd, zeros.ar_mssd, zeros.ar_mspd)
    ok = hand.ar_mssd == 0.5 and triple == (1.0, 1.0, 1.0)
    acceptance(6, ok, f"hand count AR_MSSD {hand.ar_mssd}, all-zero triple {triple}")
    assert ok


# ---------------------------------------------------------------- 7


def test_criterion_7_determinism(acceptance, tmp_path, monkeypatch):
    same = {}
    # synth has no threads; the worker variable is set anyway to show it has no effect
    for w in ("1", "3"):
        monkeypatch.setenv("SEABED_WORKERS", w)
        for sid, seed in (("a", 11), ("b", 12)):
            args = ["synth", "--model", "barrel", "--seed", str(seed), "--out", str(tmp_path / f"gts{w}" / sid)]
            assert main(args + ["--set", "hypothesis_noise=[0.035,0.02]", "--set", "outlier_fraction=0.2"]) == 0
    monkeypatch.delenv("SEABED_WORKERS")
    same["synth"] = all(
        (tmp_path / "gts1" / p.relative_to(tmp_path / "gts3")).read_bytes() == p.read_bytes()
        for p in (tmp_path / "gts3").rglob("*")
        if p.is_file()
    )
    for w in ("1", "3"):
        for sid in ("a", "b"):
            out = tmp_path / f"est{w}" / f"{sid}.json"
            scene = tmp_path / "gts1" / sid / "scene.json"
            assert main(["run", "--scene", str(scene), "--out", str(out), "--workers", w]) == 0
    same["run"] = all((tmp_path / "est1" / n).read_bytes() == (tmp_path / "est3" / n).read_bytes() for n in ("a.json", "b.json"))
    for w in ("1", "3"):
        assert main(["eval", "--estimates", str(tmp_path / f"est{w}"), "--gts", str(tmp_path / "gts1"),
                     "--out", str(tmp_path / f"eval{w}"), "--workers", w]) == 0
    same["eval"] = all(
        (tmp_path / "eval1" / n).read_bytes() == (tmp_path / "eval3" / n).read_bytes() for n in ("eval.json", "burial.csv")
    )
    ok = all(same.values())
    acceptance(7, ok, "byte-identical across 1 and 3 workers: " + ", ".join(f"{k} {v}" for k, v in same.items()))
    assert ok
    assert json.loads((tmp_path / "eval1" / "eval.json").read_text())["n_objects"] == 2


# ---------------------------------------------------------------- 8


def test_criterion_8_sedimentation_rate(acceptance):
    rate = infer_sedimentation_rate(0.0828, 1947, 2023)
    ok = abs(rate - 0.109) <= 0.001
    acceptance(8, ok, f"0.0828 m over 1947-2023 gives {rate:.4f} cm/yr (target 0.109 +- 0.001)")
    assert ok
