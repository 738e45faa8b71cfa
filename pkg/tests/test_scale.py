import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from seabed_burial.errors import DegenerateCameras, NoConsensus, ValidationError
from seabed_burial.geometry import CameraIntrinsics, RigidTransform, compose, random_quaternion
from seabed_burial.scale import (
    apply_scale,
    implied_object_position,
    scale_samples,
    solve_scale_balanced,
    solve_scale_closed_form,
    solve_scale_ransac,
    variance_trace,
)
from seabed_burial.scene import CameraView, LabeledPointCloud, SceneInput
from seabed_burial.synth import SynthConfig, generate_scene

K = CameraIntrinsics(500, 320, 240, 640, 480)
seeds = st.integers(0, 2**32 - 1)


def random_views(rng, n_cam=5, H=3, s_true=None, noise=0.0):
    """Cameras at random unscaled positions; hypotheses consistent with ``s_true`` if given."""
    obj = rng.normal(size=3)
    views = []
    for i in range(n_cam):
        P = RigidTransform(random_quaternion(rng), rng.normal(size=3) * 2)
        hyps = []
        for _ in range(H):
            if s_true is None:
                t = rng.normal(size=3) * 2
            else:
                # metric offset from the scaled camera to the object
                t = P.R.T @ (obj - s_true * P.t) + rng.normal(size=3) * noise
            hyps.append(RigidTransform(random_quaternion(rng), t))
        views.append(CameraView(f"c{i}", K, P, hyps))
    return views


def grid_argmin(samples, lo=0.01, hi=100.0, n=10_000):
    grid = np.linspace(lo, hi, n)
    vals = np.array([variance_trace(samples, s) for s in grid])
    k = int(np.argmin(vals))
    return grid[k], vals[k], grid[1] - grid[0]


def test_implied_position_at_unit_scale(rng):
    v = random_views(rng, 1, 2)[0]
    for j in range(2):
        assert np.array_equal(implied_object_position(v, j, 1.0), compose(v.world_pose, v.hypotheses[j]).t)


def test_camera_at_origin_ignores_scale(rng):
    v = random_views(rng, 1, 1)[0]
    v = CameraView("o", K, RigidTransform(v.world_pose.q, np.zeros(3)), v.hypotheses)
    assert np.array_equal(implied_object_position(v, 0, 0.3), implied_object_position(v, 0, 7.0))


def test_positions_coincide_at_true_scale(rng):
    views = random_views(rng, 2, 1, s_true=2.0)
    a, b = (implied_object_position(v, 0, 2.0) for v in views)
    assert np.allclose(a, b, atol=1e-12)


def test_identical_object_positions_give_unit_scale(rng):
    tc = rng.normal(size=(6, 3))
    to = np.tile(rng.normal(size=3), (6, 1))
    assert solve_scale_closed_form((tc, to)) == pytest.approx(1.0, abs=1e-15)


def test_single_camera_position_is_degenerate(rng):
    tc = np.tile(rng.normal(size=3), (4, 1))
    with pytest.raises(DegenerateCameras):
        solve_scale_closed_form((tc, rng.normal(size=(4, 3))))
    with pytest.raises(DegenerateCameras):
        solve_scale_balanced(tc, rng.normal(size=(4, 2, 3)))


def test_pair_list_input_matches_arrays(rng):
    tc, to = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    assert solve_scale_closed_form(list(zip(tc, to))) == solve_scale_closed_form((tc, to))


@given(seeds)
def test_closed_form_matches_grid(seed):
    rng = np.random.default_rng(seed)
    views = random_views(rng, 4, 3, s_true=rng.uniform(0.2, 50), noise=0.05)
    _, tc, to = scale_samples(views)
    s = solve_scale_closed_form((tc, to))
    g, gmin, cell = grid_argmin((tc, to), n=2000)
    if 0.01 <= s <= 100:
        assert abs(s - g) <= cell
    assert variance_trace((tc, to), s) <= gmin + 1e-12


@given(seeds, st.integers(2, 6), st.integers(1, 6))
def test_balanced_formula_equals_pairwise_form(seed, N, H):
    rng = np.random.default_rng(seed)
    tc = rng.normal(size=(N, 3))
    to = rng.normal(size=(N, H, 3))
    flat_c = np.repeat(tc, H, axis=0)
    a = solve_scale_balanced(tc, to)
    b = solve_scale_closed_form((flat_c, to.reshape(-1, 3)))
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


@given(seeds)
def test_closed_form_is_stationary(seed):
    rng = np.random.default_rng(seed)
    _, tc, to = scale_samples(random_views(rng, 5, 2, s_true=3.0, noise=0.2))
    s = solve_scale_closed_form((tc, to))
    f = variance_trace((tc, to), s)
    eps = 1e-4 * abs(s)
    assert variance_trace((tc, to), s + eps) >= f
    assert variance_trace((tc, to), s - eps) >= f


@given(seeds, st.floats(0.1, 10))
def test_prescaling_reconstruction_divides_scale(seed, lam):
    rng = np.random.default_rng(seed)
    _, tc, to_unscaled = scale_samples(random_views(rng, 4, 2, s_true=2.0, noise=0.1))
    # to = R h + t_cam; separate the metric offset so only t_cam is rescaled
    offset = to_unscaled - tc
    s = solve_scale_closed_form((tc, to_unscaled))
    s_lam = solve_scale_closed_form((lam * tc, offset + lam * tc))
    assert s_lam == pytest.approx(s / lam, rel=1e-9)


@given(seeds)
def test_translating_scene_leaves_scale(seed):
    rng = np.random.default_rng(seed)
    _, tc, to = scale_samples(random_views(rng, 4, 2, s_true=2.0, noise=0.1))
    d = rng.normal(size=3) * 10
    assert solve_scale_closed_form((tc + d, to + d)) == pytest.approx(solve_scale_closed_form((tc, to)), rel=1e-9)


# ---------------------------------------------------------------- RANSAC


def test_ransac_noiseless_synthetic(barrel):
    scene, gt = generate_scene(barrel, SynthConfig(seed=2))
    sol = solve_scale_ransac(scene.cameras)
    assert sol.s == pytest.approx(2.0, rel=1e-9)
    assert len(sol.inlier_ids) == 8 * 5
    assert sol.objective < 1e-18


def test_ransac_with_forty_percent_outliers(barrel):
    scene, gt = generate_scene(barrel, SynthConfig(seed=4, outlier_fraction=0.4))
    sol = solve_scale_ransac(scene.cameras)
    assert sol.s == pytest.approx(gt.scale, rel=0.01)
    assert not set(sol.inlier_ids) & set(gt.outlier_ids)
    assert sol.diagnostics["n_inliers"] == 24


def test_ransac_is_deterministic(barrel):
    scene, _ = generate_scene(barrel, SynthConfig(seed=4, outlier_fraction=0.4, hypothesis_noise=(0.03, 0.02)))
    a = solve_scale_ransac(scene.cameras, seed=9)
    b = solve_scale_ransac(scene.cameras, seed=9)
    assert a.s == b.s and a.inlier_ids == b.inlier_ids


def test_ransac_all_outliers_no_consensus():
    # three cameras, one hypothesis each, mutually inconsistent at every scale
    q = np.array([1.0, 0, 0, 0])
    views = [
        CameraView("a", K, RigidTransform(q, np.array([0.0, 0, 0])), [RigidTransform(q, np.array([0.0, 0, 5]))]),
        CameraView("b", K, RigidTransform(q, np.array([1.0, 0, 0])), [RigidTransform(q, np.array([0.0, 3, 1]))]),
        CameraView("c", K, RigidTransform(q, np.array([0.0, 1, 0])), [RigidTransform(q, np.array([-4.0, 0, 0]))]),
    ]
    with pytest.raises(NoConsensus):
        solve_scale_ransac(views)


def test_ransac_needs_two_camera_positions(rng):
    v = random_views(rng, 1, 4)
    with pytest.raises(DegenerateCameras):
        solve_scale_ransac(v)
    with pytest.raises(ValidationError):
        solve_scale_ransac(random_views(rng, 3, 2), inlier_dist=0)


def test_unbalanced_inliers_flagged(rng):
    views = random_views(rng, 3, 3, s_true=2.0)
    # make one hypothesis of camera 0 an outlier
    bad = list(views[0].hypotheses)
    bad[0] = RigidTransform(bad[0].q, bad[0].t + 5.0)
    views[0] = CameraView("c0", K, views[0].world_pose, bad)
    sol = solve_scale_ransac(views)
    assert sol.s == pytest.approx(2.0, rel=1e-9)
    assert ("c0", 0) not in sol.inlier_ids
    assert sol.diagnostics["unbalanced_inliers"]


# ---------------------------------------------------------------- apply_scale


def _scene(rng):
    views = random_views(rng, 3, 2, s_true=2.0, noise=0.03)
    return SceneInput(tuple(views), LabeledPointCloud(rng.normal(size=(10, 3)), np.ones(10)))


def test_apply_unit_scale_is_identity(rng):
    sc = _scene(rng)
    out = apply_scale(sc, 1.0)
    assert np.array_equal(out.cloud.points, sc.cloud.points)
    for a, b in zip(sc.cameras, out.cameras):
        assert np.array_equal(a.world_pose.t, b.world_pose.t)
        assert a.hypotheses is b.hypotheses


def test_apply_scale_two(rng):
    sc = SceneInput((), LabeledPointCloud([[1.0, 1.0, 1.0]], [1]))
    out = apply_scale(sc, 2.0)
    assert out.cloud.points.tolist() == [[2.0, 2.0, 2.0]] and out.metric
    with pytest.raises(ValidationError):
        apply_scale(sc, 0.0)


def test_scaled_positions_reproduce_objective(rng):
    sc = _scene(rng)
    sol = solve_scale_ransac(sc.cameras)
    metric = apply_scale(sc, sol.s)
    pos = np.array(
        [compose(metric.camera(cid).world_pose, metric.camera(cid).hypotheses[j]).t for cid, j in sol.inlier_ids]
    )
    trace = float(((pos - pos.mean(axis=0)) ** 2).sum(axis=1).mean())
    assert trace == pytest.approx(sol.objective, abs=1e-9)
