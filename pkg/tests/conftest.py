import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from seabed_burial.models import catalog_model, make_box
from seabed_burial.synth import SynthConfig, generate_scene

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """``acceptance(n, ok, detail)`` prints and records one criterion line."""

    def record(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        request.config.stash[_ACCEPTANCE].append(line)
        return ok

    return record


@pytest.fixture(scope="session")
def barrel():
    return catalog_model("barrel")


@pytest.fixture(scope="session")
def unit_cube():
    return make_box((1.0, 1.0, 1.0))


@pytest.fixture(scope="session")
def noiseless_scene(barrel):
    return generate_scene(barrel, SynthConfig(seed=1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def outlier_scene(noiseless_scene):
    """Three cameras whose only hypotheses put the object 5 m away along different world axes."""
    from seabed_burial.geometry import RigidTransform
    from seabed_burial.scene import CameraView, SceneInput

    scene, _ = noiseless_scene
    cams = []
    for cam, off in zip(scene.cameras[:3], np.eye(3) * 5.0):
        h = cam.hypotheses[0]
        cams.append(CameraView(cam.id, cam.intrinsics, cam.world_pose, [RigidTransform(h.q, h.t + cam.world_pose.R.T @ off)]))
    masks = {c.id: scene.masks[c.id] for c in cams}
    return SceneInput(tuple(cams), scene.cloud, scene.model, masks, scene.metric)
