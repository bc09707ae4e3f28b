import numpy as np
import pytest

from selfgrasp.dataset import DataPoint
from selfgrasp.geometry import N_CLASSES, nearest_class
from selfgrasp.perception import crop_patch, detect, moment_orientation
from selfgrasp.world import ELONGATED, World


def separable_points(n, seed=0, positive_share=0.5):
    """Points labelled by a fixed rule: success iff the attempted class is the
    class nearest the patch's moment orientation plus 90 degrees."""
    world = World(ELONGATED, (seed, 42))
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        _, scene = world.scene_for(k)
        patch = crop_patch(scene, detect(scene)[0])
        target = nearest_class((moment_orientation(patch) + 90.0) % 180.0)
        cls = target if rng.random() < positive_share else int(rng.integers(N_CLASSES))
        out.append(DataPoint(patch, cls, int(cls == target), k))
    return out


@pytest.fixture(scope="session")
def probe_patches():
    world = World(ELONGATED, (99, 3))
    out = []
    for k in range(20):
        _, scene = world.scene_for(k)
        out.append(crop_patch(scene, detect(scene)[0]))
    return np.stack(out)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
