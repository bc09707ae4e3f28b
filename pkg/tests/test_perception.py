import numpy as np
import pytest

from selfgrasp.perception import BlobDetector, Detection, crop_patch, detect
from selfgrasp.world import ELONGATED, SimObject, World, render


def test_empty_scene():
    assert detect(np.zeros((64, 64))) == []


def test_single_object_centroid():
    w = World(ELONGATED, 0)
    for k in range(100):
        obj, scene = w.scene_for(k)
        dets = detect(scene)
        assert len(dets) == 1
        d = dets[0]
        assert np.hypot(d.centroid[0] - obj.centroid[0], d.centroid[1] - obj.centroid[1]) < 2
        x0, y0, x1, y1 = d.bbox
        assert x0 <= d.centroid[0] <= x1 and y0 <= d.centroid[1] <= y1
        assert 0 <= x0 and 0 <= y0 and x1 <= 64 and y1 <= 64
        assert 0 <= d.confidence <= 1 and d.label == "object"


def test_two_discs():
    scene = render(SimObject("disc", 0.0, 1.0, 5.0, (12.0, 12.0))) + \
        render(SimObject("disc", 0.0, 1.0, 4.0, (40.0, 44.0), 0.7))
    dets = detect(scene)
    assert len(dets) == 2
    assert dets[0].area > dets[1].area
    assert dets[1].confidence == pytest.approx(0.7)


def test_min_area_and_ordering_tie_break():
    scene = np.zeros((20, 20))
    scene[15:17, 2:4] = 1.0   # area 4, lower
    scene[2:4, 12:14] = 1.0   # area 4, higher -> first
    scene[10, 10] = 1.0       # area 1, dropped
    dets = detect(scene)
    assert [d.bbox for d in dets] == [(12, 2, 14, 4), (2, 15, 4, 17)]


def test_four_connectivity():
    scene = np.zeros((10, 10))
    scene[2:4, 2:4] = 1
    scene[4:6, 4:6] = 1  # touches diagonally only
    assert len(detect(scene)) == 2


def test_area_bound_property():
    rng = np.random.default_rng(4)
    for _ in range(30):
        scene = (rng.random((40, 40)) > 0.7).astype(float)
        dets = detect(scene, 0.5)
        assert sum(d.area for d in dets) <= (scene > 0.5).sum()


def test_detector_rejects_threshold():
    with pytest.raises(ValueError):
        BlobDetector(threshold=1.0)


def test_crop_center_exact():
    scene = np.random.default_rng(0).random((64, 64))
    det = Detection("object", 1.0, (32.0, 32.0), (0, 0, 64, 64), 1)
    assert np.array_equal(crop_patch(scene, det), scene[16:48, 16:48])


def test_crop_corner_padding():
    scene = np.random.default_rng(1).random((64, 64)) + 0.5
    patch = crop_patch(scene, (0.0, 0.0))
    assert np.all(patch[:16, :] == 0) and np.all(patch[:, :16] == 0)
    assert np.array_equal(patch[16:, 16:], scene[:16, :16])


def test_crop_identity():
    scene = np.random.default_rng(2).random((32, 32))
    assert np.array_equal(crop_patch(scene, (16.0, 16.0), side=32), scene)


@pytest.mark.parametrize("c", [(-50.0, 3.0), (70.0, 70.0), (63.9, 0.1), (500.0, -500.0)])
def test_crop_shape_anywhere(c):
    assert crop_patch(np.ones((64, 64)), c).shape == (32, 32)
    assert crop_patch(np.ones((64, 64)), c, side=7).shape == (7, 7)


def test_detect_is_deterministic():
    _, scene = World(ELONGATED, 5).scene_for(0)
    assert detect(scene) == detect(scene.copy())
