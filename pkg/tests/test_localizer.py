import numpy as np
import pytest

from trade.errors import LocalizationFailed
from trade.geometry import Intrinsics, Plane, Pose, project
from trade.localizer import FixSource, lift_plane, localize
from trade.plane_fitting import FusedPlaneModel, PlaneHypothesis
from trade.roi_tracker import BoundingBox

NADIR = np.diag([1.0, -1.0, -1.0])


@pytest.fixture
def cam():
    return Intrinsics(400.0, 400.0, 320.0, 240.0, 640, 480)


def model(plane):
    return FusedPlaneModel(plane, 1e-3, 0, True, (PlaneHypothesis(plane, np.arange(10), 1e-3, 1.0),))


def tilted_pose(beta, height=20.0, aim_height=1.0):
    """Camera tilted by beta from nadir, placed so its optical axis passes through (0, 0, aim_height)."""
    c, s = np.cos(beta), np.sin(beta)
    Ry = np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    R = Ry @ NADIR
    axis = R[:, 2]
    C = np.array([0.0, 0.0, aim_height]) - (height - aim_height) / -axis[2] * axis
    return Pose(R, C)


def test_lift_plane():
    lifted = lift_plane(Plane([0, 0, 1], 0), 2.0)
    assert np.allclose(lifted.normal, [0, 0, 1]) and lifted.offset == pytest.approx(-1)
    p = Plane([0, 0, 1], 0)
    assert lift_plane(p, 0.0).offset == p.offset


def test_lift_tilted_plane_distance():
    p = Plane([0.3, -0.2, 1.0], 4.0)
    q = lift_plane(p, 2.0)
    pts = np.random.default_rng(0).normal(scale=10, size=(50, 3))
    pts -= np.outer(q.signed_distance(pts), q.normal)
    assert np.allclose(p.signed_distance(pts), 1.0)
    assert np.allclose(q.normal, p.normal)


def test_lift_negative_height():
    with pytest.raises(ValueError):
        lift_plane(Plane([0, 0, 1], 0), -1)


def test_localize_nadir(cam):
    pose = Pose(NADIR, [3.0, 4.0, 10.0])
    bbox = BoundingBox((cam.cx, cam.cy), 20, 20)
    fix = localize(bbox, model(Plane([0, 0, 1], 0)), [], 0.0, pose, cam)
    assert np.allclose(fix.position, [3, 4, 0]) and fix.source is FixSource.FRESH_PLANE


def test_lift_removes_lateral_error(cam):
    beta = np.radians(30)
    pose = tilted_pose(beta)
    target_centre = np.array([0.0, 0.0, 1.0])  # box of height 2 m, centre ray hits at h = 1
    ray_pix = project(target_centre, pose, cam)
    bbox = BoundingBox(tuple(ray_pix), 20, 20)
    ground = model(Plane([0, 0, 1], 0))
    raw = localize(bbox, ground, [], 2.0, pose, cam, lift=False)
    lifted = localize(bbox, ground, [], 2.0, pose, cam, lift=True)
    assert np.hypot(*raw.position[:2]) == pytest.approx(np.tan(beta), abs=1e-9)
    assert np.linalg.norm(lifted.position - target_centre) < 1e-6


def test_fix_on_lifted_plane(cam):
    rng = np.random.default_rng(0)
    for _ in range(20):
        plane = Plane([rng.normal(0, 0.1), rng.normal(0, 0.1), 1.0], rng.normal())
        pose = tilted_pose(rng.uniform(0, 0.6))
        fix = localize(BoundingBox((rng.uniform(100, 500), rng.uniform(100, 400)), 10, 10),
                       model(plane), [], rng.uniform(0, 4), pose, cam)
        assert abs(fix.plane.signed_distance(fix.position)) < 1e-9


def test_fallback_source_and_fresh_only(cam):
    pose = Pose(NADIR, [0, 0, 10])
    bbox = BoundingBox((cam.cx, cam.cy), 10, 10)
    hyps = [PlaneHypothesis(Plane([0, 0, 1], 0), np.arange(5), 1e-3, 1.0),
            PlaneHypothesis(Plane([0, 0, 1], -1), np.arange(5), 1e-3, 2.0)]
    fix = localize(bbox, None, hyps, 0.0, pose, cam)
    assert fix.depth_sigma == pytest.approx(0.5)
    fix = localize(bbox, model(Plane([0, 0, 1], 0)), [], 0.0, pose, cam, fresh_failed=True)
    assert fix.source is FixSource.FUSED_FALLBACK


def test_localize_failures(cam):
    pose = Pose(NADIR, [0, 0, 10])
    bbox = BoundingBox((cam.cx, cam.cy), 10, 10)
    with pytest.raises(LocalizationFailed):
        localize(bbox, None, [], 0.0, pose, cam)
    with pytest.raises(LocalizationFailed):
        localize(bbox, model(Plane([0, 0, 1], -20)), [], 0.0, pose, cam)
