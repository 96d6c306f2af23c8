import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trade.errors import RoiOutsideImage
from trade.geometry import Intrinsics, Pose, project_many
from trade.roi_tracker import (
    BoundingBox,
    FeatureTrack,
    RoiTracker,
    TrackStatus,
    fuse_inverse_depth,
    mature_points,
    replenish_tracks,
    step_tracks,
    update_roi,
)

NADIR = np.diag([1.0, -1.0, -1.0])


@pytest.fixture
def small_intr():
    return Intrinsics(300.0, 300.0, 320.0, 240.0, 640, 480)


def rect_size(grid):
    x0, y0, x1, y1 = grid.rect
    return x1 - x0, y1 - y0


def test_roi_margin_one():
    assert rect_size(update_roi(BoundingBox((500, 500), 100, 50), 1.0)) == (200, 150)


def test_roi_margin_two():
    assert rect_size(update_roi(BoundingBox((500, 500), 100, 50), 2.0)) == (300, 250)


def test_roi_tiles_partition_rect():
    grid = update_roi(BoundingBox((300, 200), 60, 40), 2.0)
    area = sum((x1 - x0) * (y1 - y0) for x0, y0, x1, y1 in grid.tiles)
    w, h = rect_size(grid)
    assert area + 60 * 40 == pytest.approx(w * h)
    pts = np.random.default_rng(0).uniform([200, 100], [420, 300], (2000, 2))
    idx = grid.tile_index(pts)
    inside_box = grid.bbox.contains(pts)
    assert np.all(idx[inside_box] == -1)


def test_roi_corner_clamped(small_intr):
    free = update_roi(BoundingBox((320, 240), 40, 40), 1.0, small_intr)
    box = BoundingBox((30, 30), 40, 40)
    grid = update_roi(box, 1.0, small_intr)
    assert grid.rect[0] == 0 and grid.rect[1] == 0
    # bottom-right tile lies fully in the image, so it keeps its unclamped size
    x0, y0, x1, y1 = grid.tiles[-1]
    fx0, fy0, fx1, fy1 = free.tiles[-1]
    assert (x1 - x0, y1 - y0) == (fx1 - fx0, fy1 - fy0)


def test_roi_outside_image(small_intr):
    with pytest.raises(RoiOutsideImage):
        update_roi(BoundingBox((5, 5), 10, 10), 1.0, small_intr)


def _tracks_in_tile(grid, k, n, start_id=0):
    x0, y0, x1, y1 = grid.tiles[k]
    pts = np.random.default_rng(k).uniform([x0, y0], [x1, y1], (n, 2))
    return [FeatureTrack(start_id + i, p, Pose.identity(), p) for i, p in enumerate(pts)], pts


def test_replenish_full_tile():
    grid = update_roi(BoundingBox((500, 500), 100, 100), 2.0)
    live, _ = _tracks_in_tile(grid, 0, 25)
    _, cand = _tracks_in_tile(grid, 0, 10)
    new = replenish_tracks(grid, live, [(100 + i, p) for i, p in enumerate(cand)], Pose.identity())
    assert new == []


def test_replenish_partial_tile():
    grid = update_roi(BoundingBox((500, 500), 100, 100), 2.0)
    live, _ = _tracks_in_tile(grid, 3, 20)
    _, cand = _tracks_in_tile(grid, 3, 3)
    new = replenish_tracks(grid, live, [(100 + i, p) for i, p in enumerate(cand)], Pose.identity())
    assert [t.id for t in new] == [100, 101, 102]


def test_replenish_rejects_inside_box():
    grid = update_roi(BoundingBox((500, 500), 100, 100), 2.0)
    assert replenish_tracks(grid, [], [(1, np.array([500.0, 510.0]))], Pose.identity()) == []


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 400))
def test_tile_occupancy_capped(seed, n):
    grid = update_roi(BoundingBox((500, 500), 80, 120), 2.0)
    pts = np.random.default_rng(seed).uniform([300, 200], [700, 800], (n, 2))
    new = replenish_tracks(grid, [], list(enumerate(pts)), Pose.identity())
    if new:
        idx = grid.tile_index(np.array([t.current_pixel for t in new]))
        assert np.bincount(idx, minlength=8).max() <= 25
        assert not grid.bbox.contains(np.array([t.current_pixel for t in new])).any()


def test_fuse_identical():
    m, v = fuse_inverse_depth((0.1, 4e-4), (0.1, 4e-4))
    assert m == pytest.approx(0.1) and v == pytest.approx(2e-4)


def test_fuse_equal_variance_average():
    m, v = fuse_inverse_depth((0.2, 1e-2), (0.1, 1e-2))
    assert m == pytest.approx(0.15) and v == pytest.approx(5e-3)


@pytest.mark.parametrize("n", [1, 2, 5, 20])
def test_fuse_repeated_closed_form(n):
    s2 = 3e-3
    state = (0.4, s2)
    for _ in range(n):
        state = fuse_inverse_depth(state, (0.4, s2))
    assert abs(state[1] - s2 / (n + 1)) < 1e-12


@settings(max_examples=100)
@given(
    st.floats(0.01, 10), st.floats(1e-6, 1), st.floats(0.01, 10),
    st.floats(1e-6, 1), st.floats(0.01, 10), st.floats(1e-6, 1),
)
def test_fuse_algebra(m1, v1, m2, v2, m3, v3):
    a, b, c = (m1, v1), (m2, v2), (m3, v3)
    ab, ba = fuse_inverse_depth(a, b), fuse_inverse_depth(b, a)
    assert abs(ab[0] - ba[0]) < 1e-12 * max(1, abs(ab[0])) and abs(ab[1] - ba[1]) < 1e-12
    left = fuse_inverse_depth(ab, c)
    right = fuse_inverse_depth(a, fuse_inverse_depth(b, c))
    assert abs(left[0] - right[0]) < 1e-12 * max(1, abs(left[0]))
    assert abs(left[1] - right[1]) < 1e-12
    assert ab[1] < min(v1, v2)


def _static_scene(intr, n=300, seed=0):
    """Ground points on z=0 viewed from a nadir camera translating along x at 20 m."""
    rng = np.random.default_rng(seed)
    pts = np.column_stack([rng.uniform(-15, 15, n), rng.uniform(-12, 12, n), np.zeros(n)])
    poses = [Pose(NADIR, [0.5 * k, 0.0, 20.0]) for k in range(8)]
    return pts, poses


def _observe(pts, pose, intr, sigma=0.0, rng=None):
    pix, z = project_many(pts, pose, intr)
    if sigma:
        pix = pix + rng.normal(scale=sigma, size=pix.shape)
    return {i: p for i, p in enumerate(pix) if z[i] > 0 and intr.contains(p)}


def test_step_static_two_frames_mature(small_intr):
    pts, poses = _static_scene(small_intr)
    obs0 = _observe(pts, poses[0], small_intr)
    tracks = [FeatureTrack(i, p, poses[0], p) for i, p in obs0.items()]
    pose1 = Pose(NADIR, [2.0, 0.0, 20.0])
    step_tracks(tracks, _observe(pts, pose1, small_intr), pose1, small_intr)
    mature = [t for t in tracks if t.status is TrackStatus.MATURE]
    assert len(mature) > 50
    for t in mature:
        assert abs(1 / t.inv_depth_mean - 20.0) / 20.0 < 0.01


def test_step_hover_keeps_state(small_intr):
    t = FeatureTrack(7, np.array([300.0, 200.0]), Pose.identity(), np.array([300.0, 200.0]), 0.1, 1e-6,
                     TrackStatus.MATURE)
    step_tracks([t], {7: np.array([300.5, 200.0])}, Pose.identity(), small_intr)
    assert (t.inv_depth_mean, t.inv_depth_var, t.status) == (0.1, 1e-6, TrackStatus.MATURE)


def test_step_unobserved_lost(small_intr):
    t = FeatureTrack(1, np.array([300.0, 200.0]), Pose.identity(), np.array([300.0, 200.0]))
    step_tracks([t], {}, Pose.identity(), small_intr)
    assert t.status is TrackStatus.LOST


def test_step_leaving_roi_lost(small_intr):
    grid = update_roi(BoundingBox((320, 240), 40, 40), 1.0, small_intr)
    t = FeatureTrack(1, np.array([290.0, 200.0]), Pose.identity(), np.array([290.0, 200.0]))
    step_tracks([t], {1: np.array([10.0, 10.0])}, Pose(np.eye(3), [1, 0, 0]), small_intr, grid)
    assert t.status is TrackStatus.LOST


def test_first_observation_immutable(small_intr):
    pts, poses = _static_scene(small_intr)
    obs0 = _observe(pts, poses[0], small_intr)
    tracks = [FeatureTrack(i, p.copy(), poses[0], p.copy()) for i, p in obs0.items()]
    firsts = {t.id: (t.first_pixel.copy(), t.first_pose) for t in tracks}
    for pose in poses[1:]:
        step_tracks(tracks, _observe(pts, pose, small_intr), pose, small_intr)
    for t in tracks:
        assert np.array_equal(t.first_pixel, firsts[t.id][0]) and t.first_pose is firsts[t.id][1]


def test_mature_points_empty(small_intr):
    ids, pts = mature_points([], small_intr)
    assert len(ids) == 0 and pts.shape == (0, 3)


def test_promotion_boundary(small_intr):
    tr = RoiTracker(small_intr, promotion_ratio=0.05)
    mean = 0.1
    below = FeatureTrack(1, np.array([100.0, 100.0]), Pose.identity(), np.array([100.0, 100.0]), mean,
                         (0.05 * mean) ** 2 * 0.999)
    above = FeatureTrack(2, np.array([500.0, 100.0]), Pose.identity(), np.array([500.0, 100.0]), mean,
                         (0.05 * mean) ** 2 * 1.001)
    pose = Pose(np.eye(3), [0.0, 0.0, 0.0])
    # zero baseline: estimates stay put, status is re-evaluated
    step_tracks([below, above], {1: below.current_pixel, 2: above.current_pixel}, pose, small_intr,
                promotion_ratio=tr.promotion_ratio)
    ids, _ = mature_points([below, above], small_intr)
    assert list(ids) == [1]


def test_mature_points_within_three_sigma(small_intr):
    pts, poses = _static_scene(small_intr, n=600, seed=3)
    rng = np.random.default_rng(9)
    obs0 = _observe(pts, poses[0], small_intr, 0.5, rng)
    tracks = [FeatureTrack(i, p, poses[0], p) for i, p in obs0.items()]
    for pose in poses[1:]:
        step_tracks(tracks, _observe(pts, pose, small_intr, 0.5, rng), pose, small_intr)
    mature = [t for t in tracks if t.status is TrackStatus.MATURE]
    assert len(mature) > 100
    ok = [abs(t.inv_depth_mean - 1 / 20.0) < 3 * np.sqrt(t.inv_depth_var) for t in mature]
    assert np.mean(ok) >= 0.99
    ids, world = mature_points(mature, small_intr)
    assert np.abs(world[:, 2]).max() < 1.0


def test_tracker_never_tracks_inside_box(small_intr):
    pts, poses = _static_scene(small_intr)
    tr = RoiTracker(small_intr, margin_factor=2.0)
    for k, pose in enumerate(poses):
        obs = _observe(pts, pose, small_intr)
        box = BoundingBox((320 + 3 * k, 240), 60, 40)
        tr.step(box, pose, obs, list(obs.items()))
        cur = np.array(list(tr.current_pixels().values()))
        assert not box.contains(cur).any()
