import numpy as np

from conftest import random_rotation
from trade.errors import DegenerateBaseline, PointBehindCamera
from trade.geometry import Pose, backproject, project, triangulate_inverse_depth


def look_at(center, target) -> Pose:
    z = np.asarray(target, dtype=float) - center
    z /= np.linalg.norm(z)
    x = np.cross([0.0, 0.0, 1.0], z)
    x /= np.linalg.norm(x)
    return Pose(np.column_stack([x, np.cross(z, x), z]), center)


def two_view_configs(intr, n, seed, pixel_noise=0.5):
    """Random two-view setups: (pix0, pose0, pix1, pose1, true depth, estimate)."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        pose0 = Pose(random_rotation(rng), rng.normal(scale=3, size=3))
        pix0 = rng.uniform(100, 924, 2)
        depth = rng.uniform(5, 60)
        X = backproject(pix0, 1 / depth, pose0, intr)
        C1 = pose0.translation + rng.normal(scale=2, size=3)
        dirn = X - C1
        if np.linalg.norm(np.cross([0, 0, 1.0], dirn / np.linalg.norm(dirn))) < 1e-3:
            continue
        pose1 = look_at(C1, X)
        try:
            pix1 = project(X, pose1, intr) + rng.normal(scale=pixel_noise, size=2)
            rho, _ = triangulate_inverse_depth(pix0, pose0, pix1, pose1, intr)
        except (DegenerateBaseline, PointBehindCamera):
            continue
        out.append((pix0, pose0, pix1, pose1, depth, 1.0 / rho))
    return out


def two_plane_cloud(seed, n_ground=100, n_wall=100, sigma=0.05):
    """Ground z=0 next to a 30 m facade x=0; labels 0 = ground, 1 = facade."""
    rng = np.random.default_rng(seed)
    g = np.column_stack([rng.uniform(1, 25, n_ground), rng.uniform(-12, 12, n_ground), np.zeros(n_ground)])
    w = np.column_stack([np.zeros(n_wall), rng.uniform(-12, 12, n_wall), rng.uniform(1, 30, n_wall)])
    pts = np.vstack([g, w]) + rng.normal(scale=sigma, size=(n_ground + n_wall, 3))
    return pts, np.r_[np.zeros(n_ground, int), np.ones(n_wall, int)]


def angle_deg(a, b) -> float:
    return float(np.degrees(np.arccos(np.clip(abs(np.dot(a, b)), 0.0, 1.0))))


def check_multi_ransac_rules(hyps, pts, thresh=0.5, min_angle=15.0, max_shared=0.8, frac=0.5):
    """Post-hoc checks of every structural rule; returns a list of violations."""
    bad = []
    top = max(h.n_inliers for h in hyps)
    for k, h in enumerate(hyps):
        d = np.abs(h.plane.signed_distance(pts))
        if not np.array_equal(np.flatnonzero(d < thresh), np.sort(h.inliers)):
            bad.append(f"hypothesis {k}: inlier set does not match predicate")
        if h.n_inliers < frac * top:
            bad.append(f"hypothesis {k}: below half of top")
        for j in range(k):
            o = hyps[j]
            if angle_deg(h.plane.normal, o.plane.normal) <= min_angle:
                bad.append(f"hypotheses {j},{k}: angle <= {min_angle}")
            shared = len(np.intersect1d(h.inliers, o.inliers))
            if shared > max_shared * min(h.n_inliers, o.n_inliers):
                bad.append(f"hypotheses {j},{k}: share too many inliers")
    return bad


def step_scene_suite(frames=(0,)):
    """Step-terrain variants (camera side, street offset, tilt, altitude) with the target in view.

    Variants where the building hides the target from the camera are dropped.
    """
    import dataclasses

    from trade.simulator import TARGET, Scene, city_scene

    specs = []
    k = 0
    for az in (-90.0, 90.0):
        for offset in (-6.0, -10.0, -14.0):
            for tilt in (10.0, 19.0, 25.0):
                for alt in (34.0, 40.0, 46.0):
                    spec = city_scene(seed=k)
                    k += 1
                    spec.target = dataclasses.replace(spec.target, control_points=[[x, offset] for x in (0, 10, 20, 30)])
                    spec.camera = dataclasses.replace(spec.camera, tilt_deg=tilt, altitude=alt, tilt_azimuth_deg=az)
                    spec.name = f"step_az{az:g}_o{-offset:g}_t{tilt:g}_a{alt:g}"
                    b = Scene(spec).render(0)
                    bb = b.bbox
                    lab = b.surface_labels[int(bb.y0) + 1:int(bb.y1) - 1, int(bb.x0) + 1:int(bb.x1) - 1]
                    if (lab == TARGET).mean() >= 0.95:
                        specs.append(spec)
    return specs


def segmentation_scores(bundle, margin_factor=2.0, cfg=None):
    """Segment one frame using the true affine; returns (pixel counts, roof tiles grown, result).

    Ground pixels in tiles fully inside the box cannot be segmented and are not counted.
    """
    from trade.roi_tracker import update_roi
    from trade.scale_recovery import apply_affine
    from trade.segmentation import INSIDE, segment_ground
    from trade.simulator import GROUND, ROOF

    inv, ok = apply_affine(bundle.rel_depth, bundle.hidden_affine)
    x0, y0, x1, y1 = update_roi(bundle.bbox, margin_factor, bundle.intrinsics).rect
    corners = {0: (x0, y0), 1: (x1 - 1, y1 - 1)}
    res = segment_ground(inv, ok, bundle.bbox, bundle.true_pose, bundle.intrinsics, corners, cfg=cfg)
    m = res.mask
    u0, v0 = m.origin
    h, w = m.pixels.shape
    lab = bundle.surface_labels[v0:v0 + h, u0:u0 + w]
    g = res.grid
    tr = np.repeat(np.arange(g.n), np.diff(g.row_edges))
    tc = np.repeat(np.arange(g.n), np.diff(g.col_edges))
    eligible = (g.kind[tr[:, None], tc[None, :]] != INSIDE) & res.cloud.valid
    ground = (lab == GROUND) & eligible
    negative = (lab != GROUND) & res.cloud.valid
    roof_tiles = sum(
        1 for r, c in np.argwhere(m.tiles) if (lab[g.tile_slice(r, c)] == ROOF).any()
    )
    counts = dict(
        tp=int((m.pixels & ground).sum()),
        ground=int(ground.sum()),
        fp=int((m.pixels & negative).sum()),
        negative=int(negative.sum()),
    )
    return counts, roof_tiles, res
