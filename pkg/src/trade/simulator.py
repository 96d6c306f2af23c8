"""Deterministic synthetic scenes: terrain, a moving boxy target, decoys,
a following camera, noisy feature tracks, affine-warped relative depth maps
and multi-peak tracker score maps.

Every random draw comes from ``numpy.random.default_rng([seed, frame, stream])``
so frames can be rendered independently and in any order.
"""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, OutOfDomain
from .geometry import Intrinsics, Pose, project_many
from .gridio import write_grid
from .peak_select import ScoreMap
from .roi_tracker import BoundingBox
from .scale_recovery import AffineParams, RelativeInvDepthMap
from .spline import CatmullRom

# surface labels used in depth maps and feature observations
NONE, GROUND, ROOF, WALL, TARGET, CLUTTER = 0, 1, 2, 3, 4, 5

_STREAMS = {"features": 0, "pose": 1, "pixels": 2, "depth": 3, "affine": 4, "score": 5}


# ---------------------------------------------------------------------------
# configuration


@dataclass
class TerrainSpec:
    kind: str = "planar"  # planar | step | slope
    height: float = 0.0
    roof_height: float = 30.0
    edge_point: tuple[float, float] = (0.0, 0.0)
    edge_direction: tuple[float, float] = (1.0, 0.0)  # building lies to the left of this direction
    gradient: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("planar", "step", "slope"):
            raise ConfigError(f"unknown terrain kind {self.kind!r}")


@dataclass
class TargetSpec:
    control_points: list
    speed: float = 3.0
    size: tuple[float, float, float] = (4.5, 2.0, 1.5)  # length, width, height (m)
    start: float = 0.0  # arclength at t = 0

    def __post_init__(self):
        if len(self.control_points) < 4:
            raise ConfigError("target spline needs at least 4 control points")
        if min(self.size) <= 0:
            raise ConfigError("target size must be positive")


@dataclass
class DecoySpec:
    lateral_offset: float = 3.0  # to the left of the target path (m)
    speed: float = 3.0
    start_offset: float = 0.0  # arclength ahead of the target at t = 0


@dataclass
class CameraSpec:
    altitude: float = 16.0  # above the terrain under the target
    tilt_deg: float = 0.0  # off-nadir angle of the optical axis
    tilt_azimuth_deg: float = 0.0  # 0 = along heading, +90 = to the left
    aim: bool = True  # place the camera so the optical axis passes through the target
    follow_offset: tuple[float, float] = (0.0, 0.0)  # extra (forward, left) offset (m)
    width: int = 512
    height: int = 512
    fov_deg: float = 110.0


@dataclass
class NoiseSpec:
    pixel_sigma: float = 0.5
    pose_trans_sigma: float = 0.05
    pose_rot_sigma_deg: float = 0.2
    pose_drift: bool = False
    depth_sigma: float = 5e-4  # relative inverse-depth noise
    bbox_corruption: float = 0.0  # target-region bias, metres towards the camera
    target_confidence: tuple[float, float] = (0.88, 1.0)
    decoy_amplitude: tuple[float, float] = (0.9, 1.05)
    score_background: float = 0.05

    def __post_init__(self):
        sig = (self.pixel_sigma, self.pose_trans_sigma, self.pose_rot_sigma_deg, self.depth_sigma,
               self.bbox_corruption, self.score_background)
        if min(sig) < 0:
            raise ConfigError("noise magnitudes must be non-negative")


@dataclass
class FeatureSpec:
    density: float = 4.0  # ground features per m^2
    roof_density: float = 0.0
    roof_strip: float = 2.0  # width of the dense roof band next to the edge (m)
    pad: float = 25.0
    clutter_fraction: float = 0.0
    clutter_height: tuple[float, float] = (2.0, 10.0)
    textureless: list = field(default_factory=list)  # [x, y, radius] discs without features


@dataclass
class SceneSpec:
    name: str
    terrain: TerrainSpec
    target: TargetSpec
    camera: CameraSpec = field(default_factory=CameraSpec)
    decoys: list = field(default_factory=list)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    features: FeatureSpec = field(default_factory=FeatureSpec)
    dt: float = 0.25
    n_frames: int = 60
    seed: int = 0
    occlusions: list = field(default_factory=list)  # [first, last) frame ranges
    occlusion_gain: float = 0.1
    score_stride: int = 2
    bump_sigma_frac: float = 0.4  # score bump std as a fraction of the bbox min side
    theta0_range: tuple[float, float] = (-0.005, 0.005)
    theta1_range: tuple[float, float] = (0.02, 0.05)

    def __post_init__(self):
        self.decoys = [d if isinstance(d, DecoySpec) else _from_dict(DecoySpec, d) for d in self.decoys]
        if self.dt <= 0 or self.n_frames < 1:
            raise ConfigError("dt must be positive and n_frames at least 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return _from_dict(cls, d)

    @classmethod
    def from_json(cls, text: str) -> "SceneSpec":
        return cls.from_dict(json.loads(text))

    def with_seed(self, seed: int) -> "SceneSpec":
        return dataclasses.replace(self, seed=int(seed))


def _from_dict(cls, d):
    if not isinstance(d, dict):
        raise ConfigError(f"{cls.__name__} expects an object, got {type(d).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for k, v in d.items():
        hint = hints[k]
        if dataclasses.is_dataclass(hint) and isinstance(v, dict):
            v = _from_dict(hint, v)
        elif typing.get_origin(hint) is tuple:
            v = tuple(v)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# terrain


class Terrain:
    def __init__(self, spec: TerrainSpec):
        self.spec = spec
        e = np.asarray(spec.edge_direction, dtype=float)
        self._edge_dir = e / np.linalg.norm(e)
        self._edge_normal = np.array([-self._edge_dir[1], self._edge_dir[0]])  # into the building
        self._edge_point = np.asarray(spec.edge_point, dtype=float)

    def side(self, xy) -> np.ndarray:
        """Signed distance from the building edge, positive on the roof side."""
        return (np.asarray(xy, dtype=float)[..., :2] - self._edge_point) @ self._edge_normal

    def height(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        s = self.spec
        if s.kind == "slope":
            return s.height + xy[..., 0] * s.gradient[0] + xy[..., 1] * s.gradient[1]
        h = np.full(xy.shape[:-1], s.height)
        if s.kind == "step":
            h = np.where(self.side(xy) > 0, s.roof_height, h)
        return h

    def label(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        lab = np.full(xy.shape[:-1], GROUND, dtype=np.uint8)
        if self.spec.kind == "step":
            lab[self.side(xy) > 0] = ROOF
        return lab

    def intersect(self, origin, dirs) -> tuple[np.ndarray, np.ndarray]:
        """Ray parameter of the first terrain hit along ``origin + t * dirs`` (inf if none)."""
        o = np.asarray(origin, dtype=float)
        d = np.asarray(dirs, dtype=float)
        s = self.spec
        t = np.full(d.shape[:-1], np.inf)
        lab = np.full(d.shape[:-1], NONE, dtype=np.uint8)
        with np.errstate(divide="ignore", invalid="ignore"):
            if s.kind in ("planar", "slope"):
                gx, gy = s.gradient if s.kind == "slope" else (0.0, 0.0)
                n = np.array([-gx, -gy, 1.0])
                tt = (s.height - o @ n) / (d @ n)
                ok = np.isfinite(tt) & (tt > 0)
                t[ok] = tt[ok]
                lab[ok] = GROUND
                return t, lab
            side_o = float((o[:2] - self._edge_point) @ self._edge_normal)
            dside = d[..., :2] @ self._edge_normal
            for plane_h, want_roof, code in ((s.height, False, GROUND), (s.roof_height, True, ROOF)):
                tt = (plane_h - o[2]) / d[..., 2]
                on_roof = side_o + tt * dside > 0
                ok = np.isfinite(tt) & (tt > 0) & (on_roof == want_roof) & (tt < t)
                t[ok] = tt[ok]
                lab[ok] = code
            tw = -side_o / dside
            zw = o[2] + tw * d[..., 2]
            ok = np.isfinite(tw) & (tw > 0) & (zw >= s.height) & (zw <= s.roof_height) & (tw < t)
            t[ok] = tw[ok]
            lab[ok] = WALL
        return t, lab


def _box_intersect(origin, dirs, center, heading, size) -> np.ndarray:
    """Slab test against an oriented box; returns the entry parameter or inf."""
    c, s = np.cos(heading), np.sin(heading)
    Rz = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])  # world -> box
    o = Rz @ (np.asarray(origin, dtype=float) - center)
    d = np.asarray(dirs, dtype=float) @ Rz.T
    half = 0.5 * np.asarray(size, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - o) / d
        t2 = (half - o) / d
    t1 = np.where(np.isnan(t1), -np.inf, t1)
    t2 = np.where(np.isnan(t2), np.inf, t2)
    tnear = np.minimum(t1, t2).max(axis=-1)
    tfar = np.maximum(t1, t2).min(axis=-1)
    hit = (tnear <= tfar) & (tnear > 0)
    return np.where(hit, tnear, np.inf)


def _rotvec(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    th = np.linalg.norm(v)
    if th < 1e-15:
        return np.eye(3)
    k = v / th
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(th) * K + (1 - np.cos(th)) * K @ K


def _rng(seed: int, frame: int, stream: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(frame), _STREAMS[stream]])


# ---------------------------------------------------------------------------
# frames


@dataclass
class FrameBundle:
    index: int
    time: float
    intrinsics: Intrinsics
    true_pose: Pose
    pose: Pose  # noisy estimate handed to the pipeline
    target_position: np.ndarray  # box centroid
    target_size: tuple
    bbox: BoundingBox
    feature_ids: np.ndarray
    feature_pixels: np.ndarray
    feature_true_pixels: np.ndarray
    feature_labels: np.ndarray
    rel_depth: RelativeInvDepthMap
    hidden_affine: AffineParams
    true_inv_depth: np.ndarray
    surface_labels: np.ndarray
    score_map: ScoreMap  # full-image response at the scene stride
    target_pixel: np.ndarray
    decoy_pixels: np.ndarray
    occluded: bool = False

    def observations(self) -> dict[int, np.ndarray]:
        return {int(i): p for i, p in zip(self.feature_ids, self.feature_pixels)}

    def export_grids(self, directory, prefix: str = "") -> list[Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        out = []
        grids = {
            "rel_inv_depth": np.where(self.rel_depth.valid, self.rel_depth.values, 0.0),
            "true_inv_depth": self.true_inv_depth,
            "labels": self.surface_labels.astype(np.uint8),
            "score": self.score_map.scores,
        }
        for name, g in grids.items():
            p = d / f"{prefix}{name}_{self.index:04d}.grid"
            write_grid(p, g)
            out.append(p)
        return out


class Scene:
    """Runtime form of a :class:`SceneSpec` with static features precomputed."""

    def __init__(self, spec: SceneSpec):
        self.spec = spec
        self.terrain = Terrain(spec.terrain)
        self.path = CatmullRom(np.asarray(spec.target.control_points, dtype=float)[:, :2])
        cam = spec.camera
        self.intr = Intrinsics.from_fov(cam.width, cam.height, cam.fov_deg)
        end = spec.target.start + spec.target.speed * (spec.n_frames - 1) * spec.dt
        if spec.target.start < 0 or end > self.path.length + 1e-9:
            raise ConfigError(f"target leaves its spline ({end:.3f} > {self.path.length:.3f} m)")
        u, v = np.meshgrid(np.arange(cam.width) + 0.5, np.arange(cam.height) + 0.5)
        self._rays = self.intr.normalized(np.stack([u, v], axis=-1))
        self._make_features()

    @property
    def duration(self) -> float:
        return (self.spec.n_frames - 1) * self.spec.dt

    def _make_features(self):
        fs = self.spec.features
        rng = _rng(self.spec.seed, 0, "features")
        s_grid = np.linspace(0, self.path.length, 64)
        xy = np.array([self.path(s) for s in s_grid])
        lo = xy.min(axis=0) - fs.pad
        hi = xy.max(axis=0) + fs.pad
        area = float(np.prod(hi - lo))
        pts = lo + rng.random((rng.poisson(fs.density * area), 2)) * (hi - lo)
        if self.spec.terrain.kind == "step":
            # sparse ground, plus a dense band on the roof along the edge
            t = self.terrain
            pts = pts[t.side(pts) <= 0]
            along = (np.vstack([lo, hi, [lo[0], hi[1]], [hi[0], lo[1]]]) - t._edge_point) @ t._edge_dir
            a0, a1 = along.min(), along.max()
            n_roof = rng.poisson(fs.roof_density * fs.roof_strip * (a1 - a0))
            a = a0 + rng.random(n_roof) * (a1 - a0)
            w = rng.random(n_roof) * fs.roof_strip
            roof = t._edge_point + a[:, None] * t._edge_dir + (w[:, None] + 1e-6) * t._edge_normal
            pts = np.vstack([pts, roof])
        for x, y, r in fs.textureless:
            pts = pts[np.hypot(pts[:, 0] - x, pts[:, 1] - y) > r]
        z = self.terrain.height(pts)
        labels = self.terrain.label(pts)
        if fs.clutter_fraction > 0:
            lift = rng.random(len(pts)) < fs.clutter_fraction
            h0, h1 = fs.clutter_height
            z = z + np.where(lift, h0 + rng.random(len(pts)) * (h1 - h0), 0.0)
            labels = np.where(lift, CLUTTER, labels).astype(np.uint8)
        self.features = np.column_stack([pts, z])
        self.feature_labels = labels

    # -- kinematics ---------------------------------------------------------

    def target_state(self, t: float) -> tuple[np.ndarray, float]:
        """Box centroid and heading at time ``t``."""
        s = self.spec.target.start + self.spec.target.speed * t
        xy = self.path(s)
        tan = self.path.tangent(s)
        ground = float(self.terrain.height(xy))
        c = np.array([xy[0], xy[1], ground + 0.5 * self.spec.target.size[2]])
        return c, float(np.arctan2(tan[1], tan[0]))

    def decoy_states(self, t: float) -> list[tuple[np.ndarray, float]]:
        out = []
        for d in self.spec.decoys:
            s = self.spec.target.start + d.start_offset + d.speed * t
            if not 0 <= s <= self.path.length:
                continue
            xy = self.path(s)
            tan = self.path.tangent(s)
            xy = xy + d.lateral_offset * np.array([-tan[1], tan[0]])
            ground = float(self.terrain.height(xy))
            out.append((np.array([xy[0], xy[1], ground + 0.5 * self.spec.target.size[2]]),
                        float(np.arctan2(tan[1], tan[0]))))
        return out

    def camera_pose(self, t: float) -> Pose:
        cam = self.spec.camera
        target, heading = self.target_state(t)
        f = np.array([np.cos(heading), np.sin(heading), 0.0])
        left = np.array([-f[1], f[0], 0.0])
        down = np.array([0.0, 0.0, -1.0])
        y_c = -f
        R = np.column_stack([np.cross(y_c, down), y_c, down])
        beta = np.radians(cam.tilt_deg)
        az = np.radians(cam.tilt_azimuth_deg)
        tilt_dir = np.cos(az) * f + np.sin(az) * left
        if beta != 0:
            R = _rotvec(np.cross(down, tilt_dir) * beta) @ R
        ground = target[2] - 0.5 * self.spec.target.size[2]
        C = np.array([target[0], target[1], ground + cam.altitude])
        if cam.aim:
            C[:2] -= (C[2] - target[2]) * np.tan(beta) * tilt_dir[:2]
        C[:2] += cam.follow_offset[0] * f[:2] + cam.follow_offset[1] * left[:2]
        return Pose(R, C)

    def noisy_pose(self, frame: int, true_pose: Pose) -> Pose:
        ns = self.spec.noise
        frames = range(frame + 1) if ns.pose_drift else [frame]
        dt_, dr = np.zeros(3), np.zeros(3)
        for k in frames:
            g = _rng(self.spec.seed, k, "pose")
            dt_ += g.normal(0.0, ns.pose_trans_sigma, 3)
            dr += g.normal(0.0, np.radians(ns.pose_rot_sigma_deg), 3)
        return Pose(_rotvec(dr) @ true_pose.rotation, true_pose.translation + dt_)

    # -- rendering ----------------------------------------------------------

    def _bbox(self, center, heading, pose) -> BoundingBox:
        L, W, H = self.spec.target.size
        c, s = np.cos(heading), np.sin(heading)
        corners = np.array([[sx * L / 2, sy * W / 2, sz * H / 2] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
        corners = corners @ np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]]).T + center
        pix, _ = project_many(corners, pose, self.intr)
        lo, hi = pix.min(axis=0), pix.max(axis=0)
        return BoundingBox(tuple(0.5 * (lo + hi)), float(hi[0] - lo[0]), float(hi[1] - lo[1]))

    def _features(self, frame: int, pose: Pose):
        pix, z = project_many(self.features, pose, self.intr)
        idx = np.flatnonzero((z > 0) & self.intr.contains(pix))
        C = pose.translation
        t_hit, _ = self.terrain.intersect(C, self.features[idx] - C)
        idx = idx[t_hit >= 1 - 1e-9]
        true_pix = pix[idx]
        g = _rng(self.spec.seed, frame, "pixels")
        noisy = true_pix + g.normal(0.0, self.spec.noise.pixel_sigma, true_pix.shape)
        keep = self.intr.contains(noisy)
        return idx[keep], noisy[keep], true_pix[keep], self.feature_labels[idx[keep]]

    def _depth(self, pose: Pose, center, heading, bbox):
        dirs = self._rays @ pose.rotation.T
        t, labels = self.terrain.intersect(pose.translation, dirs)
        x0, x1 = max(int(np.floor(bbox.x0)), 0), min(int(np.ceil(bbox.x1)) + 1, self.intr.width)
        y0, y1 = max(int(np.floor(bbox.y0)), 0), min(int(np.ceil(bbox.y1)) + 1, self.intr.height)
        if x1 > x0 and y1 > y0:
            tb = _box_intersect(pose.translation, dirs[y0:y1, x0:x1], center, heading, self.spec.target.size)
            sub_t, sub_l = t[y0:y1, x0:x1], labels[y0:y1, x0:x1]
            hit = tb < sub_t
            sub_t[hit] = tb[hit]
            sub_l[hit] = TARGET
        # unnormalized rays have unit camera z, so t is the depth
        with np.errstate(divide="ignore"):
            inv = np.where(np.isfinite(t), 1.0 / t, 0.0)
        return inv, labels

    def _score_map(self, frame, pose, target_pix, bbox, t):
        sp = self.spec
        s = sp.score_stride
        h, w = self.intr.height // s, self.intr.width // s
        g = _rng(sp.seed, frame, "score")
        scores = sp.noise.score_background * g.random((h, w))
        jj, ii = np.meshgrid((np.arange(w) + 0.5) * s, (np.arange(h) + 0.5) * s)
        sigma = max(sp.bump_sigma_frac * min(bbox.width, bbox.height), s)
        occluded = any(a <= frame < b for a, b in sp.occlusions)
        amp_t = g.uniform(*sp.noise.target_confidence) * (sp.occlusion_gain if occluded else 1.0)

        def bump(p, a):
            return a * np.exp(-((jj - p[0]) ** 2 + (ii - p[1]) ** 2) / (2 * sigma**2))

        scores = np.maximum(scores, bump(target_pix, amp_t))
        decoy_pix = []
        for c, _ in self.decoy_states(t):
            p, z = project_many(c[None], pose, self.intr)
            amp = g.uniform(*sp.noise.decoy_amplitude)
            if z[0] > 0 and self.intr.contains(p[0]):
                scores = np.maximum(scores, bump(p[0], amp))
                decoy_pix.append(p[0])
        sm = ScoreMap(scores, (self.intr.width / 2, self.intr.height / 2), float(s))
        return sm, np.array(decoy_pix).reshape(-1, 2), occluded

    def render(self, frame: int) -> FrameBundle:
        sp = self.spec
        if not 0 <= frame < sp.n_frames:
            raise OutOfDomain(f"frame {frame} outside [0, {sp.n_frames})")
        t = frame * sp.dt
        pose = self.camera_pose(t)
        center, heading = self.target_state(t)
        bbox = self._bbox(center, heading, pose)
        ids, pix, true_pix, flabels = self._features(frame, pose)
        inv, labels = self._depth(pose, center, heading, bbox)

        g = _rng(sp.seed, frame, "depth")
        noisy = inv * (1.0 + sp.noise.depth_sigma * g.standard_normal(inv.shape))
        if sp.noise.bbox_corruption > 0:
            x0, x1 = max(int(np.floor(bbox.x0)), 0), min(int(np.ceil(bbox.x1)), self.intr.width)
            y0, y1 = max(int(np.floor(bbox.y0)), 0), min(int(np.ceil(bbox.y1)), self.intr.height)
            sub = noisy[y0:y1, x0:x1]
            with np.errstate(divide="ignore"):
                z = 1.0 / sub
            noisy[y0:y1, x0:x1] = 1.0 / np.maximum(z - sp.noise.bbox_corruption, 0.25 * z)
        ga = _rng(sp.seed, frame, "affine")
        theta = AffineParams(float(ga.uniform(*sp.theta0_range)), float(ga.uniform(*sp.theta1_range)))
        valid = inv > 0
        rel = np.where(valid, (noisy - theta.theta0) / theta.theta1, np.nan)

        target_pix = project_many(center[None], pose, self.intr)[0][0]
        sm, decoy_pix, occluded = self._score_map(frame, pose, target_pix, bbox, t)
        return FrameBundle(
            index=frame,
            time=t,
            intrinsics=self.intr,
            true_pose=pose,
            pose=self.noisy_pose(frame, pose),
            target_position=center,
            target_size=tuple(sp.target.size),
            bbox=bbox,
            feature_ids=ids,
            feature_pixels=pix,
            feature_true_pixels=true_pix,
            feature_labels=flabels,
            rel_depth=RelativeInvDepthMap(rel, valid),
            hidden_affine=theta,
            true_inv_depth=inv,
            surface_labels=labels,
            score_map=sm,
            target_pixel=target_pix,
            decoy_pixels=decoy_pix,
            occluded=occluded,
        )


def render_frame(scene: Scene | SceneSpec, frame: int) -> FrameBundle:
    if isinstance(scene, SceneSpec):
        scene = Scene(scene)
    return scene.render(frame)


# ---------------------------------------------------------------------------
# canonical scenes


def desert_scene(seed: int = 0) -> SceneSpec:
    """Planar textured ground at 16 m altitude, one overtaking look-alike vehicle."""
    return SceneSpec(
        name="desert",
        terrain=TerrainSpec("planar", height=0.0),
        target=TargetSpec([[0, 0], [30, 3], [60, -3], [90, 0]], speed=3.0, size=(4.5, 2.0, 1.5)),
        camera=CameraSpec(altitude=16.0, tilt_deg=20.0),
        decoys=[DecoySpec(lateral_offset=2.5, speed=5.5, start_offset=-16.0)],
        noise=NoiseSpec(),
        features=FeatureSpec(density=4.0, clutter_fraction=0.1, clutter_height=(0.3, 1.5)),
        dt=0.25,
        n_frames=48,
        seed=seed,
        occlusions=[[6, 9]],
    )


def city_scene(seed: int = 0) -> SceneSpec:
    """Flight along a 30 m roof edge looking down at a street 10 m off the building."""
    return SceneSpec(
        name="city",
        terrain=TerrainSpec("step", height=0.0, roof_height=30.0, edge_point=(0.0, 0.0), edge_direction=(1.0, 0.0)),
        target=TargetSpec([[0, -10], [10, -10], [20, -10], [30, -10]], speed=1.5, size=(8.0, 2.5, 3.0)),
        camera=CameraSpec(altitude=32.0, tilt_deg=19.0, tilt_azimuth_deg=-90.0),
        noise=NoiseSpec(),
        features=FeatureSpec(density=0.6, roof_density=300.0, roof_strip=2.5, pad=30.0),
        dt=0.25,
        n_frames=60,
        seed=seed,
    )


def mountain_scene(seed: int = 0) -> SceneSpec:
    """Sloped terrain with trees, a 65 degree turn after 50 m and a featureless lake."""
    turn = np.radians(65.0)
    d = np.array([np.cos(turn), np.sin(turn)])
    pts = [[0, 0], [25, 0], [50, 0], list(np.array([50, 0]) + 16 * d), list(np.array([50, 0]) + 32 * d)]
    return SceneSpec(
        name="mountain",
        terrain=TerrainSpec("slope", height=0.0, gradient=(0.12, 0.08)),
        target=TargetSpec([[float(a), float(b)] for a, b in pts], speed=3.5, size=(7.0, 3.5, 2.5)),
        camera=CameraSpec(altitude=30.0, tilt_deg=15.0),
        noise=NoiseSpec(),
        features=FeatureSpec(density=3.0, clutter_fraction=0.2, clutter_height=(3.0, 12.0),
                             textureless=[[36.0, 0.0, 7.0]]),
        dt=0.25,
        n_frames=80,
        seed=seed,
    )


def make_ablation_suite(seed: int = 0) -> list[SceneSpec]:
    return [desert_scene(seed), city_scene(seed), mountain_scene(seed)]


SCENES = {"desert": desert_scene, "city": city_scene, "mountain": mountain_scene}
