"""Robust plane extraction and temporal plane fusion.

``multi_ransac`` keeps up to N mutually distinct planes found by MSAC-scored
sampling; ``temporal_update`` accumulates inliers over frames in a bounded
FIFO, gated against the previous fused plane.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import CollinearPoints, InsufficientPoints, NegativeRange, NoIntersection, RayParallel
from .geometry import WORLD_UP, Plane, Ray, raycast_plane


@dataclass(frozen=True)
class PlaneHypothesis:
    plane: Plane
    inliers: np.ndarray  # indices into the fitted point array
    mse: float
    score: float

    @property
    def n_inliers(self) -> int:
        return len(self.inliers)


def fit_plane_tls(points, rel_eps: float = 1e-9) -> tuple[Plane, float]:
    """Total least squares plane: normal is the smallest principal direction."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        raise CollinearPoints("need at least three points")
    c = pts.mean(axis=0)
    d = pts - c
    cov = d.T @ d / len(pts)
    w, V = np.linalg.eigh(cov)
    # rank < 2 means the points span at most a line
    if w[1] <= rel_eps * max(w[2], 1e-300):
        raise CollinearPoints("points are collinear")
    n = V[:, 0]
    plane = Plane.from_point_normal(c, n)
    mse = float(np.mean(plane.signed_distance(pts) ** 2))
    return plane, mse


def _sample_planes(pts: np.ndarray, iters: int, rng: np.random.Generator):
    n = len(pts)
    idx = np.stack([rng.choice(n, size=3, replace=False) for _ in range(iters)]) if n < 8 else rng.integers(0, n, size=(iters, 3))
    a, b, c = pts[idx[:, 0]], pts[idx[:, 1]], pts[idx[:, 2]]
    normals = np.cross(b - a, c - a)
    norms = np.linalg.norm(normals, axis=1)
    scale = np.maximum(np.linalg.norm(b - a, axis=1) * np.linalg.norm(c - a, axis=1), 1e-300)
    ok = norms > 1e-9 * scale
    normals = normals[ok] / norms[ok, None]
    offsets = -np.einsum("ij,ij->i", normals, a[ok])
    return normals, offsets


def _hypothesis(plane: Plane, pts: np.ndarray, thresh: float) -> PlaneHypothesis:
    d2 = plane.signed_distance(pts) ** 2
    inl = np.flatnonzero(d2 < thresh**2)
    mse = float(d2[inl].mean()) if len(inl) else np.inf
    return PlaneHypothesis(plane, inl, mse, float(np.minimum(d2, thresh**2).sum()))


def _distinct(h: PlaneHypothesis, others, min_angle_cos: float, max_shared: float) -> bool:
    for o in others:
        cosang = abs(float(h.plane.normal @ o.plane.normal))
        shared = len(np.intersect1d(h.inliers, o.inliers, assume_unique=True))
        if cosang >= min_angle_cos or shared > max_shared * min(h.n_inliers, o.n_inliers):
            return False
    return True


def multi_ransac(
    points,
    inlier_thresh: float = 0.5,
    max_solutions: int = 4,
    min_angle_deg: float = 15.0,
    max_shared: float = 0.8,
    min_inlier_frac: float = 0.5,
    iters: int = 500,
    seed: int | np.random.Generator | None = 0,
) -> list[PlaneHypothesis]:
    """Up to ``max_solutions`` distinct planes, best MSAC score first.

    Two solutions are distinct only if their normals differ by more than
    ``min_angle_deg`` and they share at most ``max_shared`` of the smaller
    inlier set. Candidates are refit by total least squares on their inliers
    before the distinctness check, and finally any solution with fewer than
    ``min_inlier_frac`` times the largest inlier count is dropped.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        raise InsufficientPoints(f"{len(pts)} points, need at least 3")
    rng = np.random.default_rng(seed)
    normals, offsets = _sample_planes(pts, iters, rng)
    if len(normals) == 0:
        raise InsufficientPoints("every minimal sample was degenerate")

    t2 = inlier_thresh**2
    d2 = (pts @ normals.T + offsets[None, :]) ** 2
    inlier_mask = d2 < t2
    cost = np.minimum(d2, t2).sum(axis=0)
    order = np.argsort(cost, kind="stable")
    min_angle_cos = np.cos(np.radians(min_angle_deg))

    accepted: list[PlaneHypothesis] = []
    counts = inlier_mask.sum(axis=0)
    masks_f = inlier_mask.astype(np.float32)
    covered = counts < 3
    for k in order:
        if len(accepted) >= max_solutions:
            break
        if covered[k]:
            continue
        mask = inlier_mask[:, k]
        try:
            plane, _ = fit_plane_tls(pts[mask])
        except CollinearPoints:
            covered[k] = True
            continue
        h = _hypothesis(plane, pts, inlier_thresh)
        # near-copies of this sample, and candidates mostly inside its refit support,
        # would refit to the same plane
        shared = mask.astype(np.float32) @ masks_f
        covered |= (shared > max_shared * np.minimum(counts, counts[k])) & (np.abs(normals @ normals[k]) >= min_angle_cos)
        ref = np.zeros(len(pts), dtype=np.float32)
        ref[h.inliers] = 1.0
        covered |= ref @ masks_f > max_shared * counts
        covered[k] = True
        if h.n_inliers < 3:
            continue
        if _distinct(h, accepted, min_angle_cos, max_shared):
            accepted.append(h)
    if not accepted:
        raise InsufficientPoints("no plane hypothesis with at least 3 inliers")
    top = max(h.n_inliers for h in accepted)
    kept = [h for h in accepted if h.n_inliers >= min_inlier_frac * top]
    kept.sort(key=lambda h: h.score)
    return kept


def select_flattest(hypotheses, up=WORLD_UP, tol: float = 1e-12) -> PlaneHypothesis:
    """Hypothesis whose normal is closest to ``up``; ties: more inliers, then lower MSE."""
    hyps = list(hypotheses)
    if not hyps:
        raise ValueError("no hypotheses to select from")
    up = np.asarray(up, dtype=float)
    best = hyps[0]
    for h in hyps[1:]:
        a = abs(float(h.plane.normal @ up))
        b = abs(float(best.plane.normal @ up))
        if a > b + tol:
            best = h
        elif abs(a - b) <= tol:
            if h.n_inliers > best.n_inliers or (h.n_inliers == best.n_inliers and h.mse < best.mse):
                best = h
    return best


def raycast_uncertainty(planes, ray: Ray) -> tuple[float, float]:
    """Mean and population std of the ray range over all intersecting planes."""
    ranges = []
    for p in planes:
        plane = p.plane if isinstance(p, PlaneHypothesis) else p
        try:
            ranges.append(raycast_plane(ray, plane)[1])
        except (RayParallel, NegativeRange):
            continue
    if not ranges:
        raise NoIntersection("ray hits none of the plane hypotheses")
    r = np.array(ranges)
    return float(r.mean()), float(r.std())


@dataclass
class PlaneBuffer:
    capacity: int = 1000
    points: deque = field(default_factory=deque)
    frames: deque = field(default_factory=deque)

    def __len__(self):
        return len(self.points)

    def push(self, pts, frame: int):
        for p in np.asarray(pts, dtype=float).reshape(-1, 3):
            self.points.append(p)
            self.frames.append(frame)
        while len(self.points) > self.capacity:
            self.points.popleft()
            self.frames.popleft()

    def array(self) -> np.ndarray:
        return np.array(self.points) if self.points else np.zeros((0, 3))

    def copy(self) -> "PlaneBuffer":
        return PlaneBuffer(self.capacity, deque(self.points), deque(self.frames))


@dataclass(frozen=True)
class FusedPlaneModel:
    plane: Plane | None = None
    mse: float = np.inf
    last_update: int = -1
    valid: bool = False
    hypotheses: tuple = ()


@dataclass
class FusionConfig:
    gate_factor: float = 9.0
    # floor on the gate distance so a noise-free buffer does not reject exact points
    gate_floor: float = 0.05
    inlier_thresh: float = 0.5
    max_solutions: int = 4
    min_angle_deg: float = 15.0
    max_shared: float = 0.8
    min_inlier_frac: float = 0.5
    iters: int = 500


def temporal_update(
    buffer: PlaneBuffer,
    new_inliers,
    past: FusedPlaneModel,
    frame: int,
    cfg: FusionConfig | None = None,
    seed=0,
    up=WORLD_UP,
) -> tuple[PlaneBuffer, FusedPlaneModel]:
    """Gate, buffer, and refit. Returns a new buffer and model; inputs are not mutated."""
    cfg = cfg or FusionConfig()
    pts = np.asarray(new_inliers, dtype=float).reshape(-1, 3)
    if past.valid and len(pts):
        gate2 = max(cfg.gate_factor * past.mse, cfg.gate_floor**2)
        pts = pts[past.plane.signed_distance(pts) ** 2 < gate2]
    buf = buffer.copy()
    buf.push(pts, frame)
    try:
        hyps = multi_ransac(
            buf.array(),
            inlier_thresh=cfg.inlier_thresh,
            max_solutions=cfg.max_solutions,
            min_angle_deg=cfg.min_angle_deg,
            max_shared=cfg.max_shared,
            min_inlier_frac=cfg.min_inlier_frac,
            iters=cfg.iters,
            seed=seed,
        )
    except InsufficientPoints:
        return buf, past
    best = select_flattest(hyps, up)
    return buf, FusedPlaneModel(best.plane, best.mse, frame, True, tuple(hyps))

