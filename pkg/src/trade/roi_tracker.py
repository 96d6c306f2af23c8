"""ROI feature tracking around the target bounding box.

The region of interest is the bounding box grown by a margin and split 3x3;
the centre cell is the box itself and is never tracked. Static ground
features in the eight outer tiles are triangulated against their first
observation every frame and fused into an inverse-depth Gaussian.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import RoiOutsideImage
from .geometry import Intrinsics, Pose, triangulate_batch

MAX_PER_TILE = 25


@dataclass(frozen=True)
class BoundingBox:
    center: tuple[float, float]
    width: float
    height: float

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("bounding box must have positive width and height")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @property
    def x0(self) -> float:
        return self.center[0] - self.width / 2

    @property
    def x1(self) -> float:
        return self.center[0] + self.width / 2

    @property
    def y0(self) -> float:
        return self.center[1] - self.height / 2

    @property
    def y1(self) -> float:
        return self.center[1] + self.height / 2

    def contains(self, pixels) -> np.ndarray:
        p = np.asarray(pixels, dtype=float)
        return (p[..., 0] >= self.x0) & (p[..., 0] < self.x1) & (p[..., 1] >= self.y0) & (p[..., 1] < self.y1)

    def moved_to(self, center) -> "BoundingBox":
        return BoundingBox(tuple(center), self.width, self.height)


@dataclass(frozen=True)
class RoiGrid:
    """3x3 grid; ``tiles`` holds the 8 outer cells as (x0, y0, x1, y1), row-major."""

    bbox: BoundingBox
    margin_factor: float
    rect: tuple[float, float, float, float]
    tiles: tuple[tuple[float, float, float, float], ...]

    def tile_index(self, pixels) -> np.ndarray:
        """Tile id (0..7) for each pixel, -1 when outside the ROI or inside the box."""
        p = np.atleast_2d(np.asarray(pixels, dtype=float))
        out = np.full(len(p), -1, dtype=int)
        for k, (x0, y0, x1, y1) in enumerate(self.tiles):
            inside = (p[:, 0] >= x0) & (p[:, 0] < x1) & (p[:, 1] >= y0) & (p[:, 1] < y1)
            out[inside & (out < 0)] = k
        return out

    def contains(self, pixels) -> np.ndarray:
        return self.tile_index(pixels) >= 0


class TrackStatus(enum.Enum):
    IMMATURE = "immature"
    MATURE = "mature"
    LOST = "lost"


@dataclass
class FeatureTrack:
    id: int
    first_pixel: np.ndarray
    first_pose: Pose
    current_pixel: np.ndarray
    inv_depth_mean: float = 0.0
    inv_depth_var: float = np.inf
    status: TrackStatus = TrackStatus.IMMATURE
    n_fused: int = 0

    @property
    def live(self) -> bool:
        return self.status is not TrackStatus.LOST


def update_roi(bbox: BoundingBox, margin_factor: float, intr: Intrinsics | None = None) -> RoiGrid:
    if not margin_factor > 0:
        raise ValueError("margin_factor must be positive")
    m = margin_factor * min(bbox.width, bbox.height)
    xs = [bbox.x0 - m, bbox.x0, bbox.x1, bbox.x1 + m]
    ys = [bbox.y0 - m, bbox.y0, bbox.y1, bbox.y1 + m]
    if intr is not None:
        xs = list(np.clip(xs, 0.0, float(intr.width)))
        ys = list(np.clip(ys, 0.0, float(intr.height)))
    tiles = []
    for r in range(3):
        for c in range(3):
            if r == 1 and c == 1:
                continue
            tile = (xs[c], ys[r], xs[c + 1], ys[r + 1])
            if tile[2] - tile[0] <= 0 or tile[3] - tile[1] <= 0:
                raise RoiOutsideImage(f"ROI tile ({r}, {c}) has zero area after clamping")
            tiles.append(tile)
    return RoiGrid(bbox, margin_factor, (xs[0], ys[0], xs[3], ys[3]), tuple(tiles))


def fuse_inverse_depth(prior: tuple[float, float], meas: tuple[float, float]) -> tuple[float, float]:
    """Product of two Gaussians over inverse depth (precision-weighted mean)."""
    mp, vp = prior
    mm, vm = meas
    var = 1.0 / (1.0 / vp + 1.0 / vm)
    return var * (mp / vp + mm / vm), var


def _fuse_arrays(mp, vp, mm, vm):
    var = 1.0 / (1.0 / vp + 1.0 / vm)
    return var * (mp / vp + mm / vm), var


def is_mature(mean: float, var: float, ratio: float) -> bool:
    return mean > 0 and np.isfinite(var) and np.sqrt(var) <= ratio * mean


def replenish_tracks(
    grid: RoiGrid,
    live: Iterable[FeatureTrack],
    candidates: Iterable[tuple[int, np.ndarray]],
    pose: Pose,
    max_per_tile: int = MAX_PER_TILE,
) -> list[FeatureTrack]:
    """New tracks topping each tile up to ``max_per_tile``; candidates taken in order."""
    live = [t for t in live if t.live]
    live_ids = {t.id for t in live}
    counts = np.zeros(len(grid.tiles), dtype=int)
    if live:
        idx = grid.tile_index(np.array([t.current_pixel for t in live]))
        for k in idx[idx >= 0]:
            counts[k] += 1
    new = []
    cands = [(fid, pix) for fid, pix in candidates if fid not in live_ids]
    if not cands:
        return new
    tiles = grid.tile_index(np.array([np.asarray(p, dtype=float) for _, p in cands]).reshape(-1, 2))
    for (fid, pix), k in zip(cands, tiles):
        pix = np.asarray(pix, dtype=float)
        if k < 0 or counts[k] >= max_per_tile or fid in live_ids:
            continue
        counts[k] += 1
        live_ids.add(fid)
        new.append(FeatureTrack(int(fid), pix.copy(), pose, pix.copy()))
    return new


def step_tracks(
    tracks: Iterable[FeatureTrack],
    observations: Mapping[int, np.ndarray],
    pose: Pose,
    intr: Intrinsics,
    grid: RoiGrid | None = None,
    promotion_ratio: float = 0.05,
    min_baseline: float = 1e-3,
    pixel_sigma: float = 1.0,
) -> list[FeatureTrack]:
    """Advance tracks one frame in place and return them.

    Unobserved tracks and tracks leaving the ROI become LOST. Observed tracks
    whose baseline is degenerate keep their estimate untouched.
    """
    tracks = [t for t in tracks if t.live]
    seen = []
    for t in tracks:
        pix = observations.get(t.id)
        if pix is None:
            t.status = TrackStatus.LOST
            continue
        t.current_pixel = np.asarray(pix, dtype=float)
        seen.append(t)
    if grid is not None and seen:
        inside = grid.contains(np.array([t.current_pixel for t in seen]))
        for t, ok in zip(seen, inside):
            if not ok:
                t.status = TrackStatus.LOST
        seen = [t for t, ok in zip(seen, inside) if ok]
    active = seen
    if not active:
        return tracks

    pix0 = np.array([t.first_pixel for t in active])
    pix1 = np.array([t.current_pixel for t in active])
    # per-track anchor-ray baselines
    R0 = np.array([t.first_pose.rotation for t in active])
    C0 = np.array([t.first_pose.translation for t in active])
    f0 = np.einsum("nij,nj->ni", R0, intr.normalized(pix0))
    f0 /= np.linalg.norm(f0, axis=1, keepdims=True)
    b = pose.translation - C0
    base = np.linalg.norm(b - np.sum(b * f0, axis=1, keepdims=True) * f0, axis=1)
    ok = base >= min_baseline
    if ok.any():
        sel = [t for t, good in zip(active, ok) if good]
        rho, var = triangulate_batch(pix0[ok], R0[ok], C0[ok], pix1[ok], pose, intr, pixel_sigma=pixel_sigma)
        mp = np.array([t.inv_depth_mean for t in sel])
        vp = np.array([t.inv_depth_var for t in sel])
        good = np.isfinite(rho) & np.isfinite(var) & (var > 0)
        mean, v = _fuse_arrays(mp, vp, rho, var)
        for t, m_, v_, g in zip(sel, mean, v, good):
            if not g:
                continue
            t.inv_depth_mean = float(m_)
            t.inv_depth_var = float(v_)
            t.n_fused += 1
    for t in active:
        t.status = TrackStatus.MATURE if is_mature(t.inv_depth_mean, t.inv_depth_var, promotion_ratio) else TrackStatus.IMMATURE
    return tracks


def mature_points(tracks: Iterable[FeatureTrack], intr: Intrinsics) -> tuple[np.ndarray, np.ndarray]:
    """World points of MATURE tracks, backprojected from their anchor observation.

    Returns ``(ids, points)`` with shapes (N,) and (N, 3).
    """
    mature = [t for t in tracks if t.status is TrackStatus.MATURE]
    if not mature:
        return np.zeros(0, dtype=int), np.zeros((0, 3))
    ids = np.array([t.id for t in mature], dtype=int)
    pts = np.array(
        [t.first_pose.to_world(intr.normalized(t.first_pixel) / t.inv_depth_mean) for t in mature]
    )
    return ids, pts


@dataclass
class RoiTracker:
    """Stateful owner of the ROI tracks (single writer)."""

    intr: Intrinsics
    margin_factor: float = 1.0
    max_per_tile: int = MAX_PER_TILE
    promotion_ratio: float = 0.05
    min_baseline: float = 1e-3
    pixel_sigma: float = 1.0
    tracks: dict[int, FeatureTrack] = field(default_factory=dict)
    grid: RoiGrid | None = None

    def step(self, bbox: BoundingBox, pose: Pose, observations: Mapping[int, np.ndarray], candidates) -> RoiGrid:
        self.grid = update_roi(bbox, self.margin_factor, self.intr)
        step_tracks(
            self.tracks.values(),
            observations,
            pose,
            self.intr,
            self.grid,
            promotion_ratio=self.promotion_ratio,
            min_baseline=self.min_baseline,
            pixel_sigma=self.pixel_sigma,
        )
        self.tracks = {i: t for i, t in self.tracks.items() if t.live}
        for t in replenish_tracks(self.grid, self.tracks.values(), candidates, pose, self.max_per_tile):
            self.tracks[t.id] = t
        return self.grid

    def mature_points(self) -> tuple[np.ndarray, np.ndarray]:
        return mature_points(self.tracks.values(), self.intr)

    def current_pixels(self) -> dict[int, np.ndarray]:
        return {i: t.current_pixel for i, t in self.tracks.items()}
