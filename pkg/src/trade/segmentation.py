"""Ground-plane segmentation on a gravity-aligned organized point cloud.

The metric depth crop around the target is split into an n x n tile grid.
Every tile outside the bounding box gets a total-least-squares plane; seeds
are drawn next to the box below the object's height and grown tile by tile,
then border tiles are refined pixel by pixel against one plane fitted to the
whole grown region.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyBox, NoSeed, SegmentationFailed
from .geometry import WORLD_UP, Intrinsics, Plane, Pose, gravity_align
from .roi_tracker import BoundingBox

OUTSIDE, CROSSING, INSIDE = 0, 1, 2


@dataclass
class OrganizedCloud:
    points: np.ndarray  # (H, W, 3), z is height
    valid: np.ndarray  # (H, W) bool
    origin: tuple[int, int] = (0, 0)  # (u, v) of the top-left pixel in the full image

    @property
    def shape(self):
        return self.valid.shape

    def pixel_grid(self) -> tuple[np.ndarray, np.ndarray]:
        h, w = self.shape
        v, u = np.mgrid[0:h, 0:w]
        return u + self.origin[0], v + self.origin[1]


@dataclass
class TileGrid:
    n: int
    row_edges: np.ndarray
    col_edges: np.ndarray
    kind: np.ndarray  # (n, n) OUTSIDE / CROSSING / INSIDE relative to the bbox
    fitted: np.ndarray  # (n, n) bool
    normal: np.ndarray  # (n, n, 3)
    centroid: np.ndarray  # (n, n, 3)
    mse: np.ndarray  # (n, n)
    count: np.ndarray  # (n, n)
    mean_height: np.ndarray  # (n, n)
    seeding: np.ndarray  # (n, n) bool

    def tile_slice(self, r: int, c: int):
        return slice(self.row_edges[r], self.row_edges[r + 1]), slice(self.col_edges[c], self.col_edges[c + 1])

    def tile_plane(self, r: int, c: int) -> Plane:
        return Plane.from_point_normal(self.centroid[r, c], self.normal[r, c])


@dataclass
class GroundMask:
    pixels: np.ndarray  # (H, W) bool over the crop
    tiles: np.ndarray  # (n, n) bool, grown tiles
    origin: tuple[int, int] = (0, 0)
    plane: Plane | None = None
    plane_mse: float = float("nan")
    seeds: list = field(default_factory=list)

    def contains(self, pixels) -> np.ndarray:
        p = np.atleast_2d(np.asarray(pixels, dtype=float))
        u = np.floor(p[:, 0]).astype(int) - self.origin[0]
        v = np.floor(p[:, 1]).astype(int) - self.origin[1]
        h, w = self.pixels.shape
        inside = (u >= 0) & (u < w) & (v >= 0) & (v < h)
        out = np.zeros(len(p), dtype=bool)
        out[inside] = self.pixels[v[inside], u[inside]]
        return out


@dataclass
class SegmentationConfig:
    n_tiles: int = 20
    n_seeds: int = 8
    normal_dot_min: float = float(np.cos(np.radians(10.0)))
    alpha_deg: float = 3.0
    mse_max: float = 1e-3
    refine_factor: float = 9.0
    # "squared": d^2 < k * mse (default); "sqrt": d < k * sqrt(mse)
    refine_mode: str = "squared"
    refine_floor: float = 1e-6
    dilation: int = 1
    min_aspect: float = 0.1
    seed_max_tilt_deg: float | None = 30.0


def build_cloud(inv_depth: np.ndarray, valid: np.ndarray, crop, pose: Pose, intr: Intrinsics,
                up=WORLD_UP) -> OrganizedCloud:
    """Backproject an inverse-depth crop ``(u0, v0, u1, v1)`` and rotate it to gravity."""
    u0, v0, u1, v1 = crop
    rho = inv_depth[v0:v1, u0:u1].astype(float)
    ok = valid[v0:v1, u0:u1] & np.isfinite(rho) & (rho > 0)
    v, u = np.mgrid[v0:v1, u0:u1]
    ray = np.stack([(u + 0.5 - intr.cx) / intr.fx, (v + 0.5 - intr.cy) / intr.fy, np.ones(u.shape)], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cam = ray / np.where(ok, rho, 1.0)[..., None]
    pts = gravity_align(cam @ pose.rotation.T, up)
    pts[~ok] = np.nan
    return OrganizedCloud(pts, ok, (u0, v0))


def estimate_object_height(cloud: OrganizedCloud, bbox: BoundingBox) -> float:
    """Mean height of the valid cloud points inside the bounding box."""
    u, v = cloud.pixel_grid()
    inside = bbox.contains(np.stack([u + 0.5, v + 0.5], axis=-1)) & cloud.valid
    if not inside.any():
        raise EmptyBox("no valid depth inside the bounding box")
    return float(cloud.points[inside][:, 2].mean())


def _edges(length: int, n: int) -> np.ndarray:
    return np.round(np.linspace(0, length, n + 1)).astype(int)


def build_tile_grid(cloud: OrganizedCloud, bbox: BoundingBox, n: int = 20, dilation: int = 1,
                    min_aspect: float = 0.1) -> TileGrid:
    """Tile planes over the crop. Sliver tiles whose points are close to a line
    (second principal extent below ``min_aspect`` of the first) are left unfitted.
    """
    if n < 4:
        raise ValueError("tile grid needs n >= 4")
    h, w = cloud.shape
    re, ce = _edges(h, n), _edges(w, n)
    ou, ov = cloud.origin

    kind = np.zeros((n, n), dtype=int)
    for r in range(n):
        y0, y1 = re[r] + ov, re[r + 1] + ov
        for c in range(n):
            x0, x1 = ce[c] + ou, ce[c + 1] + ou
            ix = min(x1, bbox.x1) - max(x0, bbox.x0)
            iy = min(y1, bbox.y1) - max(y0, bbox.y0)
            if ix <= 0 or iy <= 0 or x1 <= x0 or y1 <= y0:
                continue
            full = x0 >= bbox.x0 and x1 <= bbox.x1 and y0 >= bbox.y0 and y1 <= bbox.y1
            kind[r, c] = INSIDE if full else CROSSING

    # per-tile moments, batched
    P = np.where(cloud.valid[..., None], cloud.points, 0.0)
    V = cloud.valid.astype(float)
    count = np.zeros((n, n))
    s1 = np.zeros((n, n, 3))
    s2 = np.zeros((n, n, 3, 3))
    rows = np.repeat(np.arange(n), np.diff(re))
    cols = np.repeat(np.arange(n), np.diff(ce))
    tid = rows[:, None] * n + cols[None, :]
    flat_id = tid.ravel()
    np.add.at(count.reshape(-1), flat_id, V.ravel())
    Pf = P.reshape(-1, 3)
    for a in range(3):
        np.add.at(s1.reshape(-1, 3)[:, a], flat_id, Pf[:, a])
        for b in range(a, 3):
            np.add.at(s2.reshape(-1, 3, 3)[:, a, b], flat_id, Pf[:, a] * Pf[:, b])
    for a in range(3):
        for b in range(a):
            s2[..., a, b] = s2[..., b, a]

    fitted = (count >= 3) & (kind != INSIDE)
    safe = np.maximum(count, 1)
    centroid = s1 / safe[..., None]
    cov = s2 / safe[..., None, None] - centroid[..., :, None] * centroid[..., None, :]
    cov = np.where(fitted[..., None, None], cov, np.eye(3))
    evals, evecs = np.linalg.eigh(cov)
    normal = evecs[..., :, 0]
    normal = np.where((normal[..., 2] < 0)[..., None], -normal, normal)
    mse = np.where(fitted, np.maximum(evals[..., 0], 0.0), np.inf)
    # near-collinear tiles have an arbitrary normal and a misleadingly small MSE
    fitted &= evals[..., 1] > max(min_aspect**2, 1e-12) * np.maximum(evals[..., 2], 1e-300)
    mse = np.where(fitted, mse, np.inf)

    crossing = kind == CROSSING
    seeding = crossing.copy()
    for _ in range(dilation):
        grown = seeding.copy()
        grown[1:, :] |= seeding[:-1, :]
        grown[:-1, :] |= seeding[1:, :]
        grown[:, 1:] |= seeding[:, :-1]
        grown[:, :-1] |= seeding[:, 1:]
        grown[1:, 1:] |= seeding[:-1, :-1]
        grown[:-1, :-1] |= seeding[1:, 1:]
        grown[1:, :-1] |= seeding[:-1, 1:]
        grown[:-1, 1:] |= seeding[1:, :-1]
        seeding = grown
    seeding &= kind != INSIDE

    return TileGrid(n, re, ce, kind, fitted, normal, centroid, mse, count.astype(int),
                    centroid[..., 2].copy(), seeding)


def select_seed(grid: TileGrid, object_height: float, used, min_up: float | None = None) -> tuple[int, int]:
    """Lowest-MSE unused seeding tile whose mean height does not exceed the object's.

    With ``min_up`` set, tiles whose normal has a smaller vertical component
    (walls, vehicle sides) cannot seed.
    """
    cand = grid.seeding & grid.fitted & (grid.mean_height <= object_height)
    if min_up is not None:
        cand &= grid.normal[..., 2] >= min_up
    for r, c in used:
        cand[r, c] = False
    if not cand.any():
        raise NoSeed("no seeding tile passes the height gate")
    mse = np.where(cand, grid.mse, np.inf)
    r, c = np.unravel_index(int(np.argmin(mse)), mse.shape)
    return int(r), int(c)


def _admissible(grid: TileGrid, s, c, normal_dot_min, sin_alpha, mse_max) -> bool:
    if not grid.fitted[c] or grid.kind[c] == INSIDE:
        return False
    if grid.mse[c] >= mse_max:
        return False
    if float(grid.normal[s] @ grid.normal[c]) <= normal_dot_min:
        return False
    delta = grid.centroid[c] - grid.centroid[s]
    d = float(np.linalg.norm(delta))
    return abs(float(grid.normal[s] @ delta)) < d * sin_alpha


def region_grow(
    grid: TileGrid,
    seeds,
    normal_dot_min: float = float(np.cos(np.radians(10.0))),
    alpha: float = np.radians(3.0),
    mse_max: float = 1e-3,
    region: np.ndarray | None = None,
) -> np.ndarray:
    """4-neighbour tile growth from each seed; returns the (n, n) grown mask."""
    n = grid.n
    region = np.zeros((n, n), dtype=bool) if region is None else region.copy()
    sin_alpha = np.sin(alpha)
    for seed in seeds:
        seed = tuple(seed)
        if region[seed] or not grid.fitted[seed] or grid.mse[seed] >= mse_max or grid.kind[seed] == INSIDE:
            continue
        region[seed] = True
        queue = deque([seed])
        while queue:
            s = queue.popleft()
            r, c = s
            for nb in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                if not (0 <= nb[0] < n and 0 <= nb[1] < n) or region[nb]:
                    continue
                if _admissible(grid, s, nb, normal_dot_min, sin_alpha, mse_max):
                    region[nb] = True
                    queue.append(nb)
    return region


def seed_and_grow(grid: TileGrid, object_height: float, cfg: SegmentationConfig) -> tuple[np.ndarray, list]:
    """Alternate seeding and growing until ``n_seeds`` seeds were used or none remain."""
    region = np.zeros((grid.n, grid.n), dtype=bool)
    used: set = set()
    seeds = []
    alpha = np.radians(cfg.alpha_deg)
    min_up = None if cfg.seed_max_tilt_deg is None else float(np.cos(np.radians(cfg.seed_max_tilt_deg)))
    for _ in range(cfg.n_seeds):
        blocked = used | {tuple(x) for x in np.argwhere(region)}
        try:
            s = select_seed(grid, object_height, blocked, min_up)
        except NoSeed:
            break
        used.add(s)
        seeds.append(s)
        region = region_grow(grid, [s], cfg.normal_dot_min, alpha, cfg.mse_max, region)
    return region, seeds


def _border_tiles(grid: TileGrid, region: np.ndarray) -> np.ndarray:
    nb = np.zeros_like(region)
    nb[1:, :] |= region[:-1, :]
    nb[:-1, :] |= region[1:, :]
    nb[:, 1:] |= region[:, :-1]
    nb[:, :-1] |= region[:, 1:]
    outer = nb & ~region & (grid.kind != INSIDE)
    inner_edge = region.copy()
    inner = region.copy()
    inner[1:, :] &= region[:-1, :]
    inner[:-1, :] &= region[1:, :]
    inner[:, 1:] &= region[:, :-1]
    inner[:, :-1] &= region[:, 1:]
    # tiles on the grid boundary count as border too
    inner[0, :] = inner[-1, :] = inner[:, 0] = inner[:, -1] = False
    inner_edge &= ~inner
    return outer | inner_edge


def refine_boundary(grid: TileGrid, region: np.ndarray, cloud: OrganizedCloud,
                    cfg: SegmentationConfig | None = None) -> GroundMask:
    cfg = cfg or SegmentationConfig()
    if not region.any():
        raise SegmentationFailed("grown region is empty")
    h, w = cloud.shape
    tile_of_row = np.repeat(np.arange(grid.n), np.diff(grid.row_edges))
    tile_of_col = np.repeat(np.arange(grid.n), np.diff(grid.col_edges))
    region_px = region[tile_of_row[:, None], tile_of_col[None, :]] & cloud.valid
    pts = cloud.points[region_px]
    c = pts.mean(axis=0)
    d = pts - c
    evals, evecs = np.linalg.eigh(d.T @ d / len(pts))
    plane = Plane.from_point_normal(c, evecs[:, 0])
    mse = float(max(evals[0], 0.0))

    border = _border_tiles(grid, region)
    border_px = border[tile_of_row[:, None], tile_of_col[None, :]] & cloud.valid
    dist = np.abs(np.where(cloud.valid[..., None], cloud.points, 0.0) @ plane.normal + plane.offset)
    if cfg.refine_mode == "sqrt":
        close = dist < max(cfg.refine_factor * np.sqrt(mse), cfg.refine_floor)
    else:
        close = dist**2 < max(cfg.refine_factor * mse, cfg.refine_floor**2)
    mask = (region_px & ~border_px) | (border_px & close)
    return GroundMask(mask, region, cloud.origin, plane, mse)


def crop_for_tracks(track_pixels, bbox: BoundingBox, intr: Intrinsics, n: int) -> tuple[int, int, int, int]:
    """Bounding rectangle of the track pixels and the box, padded by one tile."""
    pts = np.asarray(list(track_pixels), dtype=float).reshape(-1, 2)
    xs = np.concatenate([pts[:, 0], [bbox.x0, bbox.x1]])
    ys = np.concatenate([pts[:, 1], [bbox.y0, bbox.y1]])
    x0, x1, y0, y1 = xs.min(), xs.max(), ys.min(), ys.max()
    px, py = (x1 - x0) / n, (y1 - y0) / n
    u0 = int(np.clip(np.floor(x0 - px), 0, intr.width))
    u1 = int(np.clip(np.ceil(x1 + px) + 1, 0, intr.width))
    v0 = int(np.clip(np.floor(y0 - py), 0, intr.height))
    v1 = int(np.clip(np.ceil(y1 + py) + 1, 0, intr.height))
    return u0, v0, u1, v1


@dataclass
class SegmentationResult:
    mask: GroundMask
    selected_ids: np.ndarray
    object_height: float
    cloud: OrganizedCloud
    grid: TileGrid


def segment_ground(
    inv_depth: np.ndarray,
    valid: np.ndarray,
    bbox: BoundingBox,
    pose: Pose,
    intr: Intrinsics,
    track_pixels: dict,
    mature_ids=None,
    cfg: SegmentationConfig | None = None,
    object_height: float | None = None,
) -> SegmentationResult:
    """Crop, backproject, grow and refine; returns the mask and the mature ids inside it.

    ``object_height`` overrides the in-box estimate (used for the height gate).
    """
    cfg = cfg or SegmentationConfig()
    crop = crop_for_tracks(track_pixels.values(), bbox, intr, cfg.n_tiles)
    cloud = build_cloud(inv_depth, valid, crop, pose, intr)
    if object_height is None:
        try:
            object_height = estimate_object_height(cloud, bbox)
        except EmptyBox as exc:
            raise SegmentationFailed(str(exc)) from exc
    grid = build_tile_grid(cloud, bbox, cfg.n_tiles, cfg.dilation, cfg.min_aspect)
    region, seeds = seed_and_grow(grid, object_height, cfg)
    if not region.any():
        raise SegmentationFailed("no seed could be grown")
    mask = refine_boundary(grid, region, cloud, cfg)
    mask.seeds = seeds
    ids = list(track_pixels) if mature_ids is None else list(mature_ids)
    if ids:
        pix = np.array([track_pixels[i] for i in ids])
        selected = np.array(ids)[mask.contains(pix)]
    else:
        selected = np.zeros(0, dtype=int)
    return SegmentationResult(mask, selected, object_height, cloud, grid)
