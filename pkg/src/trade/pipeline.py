"""Per-frame localization loop with all fallbacks wired.

A frame goes through a front-end (peak selection against the trajectory
prediction) and a back-end (feature depth, scale recovery, ground
segmentation, plane fitting and fusion, localization). The Kalman filter
consumes back-end fixes strictly in frame order, so the concurrent mode with
zero back-end latency replays the sequential mode exactly.
"""

from __future__ import annotations

import dataclasses
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateSamples,
    InsufficientPoints,
    LocalizationFailed,
    NegativeRange,
    NoCandidates,
    NoValidSample,
    PredictionBehindCamera,
    RayParallel,
    SegmentationFailed,
)
from .geometry import Intrinsics, Plane, Pose, pixel_ray, raycast_plane
from .localizer import TargetFix, localize
from .peak_select import ScoreMap, argmax_peak, center_window, guided_peak
from .plane_fitting import (
    FusedPlaneModel,
    FusionConfig,
    PlaneBuffer,
    multi_ransac,
    select_flattest,
    temporal_update,
)
from .roi_tracker import BoundingBox, RoiTracker, update_roi
from .scale_recovery import AffineParams, apply_affine, fit_affine_lsq, fit_affine_ransac
from .segmentation import SegmentationConfig, segment_ground
from .simulator import FrameBundle
from .trajectory import KalmanState, NoiseConfig, measurement_sigma, predict, predict_pixel, update

_TAGS = {"affine": 0, "fresh": 1, "fusion": 2}


@dataclass
class PipelineConfig:
    mask_on: bool = True
    temporal_fusion_on: bool = True
    guided_selection_on: bool = True
    lift_on: bool = True
    gt_bbox: bool = False
    use_true_pose: bool = False
    margin_factor: float = 2.0
    max_per_tile: int = 25
    # tighter than the tracker default: pose jitter is shared by every track in a frame
    promotion_ratio: float = 0.02
    min_baseline: float = 1e-3
    pixel_sigma: float = 1.0
    scale_method: str = "ransac"  # ransac | lsq
    plane_inlier_thresh: float = 0.5
    # a fresh plane with less support than this is treated as a failed fit
    min_plane_inliers: int = 20
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    window_factor: float = 4.0  # search window side as a multiple of the bbox max side
    nms_radius: int = 2
    peak_fraction: float = 0.8
    min_score: float = 0.5
    subcell: bool = False
    loss_after: int = 3
    buffer_capacity: int = 1000
    height_ema: float = 0.9
    max_object_height: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.scale_method not in ("ransac", "lsq"):
            raise ValueError(f"unknown scale method {self.scale_method!r}")
        if self.margin_factor <= 0 or self.loss_after < 1:
            raise ValueError("margin_factor must be positive and loss_after at least 1")


@dataclass
class FrameResult:
    frame: int
    bbox: BoundingBox
    fix: TargetFix | None
    kalman: KalmanState | None
    ground_point: np.ndarray | None = None  # unlifted plane hit along the bbox-centre ray
    affine: AffineParams | None = None
    n_mature: int = 0
    n_ground: int = 0
    segmentation_failed: bool = False
    fallback_used: bool = False
    tracking_lost: bool = False
    no_candidates: bool = False
    predicted_pixel: np.ndarray | None = None


@dataclass
class FrontEndResult:
    frame: int
    bbox: BoundingBox
    predicted_pixel: np.ndarray | None
    no_candidates: bool
    tracking_lost: bool


@dataclass
class BackEndResult:
    frame: int
    time: float
    fix: TargetFix | None = None
    ground_point: np.ndarray | None = None
    affine: AffineParams | None = None
    n_mature: int = 0
    n_ground: int = 0
    segmentation_failed: bool = False
    fallback_used: bool = False


def _rng(seed: int, frame: int, tag: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(frame), _TAGS[tag]])


def _extract_window(global_map: ScoreMap, center_px, size_px, intr: Intrinsics) -> ScoreMap:
    """Crop an odd-sized window of the full-image score map around ``center_px``."""
    s = global_map.stride
    h, w = global_map.scores.shape
    half = max(int(round(size_px / (2 * s))), 1)
    c = center_window(None, center_px, (intr.width, intr.height), (size_px, size_px))
    j0 = int(np.clip(np.floor(c[0] / s), 0, w - 1))
    i0 = int(np.clip(np.floor(c[1] / s), 0, h - 1))
    rows = slice(max(i0 - half, 0), min(i0 + half + 1, h))
    cols = slice(max(j0 - half, 0), min(j0 + half + 1, w))
    sub = global_map.scores[rows, cols]
    ci = 0.5 * (rows.start + rows.stop - 1)
    cj = 0.5 * (cols.start + cols.stop - 1)
    origin = global_map.cell_to_pixel(ci, cj)
    return ScoreMap(sub, (origin[0], origin[1]), s)


class BackEnd:
    """Owns the feature tracks, the plane buffer and the fused ground model."""

    def __init__(self, intr: Intrinsics, cfg: PipelineConfig):
        self.cfg = cfg
        self.intr = intr
        self.tracker = RoiTracker(
            intr,
            margin_factor=cfg.margin_factor,
            max_per_tile=cfg.max_per_tile,
            promotion_ratio=cfg.promotion_ratio,
            min_baseline=cfg.min_baseline,
            pixel_sigma=cfg.pixel_sigma,
        )
        self.buffer = PlaneBuffer(cfg.buffer_capacity)
        self.model = FusedPlaneModel()
        self.affine: AffineParams | None = None
        self.object_height: float | None = None

    # snapshot handed to the front-end
    def plane_snapshot(self) -> FusedPlaneModel:
        return self.model

    def _scale(self, bundle: FrameBundle, pose: Pose, ids, pts, bbox, frame) -> AffineParams | None:
        if len(ids) < 2:
            return self.affine
        tracks = self.tracker.tracks
        pix = np.array([tracks[int(i)].current_pixel for i in ids])
        cam = pose.to_camera(pts)
        vals, ok = bundle.rel_depth.sample(pix)
        # the box region carries the network's largest errors; keep it out of the fit
        ok &= (cam[:, 2] > 0) & ~bbox.contains(pix)
        if ok.sum() < 2:
            return self.affine
        x, y = vals[ok], 1.0 / cam[ok, 2]
        try:
            if self.cfg.scale_method == "lsq":
                params = fit_affine_lsq(x, y)
            else:
                params, _ = fit_affine_ransac(x, y, rng=_rng(self.cfg.seed, frame, "affine"))
        except (DegenerateSamples, NoValidSample):
            return self.affine
        if params.theta1 <= 0:
            return self.affine
        return params

    def _height(self, inv, valid, bbox, pose, plane: Plane) -> None:
        x0, x1 = max(int(np.floor(bbox.x0)), 0), min(int(np.ceil(bbox.x1)), self.intr.width)
        y0, y1 = max(int(np.floor(bbox.y0)), 0), min(int(np.ceil(bbox.y1)), self.intr.height)
        if x1 <= x0 or y1 <= y0:
            return
        v, u = np.mgrid[y0:y1, x0:x1]
        ok = valid[y0:y1, x0:x1]
        if not ok.any():
            return
        pix = np.stack([u[ok] + 0.5, v[ok] + 0.5], axis=1)
        pts = pose.to_world(self.intr.normalized(pix) / inv[y0:y1, x0:x1][ok][:, None])
        h = float(np.clip(np.percentile(plane.signed_distance(pts), 90), 0.0, self.cfg.max_object_height))
        a = self.cfg.height_ema
        self.object_height = h if self.object_height is None else a * self.object_height + (1 - a) * h

    def process(self, bundle: FrameBundle, bbox: BoundingBox, skip: bool = False) -> BackEndResult:
        cfg = self.cfg
        k = bundle.index
        res = BackEndResult(k, bundle.time)
        if skip:
            return res
        pose = bundle.true_pose if cfg.use_true_pose else bundle.pose
        # only features inside the ROI rectangle can be tracked or spawned
        x0, y0, x1, y1 = update_roi(bbox, cfg.margin_factor, self.intr).rect
        fp = bundle.feature_pixels
        near = (fp[:, 0] >= x0) & (fp[:, 0] < x1) & (fp[:, 1] >= y0) & (fp[:, 1] < y1)
        ids_near = bundle.feature_ids[near]
        obs = dict(zip(ids_near.tolist(), fp[near]))
        cands = list(obs.items())
        self.tracker.step(bbox, pose, obs, cands)
        ids, pts = self.tracker.mature_points()
        res.n_mature = len(ids)

        self.affine = self._scale(bundle, pose, ids, pts, bbox, k)
        res.affine = self.affine
        inv = valid = None
        if self.affine is not None:
            inv, valid = apply_affine(bundle.rel_depth, self.affine)

        fresh_failed = False
        sel_pts = pts
        if cfg.mask_on:
            if inv is None or len(ids) == 0:
                fresh_failed = res.segmentation_failed = True
            else:
                tp = {int(i): self.tracker.tracks[int(i)].current_pixel for i in ids}
                try:
                    seg = segment_ground(inv, valid, bbox, pose, self.intr, tp, ids, cfg.segmentation)
                    keep = np.isin(ids, seg.selected_ids)
                    sel_pts = pts[keep]
                except SegmentationFailed:
                    fresh_failed = res.segmentation_failed = True
        res.n_ground = 0 if fresh_failed else len(sel_pts)

        hyps = []
        if not fresh_failed:
            try:
                hyps = multi_ransac(sel_pts, inlier_thresh=cfg.plane_inlier_thresh,
                                    seed=_rng(cfg.seed, k, "fresh"))
            except InsufficientPoints:
                fresh_failed = True
            if hyps and select_flattest(hyps).n_inliers < cfg.min_plane_inliers:
                hyps, fresh_failed = [], True

        if cfg.temporal_fusion_on:
            if hyps:
                best = select_flattest(hyps)
                self.buffer, self.model = temporal_update(
                    self.buffer, sel_pts[best.inliers], self.model, k, cfg.fusion, seed=_rng(cfg.seed, k, "fusion")
                )
        elif hyps:
            best = select_flattest(hyps)
            self.model = FusedPlaneModel(best.plane, best.mse, k, True, tuple(hyps))
        res.fallback_used = fresh_failed and self.model.valid

        plane = self.model.plane if self.model.valid else None
        if plane is None:
            return res
        if inv is not None:
            self._height(inv, valid, bbox, pose, plane)
        h = self.object_height if self.object_height is not None else 0.0
        try:
            res.fix = localize(bbox, self.model, [] if fresh_failed else hyps, h, pose, self.intr, frame=k,
                               fresh_failed=fresh_failed, lift=cfg.lift_on,
                               prefer_fused=cfg.temporal_fusion_on or fresh_failed)
        except LocalizationFailed:
            res.fix = None
        try:
            res.ground_point, _ = raycast_plane(pixel_ray(bbox.center, pose, self.intr), plane)
        except (RayParallel, NegativeRange):
            res.ground_point = None
        return res


class Pipeline:
    """Runs a frame sequence, sequentially or with a concurrent back-end."""

    def __init__(self, intr: Intrinsics, cfg: PipelineConfig | None = None):
        self.cfg = cfg or PipelineConfig()
        self.intr = intr
        self.backend = BackEnd(intr, self.cfg)
        self.kalman: KalmanState | None = None
        self.prev_bbox: BoundingBox | None = None
        self.misses = 0
        self.dt = None

    # -- front-end ----------------------------------------------------------

    def _predicted_pixel(self, bundle: FrameBundle, pose: Pose):
        if self.kalman is None:
            return None
        dt = bundle.time - self.kalman.timestamp
        try:
            return predict_pixel(self.kalman, dt, pose, self.intr, self.cfg.noise)
        except PredictionBehindCamera:
            return None

    def front_end(self, bundle: FrameBundle) -> FrontEndResult:
        cfg = self.cfg
        pose = bundle.true_pose if cfg.use_true_pose else bundle.pose
        pred = self._predicted_pixel(bundle, pose)
        if cfg.gt_bbox or self.prev_bbox is None:
            bbox = bundle.bbox
            self.prev_bbox = bbox
            return FrontEndResult(bundle.index, bbox, pred, False, False)
        size = bundle.bbox  # tracker box size regression stand-in
        win = cfg.window_factor * max(size.width, size.height)
        prev = np.asarray(self.prev_bbox.center)
        no_cand = False
        if cfg.guided_selection_on:
            center = pred if pred is not None else prev
            window = _extract_window(bundle.score_map, center, win, self.intr)
            try:
                peak = guided_peak(window, cfg.nms_radius, cfg.peak_fraction, cfg.min_score, cfg.subcell)
                new_center = peak.pixel
                self.misses = 0
            except NoCandidates:
                no_cand = True
                self.misses += 1
                new_center = window.window_origin
        else:
            window = _extract_window(bundle.score_map, prev, win, self.intr)
            new_center = argmax_peak(window).pixel
        bbox = BoundingBox(tuple(np.asarray(new_center, dtype=float)), size.width, size.height)
        self.prev_bbox = bbox
        lost = self.misses >= cfg.loss_after
        return FrontEndResult(bundle.index, bbox, pred, no_cand, lost)

    # -- trajectory ---------------------------------------------------------

    def integrate(self, be: BackEndResult) -> None:
        fix = be.fix
        if self.kalman is None:
            if fix is not None:
                self.kalman = KalmanState.initial(fix.position, be.time)
            return
        dt = be.time - self.kalman.timestamp
        state = predict(self.kalman, dt, self.cfg.noise) if dt > 0 else self.kalman
        if fix is not None:
            state = update(state, fix.position, measurement_sigma(fix.depth_sigma, self.cfg.noise))
        self.kalman = state

    def _result(self, fe: FrontEndResult, be: BackEndResult) -> FrameResult:
        return FrameResult(
            frame=fe.frame,
            bbox=fe.bbox,
            fix=be.fix,
            kalman=None if self.kalman is None else self.kalman.copy(),
            ground_point=be.ground_point,
            affine=be.affine,
            n_mature=be.n_mature,
            n_ground=be.n_ground,
            segmentation_failed=be.segmentation_failed,
            fallback_used=be.fallback_used,
            tracking_lost=fe.tracking_lost,
            no_candidates=fe.no_candidates,
            predicted_pixel=fe.predicted_pixel,
        )

    def process_frame(self, bundle: FrameBundle) -> FrameResult:
        fe = self.front_end(bundle)
        be = self.backend.process(bundle, fe.bbox, skip=fe.no_candidates)
        self.integrate(be)
        return self._result(fe, be)

    def run(self, bundles, threaded: bool = False, latency: int = 0) -> list[FrameResult]:
        return [r for _, r in self.iter_run(bundles, threaded, latency)]

    def iter_run(self, bundles, threaded: bool = False, latency: int = 0):
        """Yield ``(bundle, result)`` in frame order.

        In threaded mode the back-end runs on a worker thread; the front-end
        of frame ``k`` only sees back-end output up to frame ``k - latency``.
        """
        if latency < 0:
            raise ValueError("latency must be non-negative")
        if not threaded:
            if latency:
                raise ValueError("latency requires threaded mode")
            for b in bundles:
                yield b, self.process_frame(b)
            return
        pending: deque = deque()
        with ThreadPoolExecutor(max_workers=1) as pool:
            for b in bundles:
                # integrate everything old enough before running the front-end
                while pending and pending[0][1].frame <= b.index - latency:
                    yield self._finish(*pending.popleft())
                fe = self.front_end(b)
                pending.append((b, fe, pool.submit(self.backend.process, b, fe.bbox, fe.no_candidates)))
                if latency == 0:
                    yield self._finish(*pending.popleft())
            while pending:
                yield self._finish(*pending.popleft())

    def _finish(self, bundle, fe: FrontEndResult, fut):
        be = fut.result()
        self.integrate(be)
        return bundle, self._result(fe, be)


def config_with(cfg: PipelineConfig, **changes) -> PipelineConfig:
    return dataclasses.replace(cfg, **changes)
