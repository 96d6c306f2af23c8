"""Monte-Carlo evaluation over scenes, ablations and seeds, with CSV output.

CSV schema (all floats written with 6 significant digits):

``summary.csv``
    mode, scene, ablation, seed, n_frames, n_valid, rmse, mean_abs_error,
    switches, on_target_rate, mean_center_error, segmentation_failures,
    fallback_frames, lost_frames

``frames_<mode>_<scene>_<ablation>_s<seed>.csv``
    frame, valid, depth_est, depth_true, error, center_error, on_target,
    segmentation_failed, fallback_used, tracking_lost, n_mature, n_ground

Wall-clock timing is kept in :class:`RunMetrics` but not written, so reruns
are byte-identical.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .pipeline import Pipeline, PipelineConfig
from .simulator import SCENES, Scene, SceneSpec

ABLATIONS = {
    "full": dict(mask_on=True, temporal_fusion_on=True),
    "no_tf": dict(mask_on=True, temporal_fusion_on=False),
    "no_mask": dict(mask_on=False, temporal_fusion_on=True),
    "none": dict(mask_on=False, temporal_fusion_on=False),
}
MODES = ("tracking", "depth", "singleimage")

SUMMARY_FIELDS = [
    "mode", "scene", "ablation", "seed", "n_frames", "n_valid", "rmse", "mean_abs_error", "switches",
    "on_target_rate", "mean_center_error", "segmentation_failures", "fallback_frames", "lost_frames",
]
FRAME_FIELDS = [
    "frame", "valid", "depth_est", "depth_true", "error", "center_error", "on_target",
    "segmentation_failed", "fallback_used", "tracking_lost", "n_mature", "n_ground",
]


@dataclass
class FrameRecord:
    frame: int
    valid: bool
    depth_est: float = float("nan")
    depth_true: float = float("nan")
    center_error: float = float("nan")
    on_target: bool = True
    segmentation_failed: bool = False
    fallback_used: bool = False
    tracking_lost: bool = False
    n_mature: int = 0
    n_ground: int = 0
    # single-image depth sampled at the box centre, recorded in every mode
    direct_est: float = float("nan")
    direct_true: float = float("nan")

    @property
    def error(self) -> float:
        return self.depth_est - self.depth_true if self.valid else float("nan")

    @property
    def direct_error(self) -> float:
        return self.direct_est - self.direct_true


@dataclass
class RunMetrics:
    mode: str
    scene: str
    ablation: str
    seed: int
    frames: list[FrameRecord] = field(default_factory=list)
    wall_ms_per_frame: float = 0.0

    @property
    def errors(self) -> np.ndarray:
        return np.array([f.error for f in self.frames if f.valid])

    @property
    def n_valid(self) -> int:
        return sum(f.valid for f in self.frames)

    @property
    def rmse(self) -> float:
        e = self.errors
        return float(np.sqrt(np.mean(e**2))) if len(e) else float("nan")

    @property
    def direct_rmse(self) -> float:
        e = np.array([f.direct_error for f in self.frames])
        e = e[np.isfinite(e)]
        return float(np.sqrt(np.mean(e**2))) if len(e) else float("nan")

    @property
    def mean_abs_error(self) -> float:
        e = self.errors
        return float(np.mean(np.abs(e))) if len(e) else float("nan")

    @property
    def switches(self) -> int:
        on = [f.on_target for f in self.frames]
        return sum(1 for a, b in zip(on, on[1:]) if a and not b)

    @property
    def on_target_rate(self) -> float:
        return float(np.mean([f.on_target for f in self.frames])) if self.frames else float("nan")

    @property
    def final_on_target(self) -> bool:
        return bool(self.frames[-1].on_target)

    @property
    def run_id(self) -> str:
        return f"{self.mode}_{self.scene}_{self.ablation}_s{self.seed}"

    def summary_row(self) -> dict:
        ce = [f.center_error for f in self.frames if np.isfinite(f.center_error)]
        return {
            "mode": self.mode,
            "scene": self.scene,
            "ablation": self.ablation,
            "seed": self.seed,
            "n_frames": len(self.frames),
            "n_valid": self.n_valid,
            "rmse": self.rmse,
            "mean_abs_error": self.mean_abs_error,
            "switches": self.switches,
            "on_target_rate": self.on_target_rate,
            "mean_center_error": float(np.mean(ce)) if ce else float("nan"),
            "segmentation_failures": sum(f.segmentation_failed for f in self.frames),
            "fallback_frames": sum(f.fallback_used for f in self.frames),
            "lost_frames": sum(f.tracking_lost for f in self.frames),
        }

    def frame_rows(self) -> list[dict]:
        rows = []
        for f in self.frames:
            d = dataclasses.asdict(f)
            d["error"] = f.error
            rows.append({k: d[k] for k in FRAME_FIELDS})
        return rows


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".6g")
    return str(v)


def to_csv(rows: list[dict], fields: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in fields])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# single runs


def _ground_truth_depth(scene: Scene, bundle, pixel) -> float:
    d = bundle.true_pose.rotation @ bundle.intrinsics.normalized(np.asarray(pixel, dtype=float))
    t, _ = scene.terrain.intersect(bundle.true_pose.translation, d)
    return float(t)


def _on_target(pixel, bundle) -> tuple[float, bool]:
    dt = float(np.linalg.norm(np.asarray(pixel) - bundle.target_pixel))
    if len(bundle.decoy_pixels) == 0:
        return dt, True
    dd = float(np.linalg.norm(bundle.decoy_pixels - np.asarray(pixel), axis=1).min())
    return dt, dt <= dd


def run_single(spec: SceneSpec, cfg: PipelineConfig, mode: str = "depth", ablation: str = "full",
               threaded: bool = False, latency: int = 0) -> RunMetrics:
    """Run one (scene, config, seed) triple; the seed is taken from ``spec``."""
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    scene = Scene(spec)
    cfg = dataclasses.replace(cfg, seed=spec.seed, gt_bbox=cfg.gt_bbox or mode != "tracking")
    pipe = Pipeline(scene.intr, cfg)
    t0 = time.perf_counter()
    metrics = RunMetrics(mode, spec.name, ablation, spec.seed)
    bundles = (scene.render(k) for k in range(spec.n_frames))
    for b, r in pipe.iter_run(bundles, threaded=threaded, latency=latency):
        ce, on = _on_target(r.bbox.center, b)
        rec = FrameRecord(
            frame=b.index,
            valid=False,
            center_error=ce,
            on_target=on,
            segmentation_failed=r.segmentation_failed,
            fallback_used=r.fallback_used,
            tracking_lost=r.tracking_lost,
            n_mature=r.n_mature,
            n_ground=r.n_ground,
        )
        pose = b.true_pose if cfg.use_true_pose else b.pose
        if r.affine is not None:
            vals, ok = b.rel_depth.sample(np.asarray(r.bbox.center))
            rho = r.affine.apply(vals[0])
            if ok[0] and rho > 0:
                u, v = (int(np.floor(c)) for c in r.bbox.center)
                rec.direct_est = 1.0 / rho
                rec.direct_true = 1.0 / b.true_inv_depth[v, u]
        if mode == "singleimage":
            rec.valid = bool(np.isfinite(rec.direct_est))
            rec.depth_est, rec.depth_true = rec.direct_est, rec.direct_true
        elif r.fix is not None and r.ground_point is not None:
            rec.valid = True
            rec.depth_est = float(pose.to_camera(r.ground_point)[2])
            rec.depth_true = _ground_truth_depth(scene, b, r.bbox.center)
        metrics.frames.append(rec)
    metrics.wall_ms_per_frame = 1e3 * (time.perf_counter() - t0) / spec.n_frames
    return metrics


# ---------------------------------------------------------------------------
# configuration


@dataclass
class EvalConfig:
    mode: str = "depth"
    scenes: list = field(default_factory=lambda: ["desert", "city", "mountain"])
    ablations: list = field(default_factory=lambda: ["full"])
    seeds: int = 5
    first_seed: int = 0
    gt_bbox: bool = False
    scale_methods: list = field(default_factory=lambda: ["lsq", "ransac"])  # singleimage mode
    pipeline: dict = field(default_factory=dict)  # PipelineConfig overrides
    scene_overrides: dict = field(default_factory=dict)  # per-scene nested SceneSpec overrides
    concurrent: bool = False
    backend_latency: int = 0
    debug_grids: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.seeds < 1:
            raise ConfigError("seeds must be at least 1")
        for a in self.ablations:
            if isinstance(a, str) and a not in ABLATIONS:
                raise ConfigError(f"unknown ablation {a!r}; expected one of {sorted(ABLATIONS)} or an object")


def load_config(path) -> EvalConfig:
    p = Path(path)
    text = p.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return config_from_dict(raw, source=str(p))


def config_from_dict(raw, source: str = "<config>") -> EvalConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be an object")
    names = {f.name for f in dataclasses.fields(EvalConfig)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"{source}: unknown keys {unknown}")
    try:
        return EvalConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def _scene_spec(entry, seed: int, overrides: dict) -> SceneSpec:
    if isinstance(entry, str):
        if entry not in SCENES:
            raise ConfigError(f"unknown scene {entry!r}; expected one of {sorted(SCENES)}")
        spec = SCENES[entry](seed)
        extra = overrides.get(entry)
        if extra:
            d = spec.to_dict()
            _deep_update(d, extra)
            spec = SceneSpec.from_dict(d)
        return spec
    return SceneSpec.from_dict({**entry, "seed": seed})


def _deep_update(d: dict, upd: dict) -> None:
    for k, v in upd.items():
        if isinstance(v, dict) and isinstance(d.get(k), dict):
            _deep_update(d[k], v)
        else:
            d[k] = v


def _pipeline_config(base: dict, switches: dict, gt_bbox: bool) -> PipelineConfig:
    names = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = sorted(set(base) - names)
    if unknown:
        raise ConfigError(f"unknown pipeline keys {unknown}")
    kw = {**base, **switches}
    kw["gt_bbox"] = gt_bbox or kw.get("gt_bbox", False)
    try:
        return PipelineConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _ablation_entries(cfg: EvalConfig, overrides: dict | None) -> list[tuple[str, dict]]:
    if overrides:
        switches = {k: v for k, v in overrides.items() if k in
                    ("mask_on", "temporal_fusion_on", "guided_selection_on", "lift_on")}
        if switches:
            name = "_".join(f"{k.split('_')[0]}{int(v)}" for k, v in sorted(switches.items()))
            return [(name, switches)]
    out = []
    for a in cfg.ablations:
        if isinstance(a, str):
            out.append((a, ABLATIONS[a]))
        else:
            a = dict(a)
            out.append((str(a.pop("name", "custom")), a))
    return out


def plan_runs(cfg: EvalConfig, overrides: dict | None = None) -> list[tuple]:
    overrides = dict(overrides or {})
    scenes = overrides.get("scenes") or cfg.scenes
    seeds = int(overrides.get("seeds") or cfg.seeds)
    gt = bool(overrides.get("gt_bbox") or cfg.gt_bbox)
    runs = []
    for entry in scenes:
        for name, sw in _ablation_entries(cfg, overrides):
            for s in range(cfg.first_seed, cfg.first_seed + seeds):
                spec = _scene_spec(entry, s, cfg.scene_overrides)
                if cfg.mode == "singleimage":
                    for m in cfg.scale_methods:
                        pc = _pipeline_config({**cfg.pipeline, "scale_method": m}, sw, True)
                        runs.append((spec, pc, f"direct_{m}"))
                else:
                    runs.append((spec, _pipeline_config(cfg.pipeline, sw, gt), name))
    return runs


def run_eval(config, overrides: dict | None = None, out_dir=None, threads: int | None = None) -> list[RunMetrics]:
    """Run every (scene, ablation, seed) triple and write the CSV files.

    ``config`` is a path, a dict, or an :class:`EvalConfig`.
    """
    if isinstance(config, EvalConfig):
        cfg = config
    elif isinstance(config, dict):
        cfg = config_from_dict(config)
    else:
        cfg = load_config(config)
    runs = plan_runs(cfg, overrides)
    if threads is None:
        threads = int(os.environ.get("TRADE_THREADS", "1") or 1)

    def job(r):
        spec, pc, name = r
        return run_single(spec, pc, cfg.mode, name, threaded=cfg.concurrent, latency=cfg.backend_latency)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            metrics = list(pool.map(job, runs))
    else:
        metrics = [job(r) for r in runs]
    if out_dir is not None:
        write_outputs(metrics, out_dir)
        if cfg.debug_grids:
            _write_debug_grids(runs, Path(out_dir) / "grids")
    return metrics


def run_depth_eval(config, overrides=None, out_dir=None) -> list[RunMetrics]:
    cfg = _coerce(config)
    return run_eval(dataclasses.replace(cfg, mode="depth", gt_bbox=True), overrides, out_dir)


def run_singleimage_depth_eval(config, overrides=None, out_dir=None) -> list[RunMetrics]:
    cfg = _coerce(config)
    return run_eval(dataclasses.replace(cfg, mode="singleimage", gt_bbox=True), overrides, out_dir)


def _coerce(config) -> EvalConfig:
    if isinstance(config, EvalConfig):
        return config
    if isinstance(config, dict):
        return config_from_dict(config)
    return load_config(config)


def write_outputs(metrics: list[RunMetrics], out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(to_csv([m.summary_row() for m in metrics], SUMMARY_FIELDS))
    for m in metrics:
        (out / f"frames_{m.run_id}.csv").write_text(to_csv(m.frame_rows(), FRAME_FIELDS))
    return out / "summary.csv"


def _write_debug_grids(runs, directory: Path) -> None:
    for spec, _, name in runs:
        scene = Scene(spec)
        for k in (0, spec.n_frames - 1):
            scene.render(k).export_grids(directory, prefix=f"{spec.name}_{name}_s{spec.seed}_")


def aggregate(metrics: list[RunMetrics]) -> dict[tuple[str, str], float]:
    """Mean RMSE per (scene, ablation) cell."""
    cells: dict[tuple[str, str], list[float]] = {}
    for m in metrics:
        cells.setdefault((m.scene, m.ablation), []).append(m.rmse)
    return {k: float(np.mean(v)) for k, v in cells.items()}
