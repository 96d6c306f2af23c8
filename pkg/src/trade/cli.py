"""Command-line entry point: ``trade eval --config run.json [flags]``."""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, TradeError
from .evaluation import aggregate, run_eval


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trade", description="Ground-target localization evaluation harness")
    sub = p.add_subparsers(dest="command", required=True)
    e = sub.add_parser("eval", help="run scenes x ablations x seeds and write CSV files")
    e.add_argument("--config", required=True, help="JSON evaluation config")
    e.add_argument("--no-mask", action="store_true", help="disable ground segmentation")
    e.add_argument("--no-temporal-fusion", action="store_true", help="disable temporal plane fusion")
    e.add_argument("--no-guided", action="store_true", help="plain argmax peak selection")
    e.add_argument("--no-lift", action="store_true", help="raycast onto the unlifted ground plane")
    e.add_argument("--seeds", type=int, help="Monte-Carlo seeds per cell")
    e.add_argument("--out", default="eval_out", help="output directory")
    e.add_argument("--scene", action="append", help="restrict to this scene (repeatable)")
    e.add_argument("--gt-bbox", action="store_true", help="inject ground-truth bounding boxes")
    e.add_argument("--threads", type=int, help="parallel runs (default: TRADE_THREADS or 1)")
    return p


def overrides_from_args(args) -> dict:
    ov: dict = {}
    flags = {
        "mask_on": args.no_mask,
        "temporal_fusion_on": args.no_temporal_fusion,
        "guided_selection_on": args.no_guided,
        "lift_on": args.no_lift,
    }
    if any(flags.values()):
        ov.update({k: not v for k, v in flags.items()})
    if args.seeds is not None:
        if args.seeds < 1:
            raise ConfigError("--seeds must be at least 1")
        ov["seeds"] = args.seeds
    if args.scene:
        ov["scenes"] = args.scene
    if args.gt_bbox:
        ov["gt_bbox"] = True
    return ov


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        metrics = run_eval(args.config, overrides_from_args(args), out_dir=args.out, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (TradeError, OSError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    for (scene, ablation), rmse in aggregate(metrics).items():
        print(f"{scene:10s} {ablation:24s} rmse {rmse:.4g} m")
    print(f"{len(metrics)} runs written to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
