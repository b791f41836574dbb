"""The ``lesionforge`` command line.

Subcommands: gen-assets, synth-detect, synth-track, baseline-run, eval,
poisson-clone.  Exit codes: 0 ok, 2 invalid config/predictions, 3 missing
assets, 4 generation failure, 5 flow-write failure, 6 solver non-convergence.
"""

from __future__ import annotations

import argparse
import sys

from ..evalkit import DEFAULT_ALPHAS
from ..poissonblend import SolveError
from . import commands
from .errors import (
    EXIT_ASSETS,
    EXIT_CONFIG,
    EXIT_FLOW_WRITE,
    EXIT_GENERATION,
    EXIT_SOLVER,
    AssetError,
    ConfigError,
    FlowWriteError,
    GenerationError,
)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _offset(text: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("offset must be 'dx,dy'")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError("offset must be two integers 'dx,dy'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lesionforge",
        description="Synthesize lesion detection/tracking datasets, run the "
                    "classical baselines, and evaluate them.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-assets", help="generate a procedural asset catalog")
    p.add_argument("--out", required=True, help="output asset directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bodies", type=int, default=10)
    p.add_argument("--lesions", type=int, default=16)
    p.add_argument("--size", type=int, default=256, help="body image size")
    p.add_argument("--lesion-size", type=int, default=48)
    p.set_defaults(fn=lambda a: commands.cmd_gen_assets(
        a.out, a.seed, a.bodies, a.lesions, a.size, a.lesion_size))

    p = sub.add_parser("synth-detect", help="generate detection samples")
    p.add_argument("--config", help="generator config JSON (defaults used if omitted)")
    p.add_argument("--assets", required=True, help="asset catalog directory")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=None,
                   help="worker processes (default: LESIONFORGE_JOBS or 1)")
    p.set_defaults(fn=lambda a: commands.cmd_synth_detect(
        a.config, a.assets, a.out, a.count, a.seed, a.jobs))

    p = sub.add_parser("synth-track", help="derive tracking pairs from a "
                                           "detection dataset")
    p.add_argument("--manifest", required=True, help="detection manifest.json")
    p.add_argument("--config", help="config JSON (defaults to the detection "
                                    "manifest's config)")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(fn=lambda a: commands.cmd_synth_track(
        a.manifest, a.config, a.out, a.jobs))

    p = sub.add_parser("baseline-run", help="run a classical baseline")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=("detect", "track"), required=True)
    p.add_argument("--out", required=True, help="predictions JSON path")
    p.add_argument("--split", type=int, default=None,
                   help="detect: number of leading samples used for training")
    p.add_argument("--radius", type=int, default=12)
    p.add_argument("--stride", type=int, default=8)
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prob-threshold", type=float, default=0.5)
    p.add_argument("--min-area", type=int, default=1)
    p.add_argument("--window", type=int, default=11, help="track: NCC window")
    p.add_argument("--search", type=int, default=8, help="track: search radius")
    p.add_argument("--points-per-pair", type=int, default=20)

    def _baseline(a):
        if a.mode == "detect":
            if a.split is None:
                raise ConfigError("--split is required in detect mode")
            return commands.cmd_baseline_detect(
                a.manifest, a.out, a.split, a.radius, a.stride, a.lr,
                a.epochs, a.l2, a.seed, a.prob_threshold, a.min_area)
        return commands.cmd_baseline_track(
            a.manifest, a.out, a.window, a.search, a.points_per_pair)

    p.set_defaults(fn=_baseline)

    p = sub.add_parser("eval", help="score predictions against a dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--task", choices=("detect", "track"), required=True)
    p.add_argument("--out", required=True, help="metrics JSON path")
    p.add_argument("--thresholds", type=_float_list,
                   default=[round(0.02 * i, 2) for i in range(51)],
                   help="detect: score thresholds (comma separated)")
    p.add_argument("--alphas", type=_float_list, default=list(DEFAULT_ALPHAS),
                   help="track: PCK alpha grid (comma separated)")
    p.add_argument("--criterion", choices=("centroid", "iou"), default="centroid")
    p.add_argument("--overlay", action="store_true",
                   help="write overlay PNGs next to the metrics")
    p.add_argument("--csv", action="store_true", help="also write curve CSV")

    def _eval(a):
        if a.task == "detect":
            return commands.cmd_eval_detect(
                a.manifest, a.predictions, a.out, a.thresholds, a.criterion,
                a.overlay, a.csv)
        return commands.cmd_eval_track(
            a.manifest, a.predictions, a.out, a.alphas, a.overlay, a.csv)

    p.set_defaults(fn=_eval)

    p = sub.add_parser("poisson-clone", help="seamless-clone one image region "
                                             "into another (debug tool)")
    p.add_argument("--target", required=True, help="target PNG")
    p.add_argument("--source", required=True, help="source PNG")
    p.add_argument("--mask", required=True, help="region mask PNG over the source")
    p.add_argument("--offset", type=_offset, default=(0, 0), help="'dx,dy'")
    p.add_argument("--mode", choices=("import", "mixed"), default="import")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", required=True, help="output PNG")
    p.set_defaults(fn=lambda a: commands.cmd_poisson_clone(
        a.target, a.source, a.mask, a.offset, a.mode, a.tol, a.out))

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except AssetError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ASSETS
    except FlowWriteError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FLOW_WRITE
    except GenerationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_GENERATION
    except SolveError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    raise SystemExit(main())
