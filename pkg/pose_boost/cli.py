# pose_boost/cli.py
# Defines the command-line interface using argparse.

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import IO, Sequence

from pose_boost import __version__
from pose_boost.api import (
    dump_fmaps,
    evaluate_checkpoint,
    generate_data,
    run_ablation,
    train_model,
    validate_graph,
)
from pose_boost.cache import RunCache
from pose_boost.config import load_experiment
from pose_boost.errors import PoseBoostError
from pose_boost.skeleton import DEGREE_CAPS
from pose_boost.training import ABLATION_AXES
from pose_boost.ui import (
    render_ablation_table,
    render_metrics_report,
    render_paths,
    render_train_result,
    render_violations,
    save_records,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _configure_logging(verbose: bool) -> None:
    level = logging.INFO if verbose else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s")


def _float_list(text: str) -> list[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values or min(values) <= 0:
        raise argparse.ArgumentTypeError(f"thresholds must be positive, got {text!r}")
    return values


def _int_list(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def _human_bytes(n: int) -> str:
    units = ["B", "KB", "MB", "GB", "TB"]
    i = 0
    v = float(n)
    while v >= 1024 and i < len(units) - 1:
        v /= 1024.0
        i += 1
    s = f"{v:.2f}".rstrip("0").rstrip(".")
    return f"{s} {units[i]}"


def _missing_inputs(args: argparse.Namespace) -> list[str]:
    """Command-line paths that must exist but do not."""
    names = ("config", "ckpt", "data", "image", "resume", "file")
    missing = []
    for name in names:
        value = getattr(args, name, None)
        if value is not None and not Path(value).exists():
            missing.append(f"--{name} {value}" if name != "file" else str(value))
    return missing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Feature-boosting 3D pose network: training, evaluation and ablation harness.",
        prog="pose_boost",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "-v",
        "--verbose",
        action="store_true",
        help="Enable verbose logging output to stderr.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    # --- train ---
    p = subparsers.add_parser("train", help="Train a network and write a checkpoint plus JSONL log.")
    p.add_argument("--config", metavar="FILE", help="Experiment TOML file (defaults plus pyproject when omitted).")
    p.add_argument("--out", metavar="DIR", required=True, help="Output directory.")
    p.add_argument("--resume", metavar="CKPT", help="Continue from a checkpoint with the same config.")

    # --- eval ---
    p = subparsers.add_parser("eval", help="Score a checkpoint on a dataset directory.")
    p.add_argument("--ckpt", metavar="FILE", required=True)
    p.add_argument("--data", metavar="DIR", required=True)
    p.add_argument("--pck", type=_float_list, metavar="T1,T2,...", help="PCK thresholds in pixels.")
    p.add_argument("--records", metavar="FILE", help="Also write the report as a JSONL record.")

    # --- ablate ---
    p = subparsers.add_parser("ablate", help="Train and score every variant of one ablation axis.")
    p.add_argument("--axis", choices=sorted(ABLATION_AXES), required=True)
    p.add_argument("--config", metavar="FILE")
    p.add_argument("--seeds", type=_int_list, metavar="S1,S2,...", help="Seeds shared by all variants.")
    p.add_argument("--out", metavar="DIR", default="runs", help="Directory for per-run outputs.")
    p.add_argument("--no-cache", action="store_true", help="Recompute every run.")
    p.add_argument("--records", metavar="FILE", help="Also write one JSONL record per variant.")

    # --- dump-fmaps ---
    p = subparsers.add_parser("dump-fmaps", help="Write per-joint feature maps before and after boosting.")
    p.add_argument("--ckpt", metavar="FILE", required=True)
    p.add_argument("--image", metavar="FILE", required=True)
    p.add_argument("--joints", type=_int_list, metavar="J1,J2,...", required=True, help="0-based joint ids.")
    p.add_argument("--out", metavar="DIR", default="fmaps")

    # --- graph ---
    p = subparsers.add_parser("graph", help="Skeleton graph utilities.")
    graph_sub = p.add_subparsers(dest="graph_cmd", required=True)
    g = graph_sub.add_parser("validate", help="Report constraint violations of a graph file.")
    g.add_argument("file", help="Graph file.")
    g.add_argument("--profile", choices=sorted(DEGREE_CAPS), default="default")

    # --- synth ---
    p = subparsers.add_parser("synth", help="Generate train and test splits of synthetic data.")
    p.add_argument("--config", metavar="FILE")
    p.add_argument("--out", metavar="DIR", required=True)

    # --- cache ---
    p = subparsers.add_parser("cache", help="Manage the ablation run cache.")
    p.add_argument("--config", metavar="FILE")
    cache_sub = p.add_subparsers(dest="cache_cmd", required=True)
    cache_sub.add_parser("stats", help="Show stored runs and size on disk.")
    cache_sub.add_parser("clear", help="Remove every stored run.")
    return parser


def _run(args: argparse.Namespace, stdout: IO[str]) -> int:
    if args.command == "train":
        result = train_model(args.config, args.out, resume=args.resume)
        render_train_result(result, file=stdout)
        return EXIT_OK

    if args.command == "eval":
        report = evaluate_checkpoint(args.ckpt, args.data, args.pck)
        render_metrics_report(report, file=stdout)
        if args.records:
            save_records(args.records, [report.to_dict()])
        return EXIT_OK

    if args.command == "ablate":
        rows = run_ablation(args.axis, args.config, seeds=args.seeds, out_dir=args.out, use_cache=not args.no_cache)
        render_ablation_table(rows, file=stdout)
        if args.records:
            save_records(args.records, [r.record() for r in rows])
        return EXIT_OK

    if args.command == "dump-fmaps":
        paths = dump_fmaps(args.ckpt, args.image, args.joints, args.out)
        render_paths(f"Wrote {len(paths)} feature maps:", paths, file=stdout)
        return EXIT_OK

    if args.command == "graph":
        violations = validate_graph(args.file, args.profile)
        render_violations(args.file, violations, file=stdout)
        return EXIT_FAILURE if violations else EXIT_OK

    if args.command == "synth":
        splits = generate_data(args.config, args.out)
        render_paths("Wrote datasets:", splits.values(), file=stdout)
        return EXIT_OK

    # args.command == "cache"
    exp = load_experiment(args.config)
    with RunCache(exp.cache) as rc:
        if args.cache_cmd == "clear":
            rc.clear_all()
            print(f"Cache cleared at: {rc.directory or '(disabled)'}", file=stdout)
            return EXIT_OK
        st = rc.stats()
        out = {
            "directory": st.get("directory", ""),
            "items": int(st.get("items", 0)),
            "bytes": int(st.get("bytes", 0)),
            "human_bytes": _human_bytes(int(st.get("bytes", 0))),
        }
        print(json.dumps(out, indent=2), file=stdout)
        return EXIT_OK


def main(argv: Sequence[str] | None = None, stdout: IO[str] | None = None) -> int:
    """
    Entry point for the command-line interface.

    Exit codes: 0 success, 1 validation failure or library error, 2 usage error.
    """
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, 0 for --help and --version
        return int(exc.code or 0) if not isinstance(exc.code, str) else EXIT_USAGE
    _configure_logging(args.verbose)

    missing = _missing_inputs(args)
    if missing:
        for m in missing:
            log.error("File not found: %s", m)
        return EXIT_USAGE

    try:
        return _run(args, stdout)
    except PoseBoostError as exc:
        log.error("%s", exc)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
