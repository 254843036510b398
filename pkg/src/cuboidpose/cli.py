"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import sys

from . import pipeline
from .tensorio import ParseError, TensorFormatError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cuboidpose", description="Cuboid keypoint pose pipeline (labels, detection, PnP, evaluation).")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write labelled synthetic frames and a ground-truth manifest")
    g.add_argument("--config", required=True)
    g.add_argument("--frames", type=int, required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)

    d = sub.add_parser("detect", help="detect instances and solve poses from tensor files")
    d.add_argument("--config", required=True)
    d.add_argument("--in", dest="in_dir", required=True)
    d.add_argument("--out", required=True)

    e = sub.add_parser("evaluate", help="ADD accuracy curves and AUC against ground truth")
    e.add_argument("--config", required=True)
    e.add_argument("--est", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--out-csv", required=True)

    r = sub.add_parser("roundtrip", help="generate, corrupt, detect and evaluate in memory")
    r.add_argument("--config", required=True)
    r.add_argument("--frames", type=int, required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--noise-sigma", type=float, default=0.0)
    r.add_argument("--dropout", type=int, default=0)

    b = sub.add_parser("bench", help="time peak extraction, association and PnP")
    b.add_argument("--config", required=True)
    b.add_argument("--frames", type=int, default=100)
    return p


def _run(args) -> int:
    cfg = pipeline.load_config(args.config)
    if args.command == "generate":
        records = pipeline.cmd_generate(cfg, args.frames, args.out, args.seed)
        print(f"wrote {len(records)} frames to {args.out}")
    elif args.command == "detect":
        records, errors = pipeline.cmd_detect(cfg, args.in_dir, args.out)
        for msg in errors:
            print(f"error: {msg}", file=sys.stderr)
        print(f"wrote {sum(len(r.objects) for r in records)} estimates for {len(records)} frames to {args.out}")
    elif args.command == "evaluate":
        summary = pipeline.cmd_evaluate(cfg, args.est, args.gt, args.out_csv)
        print("\n".join(summary.lines()))
    elif args.command == "roundtrip":
        if not 0 <= args.dropout <= 8:
            raise pipeline.DataError("--dropout must be between 0 and 8")
        report = pipeline.cmd_roundtrip(cfg, args.frames, args.noise_sigma, args.dropout, args.seed)
        print("\n".join(report.lines()))
    elif args.command == "bench":
        print(pipeline.format_bench(pipeline.cmd_bench(cfg, args.frames)))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "frames", 1) is not None and getattr(args, "frames", 1) < 0:
        print("cuboidpose: error: --frames must be >= 0", file=sys.stderr)
        return 1
    try:
        return _run(args)
    except (pipeline.DataError, ParseError, TensorFormatError, OSError, ValueError) as e:
        print(f"cuboidpose: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
