"""Command line interface: lapc translate | prove | bench."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import errors
from .pipeline import BatchReport, PipelineConfig, run_batch, run_pipeline

EXIT_ALL_PROVED = 0
EXIT_SOME_UNKNOWN = 1
EXIT_TRANSLATION_FAILURE = 2
EXIT_USAGE = 3


def _common_flags(p: argparse.ArgumentParser):
    p.add_argument("--max-insts", type=int, default=None,
                   help="instance threshold for the saturation loop")
    p.add_argument("--absorb-instances", action="store_true", default=None,
                   help="pull instance-implicit arguments into HOL* instances")
    p.add_argument("--drop-non-qmono", action="store_true", default=None,
                   help="drop premises the abstraction cannot handle")
    p.add_argument("--smt-encoding", choices=("applicative", "ho"),
                   default="applicative")
    p.add_argument("--th0-free-constructors", action="store_true",
                   help="declare datatype constructors as plain TH0 symbols")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lapc",
                                 description="dependent-type-theory to HOL translator")
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("translate", help="emit TH0/SMT for one problem")
    t.add_argument("file", type=Path)
    t.add_argument("--emit", choices=("th0", "smt2"), default="th0")
    t.add_argument("--out", type=Path, default=None,
                   help="output file path (default: alongside the input)")
    _common_flags(t)

    pr = sub.add_parser("prove", help="translate and run an external solver")
    pr.add_argument("file", type=Path)
    pr.add_argument("--solver", required=True,
                    help="preset (zipperposition, eprover-ho, z3, cvc5) or a "
                         "command template containing {file}")
    pr.add_argument("--emit", choices=("th0", "smt2"), default=None,
                    help="emission target for custom solver commands")
    pr.add_argument("--timeout", type=float, default=10.0)
    _common_flags(pr)

    b = sub.add_parser("bench", help="run a directory of problems")
    b.add_argument("dir", type=Path)
    b.add_argument("--csv", type=Path, default=None)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--solver", default=None)
    b.add_argument("--emit", choices=("th0", "smt2"), default="th0")
    b.add_argument("--timeout", type=float, default=10.0)
    b.add_argument("--out-dir", type=Path, default=None)
    _common_flags(b)
    return ap


def _config(args, emit) -> PipelineConfig:
    return PipelineConfig(
        emit=emit,
        solver=getattr(args, "solver", None),
        timeout=getattr(args, "timeout", 10.0),
        max_insts=args.max_insts,
        absorb_instances=args.absorb_instances,
        drop_non_qmono=args.drop_non_qmono,
        smt_encoding=args.smt_encoding,
        th0_free_constructors=args.th0_free_constructors,
        jobs=getattr(args, "jobs", 1),
        out_dir=getattr(args, "out_dir", None),
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "translate":
            config = _config(args, (args.emit,))
            if args.out is not None:
                config.out_dir = args.out.parent
            report = run_pipeline(args.file, config)
            if report.error:
                print(f"translation failed: {report.error}", file=sys.stderr)
                return EXIT_TRANSLATION_FAILURE
            if args.out is not None and report.emissions:
                Path(report.emissions[0]).replace(args.out)
                report.emissions[0] = str(args.out)
            for path in report.emissions:
                print(path)
            for w in report.warnings:
                print(f"warning: {w}", file=sys.stderr)
            return EXIT_ALL_PROVED
        if args.command == "prove":
            emit = (args.emit,) if args.emit else ()
            config = _config(args, emit)
            report = run_pipeline(args.file, config)
            if report.error:
                print(f"translation failed: {report.error}", file=sys.stderr)
                return EXIT_TRANSLATION_FAILURE
            print(f"{args.file.name}: {report.verdict}")
            for w in report.warnings:
                print(f"warning: {w}", file=sys.stderr)
            return EXIT_ALL_PROVED if report.verdict == "proved" else EXIT_SOME_UNKNOWN
        if args.command == "bench":
            config = _config(args, (args.emit,))
            batch = run_batch(args.dir, config)
            for r in batch.reports:
                total = sum(r.timings_ms.values())
                print(f"{r.problem}: {r.verdict} ({total:.0f} ms)"
                      + (f" [{r.error}]" if r.error else ""))
            print(f"solved {batch.solved}/{len(batch.reports)}; "
                  f"mean time {batch.mean_time_ms:.0f} ms"
                  + (f"; mean size ratio {batch.mean_size_ratio:.4f}"
                     if batch.mean_size_ratio is not None else ""))
            if args.csv:
                args.csv.write_text(batch.to_csv(), encoding="utf-8")
            if any(r.error for r in batch.reports):
                return EXIT_TRANSLATION_FAILURE
            if batch.solved == len(batch.reports) and batch.reports:
                return EXIT_ALL_PROVED
            return EXIT_SOME_UNKNOWN
    except errors.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
