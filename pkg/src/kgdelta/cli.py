"""Command line entry point: ``kgdelta build|stats|replay|validate``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from kgdelta.dataset import Dataset, validate_dataset
from kgdelta.errors import KgDeltaError
from kgdelta.pipeline import VARIANTS, PipelineConfig, build
from kgdelta.rdf import render_graph
from kgdelta.stats import compute_stats, emit_csv
from kgdelta.streams import DEFAULT_FAN_IN

logger = logging.getLogger("kgdelta")


def _variants(text: str) -> tuple[str, ...]:
    parts = tuple(p.strip() for p in text.split(",") if p.strip())
    bad = [p for p in parts if p not in VARIANTS]
    if bad or not parts:
        raise argparse.ArgumentTypeError(f"variants must be drawn from {', '.join(VARIANTS)}")
    return parts


def cmd_build(args: argparse.Namespace) -> int:
    try:
        config = PipelineConfig(
            input_paths=args.input,
            output_dir=args.output,
            scratch_dir=args.scratch,
            fan_in=args.fan_in,
            workers=args.workers,
            skip_report_path=args.skip_report,
            variants=args.variants,
        )
    except ValueError as e:
        print(f"build: invalid configuration: {e}", file=sys.stderr)
        return 2
    result = build(config)
    counts = result.manifest["counts"]
    for err in result.manifest["hardErrors"]:
        print(f"build: [{err['stage']}] {err['error']}: {err['message']}", file=sys.stderr)
    print(
        f"{counts['entities']} entities, {counts['revisions']} revisions, "
        f"{counts['skippedRevisions']} skipped revisions -> {result.manifest_path}"
    )
    return 0 if result.ok else 1


def cmd_stats(args: argparse.Namespace) -> int:
    try:
        report = compute_stats(Dataset(args.input).iter_revisions(args.variant), args.scratch)
    except (KgDeltaError, OSError) as e:
        print(f"stats: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    for path in emit_csv(report, args.output):
        print(path)
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    try:
        graph = Dataset(args.input).replay(args.entity, args.at_revision)
    except (KgDeltaError, OSError) as e:
        print(f"replay: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    sys.stdout.write(render_graph(graph))
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        report = validate_dataset(args.input, args.sample)
    except OSError as e:
        print(f"validate: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    for v in report.violations[: args.max_violations]:
        print(v, file=sys.stderr)
    hidden = len(report.violations) - args.max_violations
    if hidden > 0:
        print(f"... and {hidden} more violations", file=sys.stderr)
    status = "ok" if report.ok else "FAILED"
    print(
        f"validate: {status}: {report.global_records} global records, "
        f"{report.entity_records} entity-stream records in {report.entities} entities, "
        f"{report.replayed_entities} replayed"
    )
    return 0 if report.ok else 1


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgdelta",
        description="Turn Wikibase revision-history dumps into streams of RDF triple changes.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build entity streams and the global stream from dumps")
    p.add_argument("--input", action="append", required=True, type=Path,
                   help="pages-meta-history XML dump part (repeatable, in order)")
    p.add_argument("--output", required=True, type=Path)
    p.add_argument("--scratch", type=Path,
                   help="scratch directory (default: $KGDELTA_SCRATCH or <output>.scratch)")
    p.add_argument("--fan-in", type=int, default=DEFAULT_FAN_IN)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--variants", type=_variants, default=VARIANTS,
                   help="comma-separated subset of entity-streams,global-stream")
    p.add_argument("--skip-report", type=Path)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("stats", help="write the dataset statistics as CSV files")
    p.add_argument("--input", required=True, type=Path, help="dataset directory")
    p.add_argument("--variant", choices=("global", "entity"), default="global")
    p.add_argument("--output", required=True, type=Path)
    p.add_argument("--scratch", type=Path, help="spill per-triple state to SQLite here")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("replay", help="print an entity's graph at a revision as N-Triples")
    p.add_argument("--input", required=True, type=Path, help="dataset directory")
    p.add_argument("--entity", required=True)
    p.add_argument("--at-revision", type=int)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("validate", help="check a built dataset")
    p.add_argument("--input", required=True, type=Path, help="dataset directory")
    p.add_argument("--sample", type=int, default=1000,
                   help="number of entities to replay (0 = all)")
    p.add_argument("--max-violations", type=int, default=20)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * args.verbose,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
