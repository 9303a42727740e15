"""Command-line entry point.

Exit codes: 0 success, 1 I/O failure (including masks at the wrong size for
the grading thresholds), 2 validation failure (incomplete manifest,
mismatched image ids, malformed inputs).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import augment, pipeline
from .ensemble import validate_manifest
from .errors import (DimMismatch, DRFuseError, DuplicateId, DuplicateOutputId, IdMismatch,
                     LengthMismatch, ManifestError, MissingPrediction)
from .grades import read_grades
from .manifest import DEFAULT_CANONICAL, read_manifest
from .mask import Dims
from .metrics import ScoreMode, grade_confusion, quadratic_weighted_kappa
from .recipes import get_recipe
from .synth import DEFAULT_SOURCES, Source, SynthConfig, synthesize
from .tim import CheckMode, default_thresholds, load_thresholds

logger = logging.getLogger("drfuse")

EXIT_OK = 0
EXIT_IO = 1
EXIT_INVALID = 2

_VALIDATION_ERRORS = (IdMismatch, DuplicateId, DuplicateOutputId, LengthMismatch,
                      ManifestError, MissingPrediction)


def _write_json(path: Path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_fuse(args) -> int:
    recipe = get_recipe(args.recipe)
    manifest = read_manifest(args.manifest, Dims.parse(args.canonical))
    report = validate_manifest(manifest, recipe)
    if not report.ok:
        print(f"manifest incomplete for recipe {recipe.name}: {len(report.gaps)} gap(s)", file=sys.stderr)
        for line in report.lines():
            print("  " + line, file=sys.stderr)
        return EXIT_INVALID
    if args.emit_overlays and not args.images:
        print("--emit-overlays needs --images DIR", file=sys.stderr)
        return EXIT_INVALID
    run = pipeline.run_fuse(manifest, recipe, args.out, jobs=args.jobs,
                            overlay_images=args.images if args.emit_overlays else None)
    for r in run.overlaps:
        print(f"{r.image_id}: overlap(O1,O3)={r.overlap_pixels}px")
    print(f"fused {len(run.fused)} image(s) with recipe {recipe.name} -> {args.out}")
    return EXIT_OK


def cmd_eval_seg(args) -> int:
    ev = pipeline.evaluate_directories(args.pred, args.gt, args.seg_mode)
    for line in ev.lines():
        print(line)
    if args.out:
        _write_json(Path(args.out), ev.to_dict())
    return EXIT_OK


def cmd_grade_revise(args) -> int:
    th = load_thresholds(args.thresholds) if args.thresholds else default_thresholds()
    prelim = read_grades(args.prelim)
    try:
        records = pipeline.run_grade_revise(prelim, args.fused, th, args.mode, args.out)
    except DimMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    changed = sum(r.revised != r.preliminary for r in records)
    print(f"revised {len(records)} grade(s), {changed} changed -> {args.out}")
    return EXIT_OK


def cmd_eval_kappa(args) -> int:
    cm = grade_confusion(read_grades(args.assigned), read_grades(args.reference))
    kappa = quadratic_weighted_kappa(cm)
    print(f"quadratic weighted kappa: {kappa:.4f}")
    print("confusion (rows = assigned, cols = reference):")
    for row in cm.to_list():
        print("  " + " ".join(f"{v:6d}" for v in row))
    if args.out:
        _write_json(Path(args.out), {"kappa": kappa, "confusion": cm.to_list()})
    return EXIT_OK


def cmd_augment(args) -> int:
    manifest = augment.read_dataset_manifest(args.manifest)
    report, expanded = augment.expand_dataset(manifest, args.out, jobs=args.jobs)
    augment.write_dataset_manifest(expanded, Path(args.out) / "manifest.csv")
    _write_json(Path(args.out) / "expansion_report.json", report.to_dict())
    for line in report.table_lines():
        print(line)
    return EXIT_OK


def cmd_synth(args) -> int:
    sources = tuple(Source.parse(s) for s in args.models.split(",")) if args.models else DEFAULT_SOURCES
    cfg = SynthConfig(seed=args.seed, n_images=args.n_images, side=args.size, sources=sources)
    corpus = synthesize(args.out, cfg)
    print(f"wrote {corpus.manifest_entries} predictions for {cfg.n_images} image(s) -> {corpus.root}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drfuse", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    default_jobs = os.cpu_count() or 1

    p = sub.add_parser("fuse", help="fuse upstream predictions into per-class lesion masks")
    p.add_argument("--manifest", required=True)
    p.add_argument("--recipe", default="v2", help="v1, v2, tim or a recipe JSON file")
    p.add_argument("--out", required=True)
    p.add_argument("--canonical", default=str(DEFAULT_CANONICAL), help="output dims, e.g. 1024x1024")
    p.add_argument("--jobs", type=int, default=default_jobs)
    p.add_argument("--emit-overlays", action="store_true",
                   help="also write fused masks blended over the source images")
    p.add_argument("--images", help="directory of source images named <image_id>.<ext>")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval-seg", help="per-class IoU/Dice and mean DSC")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--seg-mode", choices=[m.value for m in ScoreMode], default=ScoreMode.AGGREGATE.value)
    p.add_argument("--out", help="write the report as JSON")
    p.set_defaults(func=cmd_eval_seg)

    p = sub.add_parser("grade-revise", help="revise preliminary grades with the pixel thresholds")
    p.add_argument("--prelim", required=True)
    p.add_argument("--fused", required=True)
    p.add_argument("--thresholds", help="threshold JSON (default: built-in values at 1024x1024)")
    p.add_argument("--mode", choices=[m.value for m in CheckMode], default=CheckMode.SAME_INDEX.value)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grade_revise)

    p = sub.add_parser("eval-kappa", help="quadratic weighted kappa between two grade CSVs")
    p.add_argument("--assigned", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--out", help="write kappa and confusion matrix as JSON")
    p.set_defaults(func=cmd_eval_kappa)

    p = sub.add_parser("augment", help="x6 geometric dataset expansion")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=default_jobs)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("synth", help="generate a deterministic synthetic corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-images", type=int, default=4)
    p.add_argument("--size", type=int, default=1024, help="canonical side length")
    p.add_argument("--models", help="comma list of model:resolution[:variant], e.g. m:1536,s:1024")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("--jobs must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, DRFuseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
