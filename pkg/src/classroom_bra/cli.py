"""Command line entry point: bench, verify, eval, fuse, stats.

Exit codes: 0 success, 1 validation or parse failure, 2 failed internal check.
"""
from __future__ import annotations

import argparse
import json
import sys

from .bra import ConfigError
from .dataset import (
    ParseError,
    ValidationError,
    boxes_from,
    dataset_stats,
    parse_annotations,
    read_predictions,
)
from .evaluation import (
    ConfusionCounts,
    GroundTruth,
    average_precision,
    confusion,
    precision_recall,
)
from .fusion import FusionConfig, fuse, read_actions, read_handraises, read_tracks, write_records
from .harness import bench, run_checks
from .tensor import ShapeError

EXIT_OK, EXIT_INPUT, EXIT_CHECK = 0, 1, 2


def cmd_bench(args) -> int:
    if args.iters < 1:
        raise ValidationError("iters must be >= 1")
    report = bench(args.height, args.width, args.channels, args.s, args.k, args.iters, args.seed)
    for line in report.deterministic_lines():
        print(line)
    print(report.timing_line())
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_checks(fault=args.inject_fault)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_CHECK


def _load_gts(gt_dir, width, height) -> dict[str, list[GroundTruth]]:
    return {
        img: [GroundTruth(boxes_from(r, width, height), r.class_id) for r in recs]
        for img, recs in parse_annotations(gt_dir).items()
    }


def cmd_eval(args) -> int:
    width, height = args.image_size
    preds = read_predictions(args.pred)
    gts = _load_gts(args.gt, width, height)
    classes = sorted({g.class_id for v in gts.values() for g in v}
                     | {d.class_id for v in preds.values() for d in v})
    tp = fp = fn = 0
    aps = {}
    for cls in classes:
        p = {img: [d for d in v if d.class_id == cls] for img, v in preds.items()}
        g = {img: [x.box for x in v if x.class_id == cls] for img, v in gts.items()}
        counts = confusion(p, g, args.iou)
        tp, fp, fn = tp + counts.tp, fp + counts.fp, fn + counts.fn
        if any(g.values()):
            aps[cls] = average_precision(p, g, args.iou, args.interp)
    precision, recall = precision_recall(ConfusionCounts(tp, fp, fn))
    print(f"images: {len(set(gts) | set(preds))}")
    print(f"tp={tp} fp={fp} fn={fn}")
    print(f"precision={precision:.6f} recall={recall:.6f}")
    for cls, ap in aps.items():
        print(f"class {cls}: AP@{args.iou:g}={ap:.6f}")
    mean = sum(aps.values()) / len(aps) if aps else 0.0
    print(f"mAP@{args.iou:g}={mean:.6f} (interp={args.interp})")
    return EXIT_OK


def cmd_fuse(args) -> int:
    config = FusionConfig(fps=args.fps, iou_min=args.iou_min)
    records = fuse(read_tracks(args.tracks), read_actions(args.actions),
                   read_handraises(args.handraise), config)
    write_records(args.out, records)
    unassigned = sum(r.track_id is None for r in records)
    print(f"records={len(records)} unassigned={unassigned}")
    return EXIT_OK


def cmd_stats(args) -> int:
    stats = dataset_stats(parse_annotations(args.annotations), args.handraise_class)
    if args.json:
        print(json.dumps(stats.report(), indent=2))
        return EXIT_OK
    print(f"{stats.image_count} images, {stats.label_count} labels, "
          f"{stats.labels_per_image:.2f}")
    print("hand-raise histogram: " + " ".join(
        f"{k}={v}" for k, v in stats.handraise_histogram.items()))
    return EXIT_OK


def _image_size(text: str) -> float:
    v = float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("image size must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="classroom-bra", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="time seeded routing-attention forward passes")
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--channels", type=int, required=True)
    p.add_argument("--s", type=int, required=True, help="regions per side")
    p.add_argument("--k", type=int, required=True, help="routed regions per region")
    p.add_argument("--iters", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", help="run the routing-attention invariant checks")
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("eval", help="precision, recall and AP of a predictions file")
    p.add_argument("--pred", required=True, help="predictions, JSON Lines")
    p.add_argument("--gt", required=True, help="directory of annotation .txt files")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--interp", choices=("all", "101"), default="all")
    p.add_argument("--image-size", nargs=2, type=_image_size, default=(1.0, 1.0),
                   metavar=("WIDTH", "HEIGHT"),
                   help="pixel size used to denormalize annotations (default 1 1)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fuse", help="merge track, action and hand-raise streams")
    p.add_argument("--tracks", required=True)
    p.add_argument("--actions", required=True)
    p.add_argument("--handraise", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iou-min", type=float, default=0.3)
    p.add_argument("--fps", type=int, default=30)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("stats", help="corpus statistics of an annotation directory")
    p.add_argument("--annotations", required=True)
    p.add_argument("--handraise-class", type=int, default=None,
                   help="class counted in the histogram (default: every label)")
    p.add_argument("--json", action="store_true", help="emit the report as JSON")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError, ConfigError, ShapeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
