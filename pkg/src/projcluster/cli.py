"""Command-line front door for batch processing of recorded sessions.

Subcommands: aggregate (detections to stable regions), evaluate
(score regions against ground truth), augsearch (augmentation
hyperparameter search against an external oracle command), synth
(generate a synthetic corpus), render (debug images).

Exit codes: 0 success, 1 validation or usage failure, 2 I/O failure.
The PROJCLUSTER_LOG environment variable sets the log level.
"""

from __future__ import annotations

import argparse
import logging
import os
import shlex
import sys
import time

import numpy as np

from projcluster import augment, figures
from projcluster.boxes import FrameGeometry
from projcluster.errors import OracleError
from projcluster.metrics import (
    load_ground_truth,
    format_report_table,
    replicate_regions,
    session_report,
    write_report,
)
from projcluster.pgm import (
    draw_box_outline,
    read_pgm,
    scale_to_display,
    write_pgm,
    write_ppm,
)
from projcluster.regions import (
    DumpDirs,
    PipelineConfig,
    detect_hands,
    read_regions,
    write_regions,
)
from projcluster.streams import load_stream, write_stream
from projcluster.synth import demo_scene, generate
from projcluster.metrics import write_ground_truth

LOG_ENV = "PROJCLUSTER_LOG"
log = logging.getLogger("projcluster")


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 on bad usage instead of the default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_geometry(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--width", type=int, required=required, help="frame width in pixels")
    p.add_argument("--height", type=int, required=required, help="frame height in pixels")


def _add_pipeline(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window", type=int, default=12, help="window length in seconds")
    p.add_argument("--area-th", type=int, default=None,
                   help="minimum region area in cells (default: 0.2%% of the grid)")
    p.add_argument("--nms-iou", type=float, default=0.5, help="NMS overlap threshold")
    p.add_argument("--score-th", type=float, default=0.5, help="detection score cutoff")
    p.add_argument("--scale", type=float, default=1.0, help="grid scale factor in (0, 1]")
    p.add_argument("--threads", type=int, default=None, help="worker thread cap")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="projcluster",
                     description="Aggregate noisy per-frame detections into "
                                 "stable per-window regions.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("aggregate", help="detections file -> regions file")
    p.add_argument("--in", dest="in_path", required=True, help="detection TSV file")
    p.add_argument("--out", required=True, help="output region TSV file")
    _add_geometry(p)
    _add_pipeline(p)
    p.add_argument("--dump-bi", default=None, help="directory for per-second grid dumps")
    p.add_argument("--dump-pi", default=None, help="directory for projection dumps")
    p.add_argument("--dump-ci", default=None, help="directory for cluster dumps")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("evaluate", help="score regions against ground truth")
    p.add_argument("--detections", required=True, help="raw detection TSV file")
    p.add_argument("--regions", required=True, help="region TSV file from aggregate")
    p.add_argument("--gt", required=True, help="ground-truth TSV file")
    p.add_argument("--out", default="report.tsv", help="machine-readable report path")
    _add_geometry(p)
    p.add_argument("--window", type=int, default=12, help="window length in seconds")
    p.add_argument("--score-th", type=float, default=0.5, help="detection score cutoff")
    p.add_argument("--figures-dir", default=None,
                   help="figure output directory (default: <out dir>/figures)")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("augsearch", help="augmentation hyperparameter search")
    p.add_argument("--oracle-cmd", required=True,
                   help="command invoked with a descriptor path; prints a score")
    p.add_argument("--delta", type=float, default=augment.DEFAULT_DELTA,
                   help="score drop treated as significant")
    p.add_argument("--set-size", type=int, default=augment.DEFAULT_SET_SIZE,
                   help="images per augmented-set descriptor")
    p.add_argument("--seed", type=int, default=0, help="descriptor RNG seed")
    p.add_argument("--out", default="search_records.jsonl",
                   help="machine-readable search log path")
    p.add_argument("--figures-dir", default=None,
                   help="figure output directory (default: <out dir>/figures)")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p.set_defaults(func=cmd_augsearch)

    p = sub.add_parser("synth", help="generate a synthetic session")
    p.add_argument("--out", required=True, help="detection TSV output path")
    p.add_argument("--gt", default=None, help="ground-truth TSV output path")
    p.add_argument("--duration", type=int, default=12, help="session length in seconds")
    p.add_argument("--seed", type=int, default=42, help="scene RNG seed")
    _add_geometry(p, required=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("render", help="debug images from regions or dumps")
    p.add_argument("--regions", default=None, help="region TSV file to draw")
    p.add_argument("--pi", default=None, help="projection dump (PGM) to display-scale")
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--window-index", type=int, default=0,
                   help="which window of the region file to draw")
    _add_geometry(p, required=False)
    p.set_defaults(func=cmd_render)

    return parser


def cmd_aggregate(args) -> int:
    geometry = FrameGeometry(args.width, args.height)
    stream = load_stream(args.in_path, geometry, args.score_th)
    cfg = PipelineConfig(
        window_length_s=args.window,
        area_threshold_cells=args.area_th,
        nms_iou=args.nms_iou,
        score_threshold=args.score_th,
        scale=args.scale,
    )
    dumps = None
    if args.dump_bi or args.dump_pi or args.dump_ci:
        for d in (args.dump_bi, args.dump_pi, args.dump_ci):
            if d:
                os.makedirs(d, exist_ok=True)
        dumps = DumpDirs(args.dump_bi, args.dump_pi, args.dump_ci)

    t0 = time.perf_counter()
    region_sets = detect_hands(stream, cfg, threads=args.threads, dumps=dumps)
    elapsed = time.perf_counter() - t0

    write_regions(region_sets, args.out)
    for rs in region_sets:
        end_s = rs.start_s + rs.length_s
        print(f"window {rs.window_index} [{rs.start_s}s..{end_s}s): "
              f"{len(rs.regions)} regions")
    frames = stream.duration_s
    # stream runs at 1 fps, so frames/second of wall time is the multiple
    multiple = frames / elapsed if elapsed > 0 else float("inf")
    print(f"processed {frames} frames in {elapsed:.3f} s: {multiple:.1f}x real-time "
          f"(detector inference excluded)")
    log.info("aggregate: %d detections -> %d regions", len(stream),
             sum(len(rs.regions) for rs in region_sets))
    return 0


def _figures_dir(args) -> str:
    if args.figures_dir:
        return args.figures_dir
    base = os.path.dirname(os.path.abspath(args.out))
    return os.path.join(base, "figures")


def cmd_evaluate(args) -> int:
    geometry = FrameGeometry(args.width, args.height)
    baseline = load_stream(args.detections, geometry, args.score_th)
    gt = load_ground_truth(args.gt, geometry)
    if gt.total_boxes == 0:
        print("projcluster: error: ground-truth file holds no boxes", file=sys.stderr)
        return 1
    region_sets = read_regions(args.regions, args.window)

    ids = {baseline.session_id, gt.session_id} | {rs.session_id for rs in region_sets}
    if len(ids) > 1:
        print(f"projcluster: error: session ids disagree across inputs: "
              f"{', '.join(sorted(ids))}", file=sys.stderr)
        return 1

    regions = [r for rs in region_sets for r in rs.regions]
    report = session_report(baseline.detections, regions, gt,
                            session_id=baseline.session_id,
                            window_length_s=args.window)
    print(format_report_table([report]))
    write_report([report], args.out)
    print(f"report written to {args.out}")

    if not args.no_figures:
        pr_points = figures.pr_points_for_report(
            replicate_regions(regions, args.window), gt)
        written = figures.save_evaluation_figures([report], _figures_dir(args),
                                                  pr_points)
        print("figures: " + ", ".join(written))
    return 0


def cmd_augsearch(args) -> int:
    oracle = augment.SubprocessOracle(shlex.split(args.oracle_cmd))
    results: list[tuple[str, dict[float, float], float]] = []

    optima: dict[str, float] = {}
    for kind, candidates in (
        ("shear", augment.RANGE_CANDIDATES_DEG),
        ("rotate", augment.RANGE_CANDIDATES_DEG),
        ("translate", augment.TRANSLATE_CANDIDATES_PX),
    ):
        scores = augment.evaluate_candidates(kind, candidates, oracle,
                                             args.set_size, args.seed)
        chosen = augment.pick_widest_within_delta(scores, args.delta)
        optima[kind] = chosen
        results.append((kind, scores, chosen))
        print(augment.format_search_table(kind, scores, chosen))
        print()

    plan = augment.AugPlan(
        shear_max_deg=optima["shear"],
        rotate_max_deg=optima["rotate"],
        translate_max_px=optima["translate"],
    )
    p_star, p_scores = augment.probability_sweep(plan, oracle, args.seed,
                                                 args.set_size)
    results.append(("probability", p_scores, p_star))
    print(augment.format_search_table("probability", p_scores, p_star))
    print()

    print("optimal augmentation parameters")
    print(f"  shear      +/-{optima['shear']:g} deg")
    print(f"  rotate     +/-{optima['rotate']:g} deg")
    print(f"  translate  +/-{optima['translate']:g} px")
    print(f"  scale      {{0.8, 1.2}}")
    print(f"  flip       horizontal")
    print(f"  p*         {p_star:g}")

    augment.write_search_records(results, args.out)
    print(f"records written to {args.out}")
    if not args.no_figures:
        written = figures.save_search_figures(results, _figures_dir(args))
        print("figures: " + ", ".join(written))
    return 0


def cmd_synth(args) -> int:
    geometry = None
    if args.width is not None or args.height is not None:
        if args.width is None or args.height is None:
            print("projcluster: error: --width and --height go together",
                  file=sys.stderr)
            return 1
        geometry = FrameGeometry(args.width, args.height)
    spec = demo_scene(seed=args.seed, duration_s=args.duration, geometry=geometry)
    stream, gt = generate(spec)
    write_stream(stream, args.out)
    print(f"{len(stream)} detections over {spec.duration_s} s written to {args.out}")
    if args.gt:
        write_ground_truth(gt, args.gt)
        print(f"ground truth written to {args.gt}")
    return 0


def cmd_render(args) -> int:
    if bool(args.regions) == bool(args.pi):
        print("projcluster: error: pass exactly one of --regions or --pi",
              file=sys.stderr)
        return 1
    if args.regions:
        if not os.path.exists(args.regions):
            print(f"projcluster: error: no such file: {args.regions}", file=sys.stderr)
            return 1
        if args.width is None or args.height is None:
            print("projcluster: error: --regions needs --width and --height",
                  file=sys.stderr)
            return 1
        region_sets = read_regions(args.regions)
        canvas = np.zeros((args.height, args.width, 3), dtype=np.uint8)
        drawn = 0
        for rs in region_sets:
            if rs.window_index != args.window_index:
                continue
            for r in rs.regions:
                draw_box_outline(canvas, r.box, (0, 255, 0), thickness=2)
                drawn += 1
        write_ppm(args.out, canvas)
        print(f"{drawn} regions drawn to {args.out}")
        return 0
    if not os.path.exists(args.pi):
        print(f"projcluster: error: no such file: {args.pi}", file=sys.stderr)
        return 1
    cells, maxval = read_pgm(args.pi)
    write_pgm(args.out, scale_to_display(cells, maxval), maxval=255)
    print(f"display-scaled projection written to {args.out}")
    return 0


def _configure_logging() -> None:
    level_name = os.environ.get(LOG_ENV, "").strip().upper()
    if not level_name:
        return
    level = getattr(logging, level_name, None)
    if isinstance(level, int):
        logging.basicConfig(
            level=level,
            format="%(asctime)s %(name)s %(levelname)s %(message)s",
        )


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse raises SystemExit for both --help (0) and usage errors (1)
        return int(exc.code or 0)
    try:
        return args.func(args)
    except OracleError as exc:
        print(f"projcluster: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"projcluster: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"projcluster: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
