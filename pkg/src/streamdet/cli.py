"""Command-line entry point: ``streamdet {gen,run,sweep,latency}``.

Exit status is 0 on success, 1 when a streaming-order contract is violated and
2 for unreadable inputs or invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ContractViolation, InvalidInputError, PlacementError, UndefinedMetricError
from .latency import LatencyModel, latency_report
from .metrics import Accumulator, match_detections
from .pipeline import VARIANTS, ExperimentConfig, Variant, benchmark_scene, detect_variant, sweep
from .scene import load_truths, save_scene
from .sensor import range_image_to_points, read_point_cloud, read_range_image, write_range_image

EXIT_OK, EXIT_CONTRACT, EXIT_INPUT = 0, 1, 2

log = logging.getLogger("streamdet")


def _load_config(path) -> ExperimentConfig:
    return ExperimentConfig() if path is None else ExperimentConfig.from_json(path)


def _load_scan(path):
    """Range-image header (``.json``) or raw float32 point records (anything else)."""
    p = Path(path)
    if p.suffix == ".json":
        return range_image_to_points(read_range_image(p))
    return read_point_cloud(p)


def cmd_gen(args) -> int:
    cfg = _load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for j in range(cfg.n_scenes):
        scene, img = benchmark_scene(cfg, args.seed, j)
        stem = f"{j:04d}"
        save_scene(out / f"scene_{stem}.json", scene)
        write_range_image(out / f"scan_{stem}.json", img)
        manifest.append({"scene": f"scene_{stem}.json", "scan": f"scan_{stem}.json", "scene_seed": scene.seed})
    (out / "manifest.json").write_text(json.dumps({"seed": args.seed, "items": manifest}, indent=1) + "\n")
    print(f"wrote {cfg.n_scenes} scenes to {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    variant = Variant.named(args.variant, args.slices, args.nms_window, args.iou, cfg.iou_kind)
    points = _load_scan(args.scan)
    truths = load_truths(args.truth)
    dets = detect_variant(points, variant, cfg.detector)
    acc = Accumulator()
    acc.add(match_detections(dets, truths, cfg.thresholds, cfg.iou_kind), truths)
    report = acc.report()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scan_id = Path(args.scan).stem
    with open(out / "detections.jsonl", "w") as fh:
        for d in dets:
            fh.write(json.dumps(d.to_dict(scan_id)) + "\n")
    (out / "eval.json").write_text(report.to_json() + "\n")
    (out / "eval_bins.csv").write_text(report.to_csv(variant.name, variant.n))
    print(f"{variant.name} n={variant.n}: {len(dets)} detections, mAP {report.mAP:.4f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    report = sweep(cfg, args.out, resume=not args.no_resume)
    failed = [c for c in report.cells.values() if c.status != "ok"]
    print(f"{len(report.cells)} cells, {len(failed)} failed; reports in {args.out}")
    return EXIT_OK


def cmd_latency(args) -> int:
    try:
        ns = [int(x) for x in args.slices.split(",") if x.strip()]
    except ValueError as exc:
        raise InvalidInputError(f"--slices must be a comma-separated list of integers: {exc}") from exc
    model = LatencyModel(args.scan_period_ms, args.full_infer_ms, args.overhead_ms)
    rep = latency_report(model, ns, args.with_state)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(rep.to_json() + "\n" if out.suffix == ".json" else rep.to_csv())
    print(f"wrote {len(rep.rows)} rows to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="streamdet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate scenes and simulated scans")
    g.add_argument("--config", help="experiment config JSON (scene, lidar, n_scenes)")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, required=True)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="detect and evaluate one scan")
    r.add_argument("--scan", required=True, help="range-image .json header or float32 .bin point file")
    r.add_argument("--truth", required=True, help="scene JSON with ground-truth boxes")
    r.add_argument("--variant", required=True, choices=VARIANTS)
    r.add_argument("--slices", type=int, required=True)
    r.add_argument("--nms-window", type=int, default=None)
    r.add_argument("--iou", type=float, default=None, help="NMS IoU threshold")
    r.add_argument("--config", help="experiment config JSON for detector settings")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="full factorial over variants, slice counts and seeds")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--no-resume", action="store_true", help="recompute cells already on disk")
    s.set_defaults(func=cmd_sweep)

    lat = sub.add_parser("latency", help="analytic latency / peak-FLOPS table")
    lat.add_argument("--scan-period-ms", type=float, default=100.0)
    lat.add_argument("--full-infer-ms", type=float, default=16.0)
    lat.add_argument("--overhead-ms", type=float, default=2.5)
    lat.add_argument("--slices", default="1,2,4,8,16,32,64,128")
    lat.add_argument("--with-state", action="store_true", help="add the recurrent-state FLOPS share")
    lat.add_argument("--out", required=True, help="CSV, or JSON when the name ends in .json")
    lat.set_defaults(func=cmd_latency)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ContractViolation as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (InvalidInputError, PlacementError, UndefinedMetricError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
