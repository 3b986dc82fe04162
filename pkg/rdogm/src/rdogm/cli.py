"""Command-line interface for rdogm.

Usage::

    rdogm synth --scenario crossing-vehicle --seed 7 --out runs/cv
    rdogm run runs/cv/scans.jsonl --mode hsbof-rs --export-every 10 --out runs/cv/hsbof
    rdogm eval runs/cv/hsbof/detections.jsonl runs/cv/gt.jsonl --out runs/cv/hsbof/metrics.json
    rdogm export-frame runs/cv/scans.jsonl --frame 30 --format raw --out frame30.raw

Exit codes: 0 success, 1 usage error, 2 data or validation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Iterable

from . import __version__
from .config import RunConfig, load_config
from .errors import DogmError, ValidationError
from .evaluation import align_frames, cluster_dynamic_cells, evaluate
from .formats import (
    DetectionRecord,
    export_grid,
    iter_scans,
    load_detections,
    load_ground_truth,
    write_detections,
    write_ground_truth,
    write_scans,
)
from .fusion import DogmPipeline, Mode
from .manifest import RunManifest
from .model import Scan
from .scenario import SCENARIO_KINDS, ScenarioParams, generate_scenario

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with status 1."""

    def error(self, message: str):  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"[ERROR] {self.prog}: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="rdogm",
        description="Radar-centric dynamic occupancy grid mapping: simulate, run, evaluate.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable debug logging.")
    parser.add_argument(
        "-c",
        "--config",
        type=Path,
        default=None,
        help="TOML configuration file (defaults to $RDOGM_CONFIG, else built-in defaults).",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    synth = sub.add_parser("synth", help="Generate a synthetic scan stream and ground truth.")
    synth.add_argument("--scenario", choices=[k for k in SCENARIO_KINDS if k != "custom"], default="crossing-vehicle")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--duration", type=float, default=None, help="Seconds (default depends on the scenario).")
    synth.add_argument("--frame-rate", type=float, default=10.0, help="Frames per second.")
    synth.add_argument("--object-speed", type=float, default=None, help="m/s (default depends on the scenario).")
    synth.add_argument("--ego-speed", type=float, default=0.0, help="m/s along +x.")
    synth.add_argument("--clutter-rate", type=float, default=2.0, help="Mean clutter detections per scan.")
    synth.add_argument("--vr-noise", type=float, default=0.1, help="Range-rate noise sigma (m/s).")
    synth.add_argument(
        "--sensors",
        default="front",
        help="Comma-separated sensor ids from the configuration, or 'all' (default: front).",
    )
    synth.add_argument("--out", type=Path, required=True, help="Output directory.")

    run = sub.add_parser("run", help="Run the pipeline over a scan file.")
    run.add_argument("scans", type=Path)
    run.add_argument("--mode", choices=[m.value for m in Mode], default=None, help="Override [pipeline] mode.")
    run.add_argument("--seed", type=int, default=None, help="Override [pipeline] seed.")
    run.add_argument("--export-every", type=int, default=0, metavar="N", help="Write a grid snapshot every N frames.")
    run.add_argument("--export-format", choices=["csv", "raw"], default="raw")
    run.add_argument("--out", type=Path, required=True, help="Output directory.")

    ev = sub.add_parser("eval", help="Score a detections file against ground truth.")
    ev.add_argument("detections", type=Path)
    ev.add_argument("ground_truth", type=Path)
    ev.add_argument("--out", type=Path, default=None, help="Write the metrics report (JSON) here.")

    export = sub.add_parser("export-frame", help="Run up to one frame and export its grid.")
    export.add_argument("scans", type=Path)
    export.add_argument("--frame", type=int, required=True, help="1-based pipeline cycle to export.")
    export.add_argument("--mode", choices=[m.value for m in Mode], default=None)
    export.add_argument("--format", dest="fmt", choices=["csv", "raw"], default="csv")
    export.add_argument("--out", type=Path, required=True, help="Output file.")
    return parser


# -- helpers ---------------------------------------------------------------------


def _pipeline_config(config: RunConfig, mode: str | None, seed: int | None = None) -> RunConfig:
    pipeline = config.pipeline
    if mode is not None:
        pipeline = replace(pipeline, mode=Mode(mode))
    if seed is not None:
        pipeline = replace(pipeline, seed=seed)
    return replace(config, pipeline=pipeline)


def _select_sensors(config: RunConfig, spec: str):
    sensors = config.pipeline.sensors
    if spec == "all":
        return sensors
    wanted = [s.strip() for s in spec.split(",") if s.strip()]
    chosen = []
    for sensor_id in wanted:
        chosen.append(config.pipeline.sensor(sensor_id))
    if not chosen:
        raise ValidationError("--sensors selected no sensor")
    return tuple(chosen)


def _run_pipeline(config: RunConfig, scans: Iterable[Scan], stop_after: int | None = None):
    pipeline = DogmPipeline(config.pipeline)
    for scan in scans:
        report = pipeline.process(scan)
        objects = cluster_dynamic_cells(pipeline.grid, pipeline.particles, config.eval)
        yield pipeline, report, DetectionRecord(scan.t, scan.sensor_id, report.particle_count, tuple(objects))
        if stop_after is not None and report.cycle >= stop_after:
            return


# -- commands --------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace, config: RunConfig) -> int:
    params = ScenarioParams(
        kind=args.scenario,
        object_speed=args.object_speed,
        ego_speed=args.ego_speed,
        frame_rate=args.frame_rate,
        duration=args.duration,
        clutter_rate=args.clutter_rate,
        vr_noise=args.vr_noise,
        seed=args.seed,
    )
    sensors = _select_sensors(config, args.sensors)
    scans, truth = generate_scenario(params, sensors)

    out: Path = args.out
    scans_path = out / "scans.jsonl"
    gt_path = out / "gt.jsonl"
    write_scans(scans, scans_path)
    write_ground_truth(truth, gt_path)

    manifest = RunManifest(command="synth", argv=list(args.argv), seed=args.seed, config=config.snapshot())
    manifest.add_output(scans_path)
    manifest.add_output(gt_path)
    manifest.write(out / "manifest.json")
    print(f"[OK] {params.kind}: {params.n_frames} frames x {len(sensors)} sensors -> {scans_path}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace, config: RunConfig) -> int:
    config = _pipeline_config(config, args.mode, args.seed)
    if args.export_every < 0:
        raise ValidationError("--export-every must be >= 0")
    out: Path = args.out
    grids = out / "grids"
    records: list[DetectionRecord] = []
    frames: list[dict] = []
    snapshots = []
    for pipeline, report, record in _run_pipeline(config, iter_scans(args.scans)):
        records.append(record)
        frames.append(report.to_dict())
        if args.export_every and report.cycle % args.export_every == 0:
            snapshots.append(
                export_grid(pipeline.grid, grids / f"frame_{report.cycle:05d}.{args.export_format}", args.export_format)
            )

    detections_path = out / "detections.jsonl"
    write_detections(records, detections_path)
    manifest = RunManifest(
        command="run",
        argv=list(args.argv),
        seed=config.pipeline.seed,
        config=config.snapshot(),
        frames=frames,
    )
    manifest.add_input(args.scans)
    manifest.add_output(detections_path)
    for path in snapshots:
        manifest.add_output(path)
    manifest.write(out / "manifest.json")
    peak = max((f["particle_count"] for f in frames), default=0)
    print(
        f"[OK] {config.pipeline.mode.value}: {len(records)} frames, "
        f"{len(snapshots)} grid snapshots, peak {peak} particles -> {detections_path}"
    )
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, config: RunConfig) -> int:
    records = load_detections(args.detections)
    truth = load_ground_truth(args.ground_truth)
    frames = align_frames(((r.t, r.objects) for r in records), truth)
    report = evaluate(frames, config.eval, [r.particle_count for r in records])
    report["np"] = report["particles"]["mean"]
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text, encoding="utf-8")
        manifest = RunManifest(command="eval", argv=list(args.argv), config=config.snapshot(), metrics=report)
        manifest.add_input(args.detections)
        manifest.add_input(args.ground_truth)
        manifest.add_output(args.out)
        manifest.write(args.out.with_name(f"{args.out.stem}.manifest.json"))

    def fmt(value):
        return "n/a" if value is None else f"{value:.3f}"

    print(
        f"[OK] recall={fmt(report['recall'])} precision={fmt(report['precision'])} "
        f"dx={fmt(report['dx'])} dv={fmt(report['dv'])} mAP={fmt(report['map'])} "
        f"N.P.={report['np']:.0f}"
    )
    return EXIT_OK


def cmd_export_frame(args: argparse.Namespace, config: RunConfig) -> int:
    if args.frame < 1:
        raise ValidationError("--frame must be >= 1")
    config = _pipeline_config(config, args.mode)
    last = None
    for pipeline, report, _ in _run_pipeline(config, iter_scans(args.scans), stop_after=args.frame):
        last = (pipeline, report)
    if last is None or last[1].cycle < args.frame:
        raise ValidationError(f"scan file has fewer than {args.frame} frames")
    path = export_grid(last[0].grid, args.out, args.fmt)
    print(f"[OK] frame {args.frame} (t={last[1].t:.3f}) -> {path}")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "run": cmd_run,
    "eval": cmd_eval,
    "export-frame": cmd_export_frame,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config)
        return COMMANDS[args.command](args, config)
    except DogmError as exc:
        print(f"[ERROR] {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"[ERROR] {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
