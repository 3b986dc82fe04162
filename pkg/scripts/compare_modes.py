#!/usr/bin/env python3
"""
Radar-centric vs. baseline comparison over synthetic scenarios.

For every seed, generate a scenario, run the pipeline once per mode
(``radar-centric`` and the ray-casting ``hsbof-rs`` baseline) on the identical
scan stream, score both against the ground truth, and give a per-seed verdict.

Warn mode by default: the script exits 0 and prints ``[WARN]`` when the
radar-centric mode fails to beat the baseline. With ``--enforce`` such a seed
exits 1. ``--markdown`` prints a GitHub-flavoured report instead of console
text.
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

_RDOGM_SRC = Path(__file__).parent.parent / "rdogm" / "src"
if _RDOGM_SRC.exists() and str(_RDOGM_SRC) not in sys.path:
    sys.path.insert(0, str(_RDOGM_SRC))

from rdogm.config import load_config  # noqa: E402
from rdogm.errors import DogmError  # noqa: E402
from rdogm.evaluation import align_frames, cluster_dynamic_cells, evaluate  # noqa: E402
from rdogm.fusion import DogmPipeline, Mode  # noqa: E402
from rdogm.scenario import ScenarioParams, generate_scenario  # noqa: E402

RADAR_CENTRIC = Mode.RADAR_CENTRIC.value
BASELINE = Mode.HSBOF_RS.value
MODES = (RADAR_CENTRIC, BASELINE)

# --- verdicts -----------------------------------------------------------------
RC_BETTER = "RC_BETTER"
TIE = "TIE"
BASELINE_BETTER = "BASELINE_BETTER"
MIXED = "MIXED"
FAILING = (BASELINE_BETTER, MIXED, TIE)

_VERDICT_ICON = {RC_BETTER: "✅", TIE: "➖", MIXED: "⚠️", BASELINE_BETTER: "⛔"}

# (report key, column label)
COLUMNS = (
    ("recall", "Recall"),
    ("precision", "Precision"),
    ("dx", "Δx (m)"),
    ("dv", "Δv (m/s)"),
    ("longest_undetected_run", "Longest miss"),
    ("np", "N.P."),
)


def run_mode(scans, truth, config, mode, warmup=0):
    """Run one mode over a scan stream and return its metrics report.

    The first ``warmup`` frames are run but not scored; the particle counts
    cover every frame.
    """
    pipeline_config = replace(config.pipeline, mode=Mode(mode))
    pipeline = DogmPipeline(pipeline_config)
    detections = []
    counts = []
    for scan in scans:
        report = pipeline.process(scan)
        objects = cluster_dynamic_cells(pipeline.grid, pipeline.particles, config.eval)
        detections.append((scan.t, objects))
        counts.append(report.particle_count)
    frames = align_frames(detections, truth)[warmup:]
    result = evaluate(frames, config.eval, counts)
    result["np"] = result["particles"]["mean"]
    return result


def verdict(rc, baseline):
    """
    Compare two reports on recall and on the longest run of undetected frames.

    The radar-centric mode wins a seed when it is no worse on both and strictly
    better on at least one.
    """
    recall = (rc["recall"] > baseline["recall"]) - (rc["recall"] < baseline["recall"])
    run = (rc["longest_undetected_run"] < baseline["longest_undetected_run"]) - (
        rc["longest_undetected_run"] > baseline["longest_undetected_run"]
    )
    if recall == 0 and run == 0:
        return TIE
    if recall >= 0 and run >= 0:
        return RC_BETTER
    if recall <= 0 and run <= 0:
        return BASELINE_BETTER
    return MIXED


def compare_seed(seed, scenario, config, sensors=None, duration=None, warmup=0):
    params = ScenarioParams(kind=scenario, seed=seed, duration=duration)
    chosen = sensors or config.pipeline.sensors
    scans, truth = generate_scenario(params, chosen)
    seed_config = replace(config, pipeline=replace(config.pipeline, sensors=tuple(chosen), seed=seed))
    reports = {mode: run_mode(scans, truth, seed_config, mode, warmup) for mode in MODES}
    return {
        "seed": seed,
        "scenario": scenario,
        "frames": len(scans),
        "reports": reports,
        "verdict": verdict(reports[RADAR_CENTRIC], reports[BASELINE]),
    }


def _fmt(value):
    if value is None:
        return "n/a"
    if isinstance(value, int):
        return str(value)
    return f"{value:.3f}"


def print_report(result):
    print(
        f"  seed {result['seed']} ({result['scenario']}, {result['frames']} scans): {result['verdict']}"
    )
    for mode in MODES:
        report = result["reports"][mode]
        cells = " ".join(f"{label}={_fmt(report[key])}" for key, label in COLUMNS)
        print(f"      - {mode:<13} {cells}")


def to_markdown(results):
    """Render results as a GitHub-flavoured Markdown report (for a PR comment)."""
    out = [
        "## 📡 Radar-centric vs. baseline",
        "",
        "Each seed runs both modes on the same synthetic scan stream. The radar-centric "
        "mode wins a seed when its recall is no lower and its longest run of undetected "
        "frames is no longer, with at least one strictly better.",
        "",
        "| Seed | Mode | " + " | ".join(label for _, label in COLUMNS) + " | Verdict |",
        "|---|---|" + "|".join(":--:" for _ in COLUMNS) + "|---|",
    ]
    for r in results:
        for mode in MODES:
            report = r["reports"][mode]
            verdict_cell = f"{_VERDICT_ICON.get(r['verdict'], '')} {r['verdict']}" if mode == RADAR_CENTRIC else ""
            out.append(
                f"| {r['seed']} | `{mode}` | "
                + " | ".join(_fmt(report[key]) for key, _ in COLUMNS)
                + f" | {verdict_cell} |"
            )

    failing = [r for r in results if r["verdict"] in FAILING]
    out.append("")
    if failing:
        seeds = ", ".join(str(r["seed"]) for r in failing)
        out.append(f"⚠️ **{len(failing)} seed(s)** where the radar-centric mode does not beat the baseline: {seeds}.")
    else:
        out.append("**The radar-centric mode beats the baseline on every seed.**")
    return "\n".join(out)


def build_parser():
    parser = argparse.ArgumentParser(description="Compare radar-centric and baseline modes.")
    parser.add_argument("--scenario", default="crossing-vehicle")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--duration", type=float, default=None)
    parser.add_argument("--warmup", type=int, default=0, help="Frames run but left out of the scores.")
    parser.add_argument("--sensors", default="front", help="Comma-separated sensor ids, or 'all'.")
    parser.add_argument("--config", type=Path, default=None)
    parser.add_argument("--markdown", action="store_true")
    parser.add_argument("--enforce", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.sensors == "all":
            sensors = config.pipeline.sensors
        else:
            sensors = tuple(config.pipeline.sensor(s.strip()) for s in args.sensors.split(",") if s.strip())
        results = [compare_seed(seed, args.scenario, config, sensors, args.duration, args.warmup) for seed in args.seeds]
    except DogmError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return 1

    if args.markdown:
        # UTF-8 to stdout regardless of the host console codepage.
        sys.stdout.buffer.write((to_markdown(results) + "\n").encode("utf-8"))
        sys.stdout.flush()
    else:
        print(f"Mode comparison on {args.scenario}:")
        for result in results:
            print_report(result)

    failing = [r for r in results if r["verdict"] in FAILING]
    if failing:
        msg = f"radar-centric does not beat the baseline on {len(failing)} of {len(results)} seed(s)."
        if args.enforce:
            print(f"\n[ERROR] {msg}", file=sys.stderr)
            return 1
        if not args.markdown:
            print(f"\n[WARN] {msg} (advisory - warn mode)")
    elif not args.markdown:
        print("\n[OK] radar-centric beats the baseline on every seed.")
    return 0


if __name__ == "__main__":
    sys.exit(main())
