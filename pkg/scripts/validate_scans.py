#!/usr/bin/env python3
"""
Validate radar scan files (JSON Lines) before feeding them to the pipeline.

For each file this checks, collecting every problem rather than stopping at
the first:
- lines that are not valid JSON objects
- records with missing, mistyped or non-finite fields
- timestamps that do not strictly increase
- sensor ids that the configuration does not know

Usage:
    python scripts/validate_scans.py runs/cv/scans.jsonl [more.jsonl ...] [--config run.toml]
"""

import argparse
import json
import sys
from pathlib import Path

# The engine lives in rdogm/ as a self-contained package; import it from its
# source tree so the script works without an install step.
_RDOGM_SRC = Path(__file__).parent.parent / "rdogm" / "src"
if _RDOGM_SRC.exists() and str(_RDOGM_SRC) not in sys.path:
    sys.path.insert(0, str(_RDOGM_SRC))

from rdogm.config import load_config  # noqa: E402
from rdogm.errors import DogmError  # noqa: E402
from rdogm.formats import scan_from_record  # noqa: E402

# Stop listing problems for a file after this many; the count is still reported.
MAX_ERRORS = 50


def validate_scan_file(path: Path, sensor_ids=None) -> tuple[bool, list[str], int]:
    """
    Validate one scan file.

    Returns:
        (is_valid, list_of_errors, number_of_valid_scans)
    """
    errors = []
    valid = 0
    previous_t = None
    unknown_sensors = set()

    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as e:
        return False, [f"Cannot read file: {e}"], 0

    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            errors.append(f"line {lineno}: invalid JSON ({e.msg})")
            continue
        if not isinstance(record, dict):
            errors.append(f"line {lineno}: expected a JSON object")
            continue
        try:
            scan = scan_from_record(record)
        except KeyError as e:
            errors.append(f"line {lineno}: missing field {e.args[0]!r}")
            continue
        except (TypeError, ValueError, DogmError) as e:
            errors.append(f"line {lineno}: {e}")
            continue

        if previous_t is not None and not scan.t > previous_t:
            errors.append(f"line {lineno}: timestamp {scan.t!r} does not follow {previous_t!r}")
        previous_t = scan.t

        if sensor_ids is not None and scan.sensor_id not in sensor_ids:
            if scan.sensor_id not in unknown_sensors:
                errors.append(f"line {lineno}: sensor {scan.sensor_id!r} is not configured")
            unknown_sensors.add(scan.sensor_id)
        valid += 1

    if valid == 0 and not errors:
        errors.append("No scans found")

    if len(errors) > MAX_ERRORS:
        hidden = len(errors) - MAX_ERRORS
        errors = errors[:MAX_ERRORS] + [f"... and {hidden} more"]
    return len(errors) == 0, errors, valid


def build_parser():
    parser = argparse.ArgumentParser(description="Validate radar scan files (JSON Lines).")
    parser.add_argument("files", nargs="+", type=Path, help="Scan files to validate.")
    parser.add_argument(
        "--config",
        type=Path,
        default=None,
        help="Configuration whose [[sensors]] define the allowed sensor ids "
        "(defaults to $RDOGM_CONFIG, else the built-in sensor suite).",
    )
    parser.add_argument("--any-sensor", action="store_true", help="Do not check sensor ids.")
    return parser


def main(argv=None):
    """Validate every file given on the command line; exit 1 if any is invalid."""
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
    except DogmError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return 1
    sensor_ids = None if args.any_sensor else {s.sensor_id for s in config.pipeline.sensors}

    all_valid = True
    for scan_file in args.files:
        if not scan_file.exists():
            print(f"[ERROR] File not found: {scan_file}", file=sys.stderr)
            all_valid = False
            continue

        print(f"Validating {scan_file}...")
        is_valid, errors, count = validate_scan_file(scan_file, sensor_ids)
        if is_valid:
            print(f"  [OK] {scan_file.name}: {count} scans")
        else:
            print(f"  [ERROR] {scan_file.name} has errors:")
            for error in errors:
                print(f"    • {error}")
            all_valid = False

    return 0 if all_valid else 1


if __name__ == "__main__":
    sys.exit(main())
