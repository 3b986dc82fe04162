#!/usr/bin/env python3
"""
Generate the configuration reference page of the documentation site.

This script reads the configuration schema and the parameter defaults from
the rdogm package and writes ``docs/configuration.md``: one table per TOML
section plus the default sensor suite. Run it after changing a parameter so
the published reference never drifts from the code.

``--check`` only compares: it exits 1 when the page on disk is out of date.
"""

import argparse
import sys
from pathlib import Path

# rdogm is a self-contained package that lives in this repository (see the
# rdogm/ folder). Import it directly from its source tree so the docs
# pipeline works without a separate install step.
_RDOGM_SRC = Path(__file__).parent.parent / "rdogm" / "src"
if _RDOGM_SRC.exists() and str(_RDOGM_SRC) not in sys.path:
    sys.path.insert(0, str(_RDOGM_SRC))

from rdogm.config import ENV_VAR, SCHEMA, SENSOR_KEYS, default_config  # noqa: E402

SECTION_TITLES = {
    "pipeline": "Pipeline",
    "grid": "Grid",
    "ism": "Inverse sensor model",
    "state": "Cell-state probabilities",
    "correction": "Measurement correction and false-static detection",
    "particles": "Particle filter",
    "eval": "Evaluation",
}

HEADER = """\
# Configuration reference

<!-- generated by scripts/generate_docs.py; do not edit by hand -->

`rdogm` reads one TOML file, given with `--config` or through the
`{env}` environment variable. Every key is optional: a missing section or
key keeps the default listed here. Unknown sections or keys, values of the
wrong type and incomplete `[[sensors]]` tables are rejected with an error
naming the key (`sensors[1].max_range`).

Angles are given in degrees in the file and used in radians internally.
"""


def format_value(value):
    """Render a default the way it would be written in TOML."""
    if value is None:
        return "*unset*"
    if isinstance(value, bool):
        return f"`{str(value).lower()}`"
    if isinstance(value, str):
        return f'`"{value}"`'
    if isinstance(value, float):
        return f"`{value:g}`"
    if isinstance(value, list):
        return "`[" + ", ".join(format_value(v).strip("`") for v in value) + "]`"
    return f"`{value}`"


def section_table(section, defaults):
    lines = [
        f"## `[{section}]` {SECTION_TITLES.get(section, section)}",
        "",
        "| Key | Default | Meaning |",
        "|---|---|---|",
    ]
    for key in SCHEMA[section]:
        lines.append(f"| `{key.name}` | {format_value(defaults.get(key.name))} | {key.help} |")
    return lines


def sensors_table(sensors):
    lines = [
        "## `[[sensors]]` Radar suite",
        "",
        "An array of tables, one per radar. Every key is required in each table; "
        "omitting `[[sensors]]` altogether selects the default suite below.",
        "",
        "| Key | Meaning |",
        "|---|---|",
    ]
    for key in SENSOR_KEYS:
        lines.append(f"| `{key.name}` | {key.help} |")
    lines += [
        "",
        "Default suite:",
        "",
        "| " + " | ".join(f"`{k.name}`" for k in SENSOR_KEYS) + " |",
        "|" + "---|" * len(SENSOR_KEYS),
    ]
    for sensor in sensors:
        lines.append("| " + " | ".join(format_value(sensor[k.name]) for k in SENSOR_KEYS) + " |")
    return lines


def render_configuration_page():
    snapshot = default_config().snapshot()
    lines = HEADER.format(env=ENV_VAR).splitlines()
    for section in SCHEMA:
        lines.append("")
        lines.extend(section_table(section, snapshot[section]))
    lines.append("")
    lines.extend(sensors_table(snapshot["sensors"]))
    return "\n".join(lines).rstrip() + "\n"


def main(argv=None):
    parser = argparse.ArgumentParser(description="Generate docs/configuration.md.")
    parser.add_argument("--check", action="store_true", help="Exit 1 if the page is out of date.")
    args = parser.parse_args(argv)

    repo_root = Path(__file__).parent.parent
    page_file = repo_root / "docs" / "configuration.md"
    page = render_configuration_page()

    if args.check:
        current = page_file.read_text(encoding="utf-8") if page_file.exists() else ""
        if current != page:
            print(f"[ERROR] {page_file} is out of date; run scripts/generate_docs.py", file=sys.stderr)
            return 1
        print(f"[OK] {page_file} is up to date")
        return 0

    page_file.parent.mkdir(parents=True, exist_ok=True)
    page_file.write_text(page, encoding="utf-8")
    print(f"[OK] Generated configuration reference: {page_file}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
