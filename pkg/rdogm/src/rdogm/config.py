"""TOML run configuration with full defaulting.

Every parameter of the pipeline and of the evaluation is a named key; a
missing file section or key keeps its default. Unknown sections or keys,
values of the wrong type and incomplete ``[[sensors]]`` tables raise
:class:`~rdogm.errors.ConfigError` naming the key.

The default file location comes from ``--config`` or the ``RDOGM_CONFIG``
environment variable.
"""

from __future__ import annotations

import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .correction import CorrectionParams
from .errors import ConfigError, DogmError
from .evaluation import EvalParams
from .fusion import Mode, PipelineConfig
from .ism import IsmParams
from .measurement import StateParams
from .model import GridSpec, Pose, SensorConfig
from .particles import ParticleParams

__all__ = [
    "ENV_VAR",
    "Key",
    "SCHEMA",
    "SENSOR_KEYS",
    "RunConfig",
    "default_config",
    "config_from_dict",
    "load_config",
    "resolve_config_path",
]

ENV_VAR = "RDOGM_CONFIG"


@dataclass(frozen=True)
class Key:
    """One configuration key and the dataclass field it feeds.

    ``scale`` converts the file value to the internal unit (degrees to
    radians for angles).
    """

    name: str
    kind: type
    target: str
    help: str
    scale: float = 1.0
    optional: bool = False


SCHEMA: dict[str, tuple[Key, ...]] = {
    "pipeline": (
        Key("mode", str, "mode", "`radar-centric` or the `hsbof-rs` baseline"),
        Key("eq16_variant", str, "eq16_variant", "particle weight update: `convex` or `product`"),
        Key("fd_normalized", bool, "fd_normalized", "peak-normalise the distance kernel (f_d(0) = 1)"),
        Key("seed", int, "seed", "seed of the particle filter random stream"),
    ),
    "grid": (
        Key("cell_size", float, "cell_size", "cell edge length (m)"),
        Key("width_cells", int, "width_cells", "cells along x"),
        Key("height_cells", int, "height_cells", "cells along y"),
    ),
    "ism": (
        Key("sector_width_deg", float, "sector_width", "free-space sector width (deg)", math.pi / 180.0),
        Key("occ_radius", float, "occ_radius", "occupied footprint radius around a detection (m)"),
        Key("angular_sigma_deg", float, "angular_sigma", "reserved angular spread (deg)", math.pi / 180.0),
    ),
    "state": (
        Key("sigma_d", float, "sigma_d", "distance attenuation sigma (m)"),
        Key("v_th", float, "v_th", "range-rate midpoint of the motion logistic (m/s)"),
        Key("k_v", float, "k_v", "slope of the motion logistic (m/s)"),
    ),
    "correction": (
        Key("s1", float, "s1", "static-to-dynamic correction gain"),
        Key("d1", float, "d1", "dynamic-to-static correction gain"),
        Key("t_static", int, "t_static", "static cycles that must be exceeded before a flip"),
        Key("t_free", int, "t_free", "confident-free cycles that must be exceeded before a flip"),
        Key("p_free_conf", float, "p_free_conf", "free probability counted as confident"),
    ),
    "particles": (
        Key("nu_birth", int, "nu_birth", "particles born per new dynamic cell"),
        Key("n_max", int, "n_max", "particle cap after resampling"),
        Key("epsilon", float, "epsilon", "per-cycle weight decay away from detections"),
        Key("sigma_r", float, "sigma_r", "range-rate agreement kernel width (m/s)"),
        Key("v_max", float, "v_max", "maximum sampled speed (m/s)"),
        Key("t_tangential_max", float, "t_tangential_max", "maximum tangential speed (m/s), defaults to v_max", optional=True),
        Key("particles_per_mass", float, "particles_per_mass", "particles per unit of dynamic mass"),
    ),
    "eval": (
        Key("eps", float, "eps", "DBSCAN neighbourhood radius (m)"),
        Key("min_pts", int, "min_pts", "DBSCAN minimum cluster support"),
        Key("match_thresholds", list, "match_thresholds", "AP centre-distance thresholds (m)"),
        Key("single_threshold", float, "single_threshold", "threshold for recall / precision / dx / dv (m)"),
        Key("age_norm", float, "age_norm", "particle age at which confidence saturates (cycles)"),
    ),
}

SENSOR_KEYS: tuple[Key, ...] = (
    Key("sensor_id", str, "sensor_id", "identifier used in scan files"),
    Key("x", float, "x", "mount x relative to the ego origin (m)"),
    Key("y", float, "y", "mount y relative to the ego origin (m)"),
    Key("yaw_deg", float, "yaw", "mount yaw (deg)", math.pi / 180.0),
    Key("max_range", float, "max_range", "maximum range (m)"),
    Key("azimuth_span_deg", float, "azimuth_span", "half opening angle (deg)", math.pi / 180.0),
)


@dataclass(frozen=True)
class RunConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    eval: EvalParams = field(default_factory=EvalParams)
    source: str | None = None

    def snapshot(self) -> dict[str, Any]:
        """The effective configuration in file layout (angles in degrees)."""
        out: dict[str, Any] = {}
        for section, keys in SCHEMA.items():
            target = _section_object(self, section)
            values = {}
            for key in keys:
                value = getattr(target, key.target)
                if value is None:
                    continue
                if isinstance(value, Mode):
                    value = value.value
                elif isinstance(value, tuple):
                    value = list(value)
                elif key.scale != 1.0:
                    value = value / key.scale
                values[key.name] = value
            out[section] = values
        out["sensors"] = [
            {
                "sensor_id": s.sensor_id,
                "x": s.mount_pose.x,
                "y": s.mount_pose.y,
                "yaw_deg": math.degrees(s.mount_pose.yaw),
                "max_range": s.max_range,
                "azimuth_span_deg": math.degrees(s.azimuth_span),
            }
            for s in self.pipeline.sensors
        ]
        return out


def _section_object(config: RunConfig, section: str):
    p = config.pipeline
    return {
        "pipeline": p,
        "grid": p.grid,
        "ism": p.ism,
        "state": p.state,
        "correction": p.correction,
        "particles": p.particles,
        "eval": config.eval,
    }[section]


def default_config() -> RunConfig:
    return RunConfig()


def _coerce(value: Any, key: Key, where: str) -> Any:
    if key.kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(where, f"expected true/false, got {value!r}")
        return value
    if key.kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(where, f"expected an integer, got {value!r}")
        return value
    if key.kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(where, f"expected a number, got {value!r}")
        return float(value) * key.scale
    if key.kind is str:
        if not isinstance(value, str):
            raise ConfigError(where, f"expected a string, got {value!r}")
        return value
    if key.kind is list:
        if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            raise ConfigError(where, f"expected a list of numbers, got {value!r}")
        return tuple(float(v) for v in value)
    raise ConfigError(where, f"unsupported key type {key.kind!r}")


def _section_values(data: Mapping[str, Any], section: str) -> dict[str, Any]:
    table = data.get(section, {})
    if not isinstance(table, dict):
        raise ConfigError(section, "expected a table")
    known = {k.name: k for k in SCHEMA[section]}
    values = {}
    for name, value in table.items():
        if name not in known:
            raise ConfigError(f"{section}.{name}", "unknown key")
        key = known[name]
        values[key.target] = _coerce(value, key, f"{section}.{name}")
    return values


def _sensors(data: Mapping[str, Any]) -> tuple[SensorConfig, ...] | None:
    if "sensors" not in data:
        return None
    tables = data["sensors"]
    if not isinstance(tables, list) or not tables:
        raise ConfigError("sensors", "expected a non-empty array of tables ([[sensors]])")
    known = {k.name: k for k in SENSOR_KEYS}
    sensors = []
    for index, table in enumerate(tables):
        where = f"sensors[{index}]"
        if not isinstance(table, dict):
            raise ConfigError(where, "expected a table")
        for name in table:
            if name not in known:
                raise ConfigError(f"{where}.{name}", "unknown key")
        values = {}
        for key in SENSOR_KEYS:
            if key.name not in table:
                raise ConfigError(f"{where}.{key.name}", "missing required key")
            values[key.target] = _coerce(table[key.name], key, f"{where}.{key.name}")
        try:
            sensors.append(
                SensorConfig(
                    values["sensor_id"],
                    Pose(values["x"], values["y"], values["yaw"]),
                    values["max_range"],
                    values["azimuth_span"],
                )
            )
        except DogmError as exc:
            raise ConfigError(where, str(exc)) from None
    return tuple(sensors)


def config_from_dict(data: Mapping[str, Any], source: str | None = None) -> RunConfig:
    """Build a :class:`RunConfig` from parsed TOML, defaulting every missing key."""
    allowed = set(SCHEMA) | {"sensors"}
    for section in data:
        if section not in allowed:
            raise ConfigError(section, "unknown section")

    base = PipelineConfig()
    built = {}
    for section, cls_default in (
        ("grid", base.grid),
        ("ism", base.ism),
        ("state", base.state),
        ("correction", base.correction),
        ("particles", base.particles),
        ("eval", EvalParams()),
    ):
        try:
            built[section] = replace(cls_default, **_section_values(data, section))
        except DogmError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(section, str(exc)) from None

    pipeline_values = _section_values(data, "pipeline")
    sensors = _sensors(data)
    try:
        if "mode" in pipeline_values:
            pipeline_values["mode"] = Mode(pipeline_values["mode"])
        pipeline = PipelineConfig(
            grid=built["grid"],
            ism=built["ism"],
            state=built["state"],
            correction=built["correction"],
            particles=built["particles"],
            **({"sensors": sensors} if sensors is not None else {}),
            **pipeline_values,
        )
    except ValueError as exc:
        raise ConfigError("pipeline", str(exc)) from None
    return RunConfig(pipeline=pipeline, eval=built["eval"], source=source)


def resolve_config_path(path: str | Path | None = None) -> Path | None:
    """``path`` if given, else ``$RDOGM_CONFIG`` if set, else ``None``."""
    if path:
        return Path(path)
    env = os.environ.get(ENV_VAR)
    return Path(env) if env else None


def load_config(path: str | Path | None = None) -> RunConfig:
    """Load the configuration file (or the defaults when there is none)."""
    resolved = resolve_config_path(path)
    if resolved is None:
        return default_config()
    try:
        with resolved.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(str(resolved), f"cannot read configuration ({exc.strerror})") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(resolved), f"invalid TOML ({exc})") from None
    return config_from_dict(data, source=str(resolved))
