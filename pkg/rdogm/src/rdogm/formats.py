"""Line-delimited JSON streams and grid snapshot files.

Scan, ground-truth and detection files hold one JSON record per line. Floats
are written with ``repr`` precision, so a write / load cycle is bit-exact.
Grid snapshots are CSV (one row per cell) or a small little-endian binary
format (``raw``).
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator, Literal

import numpy as np

from .errors import DogmError, ScanFormatError, TimestampError, ValidationError
from .evaluation import DetectedObject, GtFrame, GtObject
from .model import STATE_NAMES, GridMap, Pose, RadarDetection, Scan

__all__ = [
    "RAW_MAGIC",
    "RAW_VERSION",
    "RAW_HEADER",
    "DetectionRecord",
    "RawGrid",
    "scan_to_record",
    "scan_from_record",
    "write_scans",
    "iter_scans",
    "load_scans",
    "write_ground_truth",
    "load_ground_truth",
    "write_detections",
    "load_detections",
    "export_grid",
    "load_grid_raw",
]

logger = logging.getLogger(__name__)

GridFormat = Literal["csv", "raw"]

RAW_MAGIC = b"DOGM"
RAW_VERSION = 1
RAW_HEADER = np.dtype(
    [
        ("magic", "S4"),
        ("version", "<u4"),
        ("width", "<u4"),
        ("height", "<u4"),
        ("cell_size", "<f4"),
    ]
)


@dataclass(frozen=True)
class DetectionRecord:
    """The objects one pipeline step produced, tagged with its scan."""

    t: float
    sensor_id: str
    particle_count: int
    objects: tuple[DetectedObject, ...] = ()


@dataclass(frozen=True, eq=False)
class RawGrid:
    width: int
    height: int
    cell_size: float
    cells: np.ndarray


# -- generic JSONL plumbing ------------------------------------------------------


def _dumps(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"), allow_nan=False)


def _write_lines(records: Iterable[dict], path: str | Path) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(_dumps(record) + "\n")
            count += 1
    return count


def _read_records(path: str | Path) -> Iterator[tuple[int, dict]]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ScanFormatError(str(path), lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise ScanFormatError(str(path), lineno, "expected a JSON object")
            yield lineno, record


def _number(record: dict, key: str) -> float:
    value = record[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{key!r} must be a number")
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{key!r} must be finite")
    return value


def _parse(path: str | Path, lineno: int, build, record: dict):
    try:
        return build(record)
    except KeyError as exc:
        raise ScanFormatError(str(path), lineno, f"missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError, DogmError) as exc:
        raise ScanFormatError(str(path), lineno, str(exc)) from None


def _check_monotone(path: str | Path, lineno: int, previous: float | None, t: float) -> None:
    if previous is not None and not t > previous:
        raise TimestampError(
            f"{path}:{lineno}: timestamp {t!r} does not follow {previous!r}", [previous, t]
        )


# -- scans -----------------------------------------------------------------------


def scan_to_record(scan: Scan) -> dict:
    pose = scan.ego_pose
    return {
        "t": scan.t,
        "sensor_id": scan.sensor_id,
        "ego_pose": {"x": pose.x, "y": pose.y, "yaw": pose.yaw},
        "detections": [
            {"x": d.x_map, "y": d.y_map, "vr": d.v_r, "rcs": d.rcs} for d in scan.detections
        ],
    }


def scan_from_record(record: dict) -> Scan:
    """Build a scan from one parsed line; raises ``KeyError`` or ``ValueError`` on bad fields."""
    pose = record["ego_pose"]
    if not isinstance(pose, dict):
        raise ValueError("'ego_pose' must be an object")
    detections = record["detections"]
    if not isinstance(detections, list):
        raise ValueError("'detections' must be a list")
    return Scan(
        t=_number(record, "t"),
        sensor_id=str(record["sensor_id"]),
        ego_pose=Pose(_number(pose, "x"), _number(pose, "y"), _number(pose, "yaw")),
        detections=tuple(
            RadarDetection(_number(d, "x"), _number(d, "y"), _number(d, "vr"), _number(d, "rcs"))
            for d in detections
        ),
    )


def write_scans(scans: Iterable[Scan], path: str | Path) -> int:
    """Write one scan per line; returns the number of scans written."""
    return _write_lines((scan_to_record(s) for s in scans), path)


def iter_scans(path: str | Path) -> Iterator[Scan]:
    """Stream scans from a file, checking that timestamps strictly increase."""
    previous = None
    for lineno, record in _read_records(path):
        scan = _parse(path, lineno, scan_from_record, record)
        _check_monotone(path, lineno, previous, scan.t)
        previous = scan.t
        yield scan


def load_scans(path: str | Path) -> list[Scan]:
    return list(iter_scans(path))


# -- ground truth ------------------------------------------------------------------


def _gt_from_record(record: dict) -> GtFrame:
    t = _number(record, "t")
    objects = record["objects"]
    if not isinstance(objects, list):
        raise ValueError("'objects' must be a list")
    return GtFrame(
        t,
        tuple(
            GtObject(
                t,
                str(o["id"]),
                str(o["class"]),
                (_number(o, "cx"), _number(o, "cy")),
                (_number(o, "vx"), _number(o, "vy")),
            )
            for o in objects
        ),
    )


def write_ground_truth(frames: Iterable[GtFrame], path: str | Path) -> int:
    return _write_lines(
        (
            {
                "t": f.t,
                "objects": [
                    {
                        "id": o.id,
                        "class": o.class_label,
                        "cx": o.center[0],
                        "cy": o.center[1],
                        "vx": o.velocity[0],
                        "vy": o.velocity[1],
                    }
                    for o in f.objects
                ],
            }
            for f in frames
        ),
        path,
    )


def load_ground_truth(path: str | Path) -> list[GtFrame]:
    frames: list[GtFrame] = []
    for lineno, record in _read_records(path):
        frame = _parse(path, lineno, _gt_from_record, record)
        _check_monotone(path, lineno, frames[-1].t if frames else None, frame.t)
        frames.append(frame)
    return frames


# -- detections --------------------------------------------------------------------


def _object_record(o: DetectedObject) -> dict[str, Any]:
    return {
        "cx": o.center[0],
        "cy": o.center[1],
        "vx": o.velocity[0],
        "vy": o.velocity[1],
        "confidence": o.confidence,
        "particles": o.particle_count,
        "mean_age": o.mean_age,
        "mean_weight": o.mean_weight,
    }


def _detections_from_record(record: dict) -> DetectionRecord:
    t = _number(record, "t")
    objects = record["objects"]
    if not isinstance(objects, list):
        raise ValueError("'objects' must be a list")
    return DetectionRecord(
        t=t,
        sensor_id=str(record["sensor_id"]),
        particle_count=int(_number(record, "particle_count")),
        objects=tuple(
            DetectedObject(
                t=t,
                center=(_number(o, "cx"), _number(o, "cy")),
                velocity=(_number(o, "vx"), _number(o, "vy")),
                confidence=_number(o, "confidence"),
                particle_count=int(_number(o, "particles")),
                mean_age=_number(o, "mean_age"),
                mean_weight=_number(o, "mean_weight"),
            )
            for o in objects
        ),
    )


def write_detections(records: Iterable[DetectionRecord], path: str | Path) -> int:
    return _write_lines(
        (
            {
                "t": r.t,
                "sensor_id": r.sensor_id,
                "particle_count": r.particle_count,
                "objects": [_object_record(o) for o in r.objects],
            }
            for r in records
        ),
        path,
    )


def load_detections(path: str | Path) -> list[DetectionRecord]:
    records: list[DetectionRecord] = []
    for lineno, record in _read_records(path):
        rec = _parse(path, lineno, _detections_from_record, record)
        _check_monotone(path, lineno, records[-1].t if records else None, rec.t)
        records.append(rec)
    return records


# -- grid snapshots ----------------------------------------------------------------


def export_grid(grid: GridMap, path: str | Path, fmt: GridFormat = "csv") -> Path:
    """Write a grid snapshot as ``csv`` (one row per cell) or ``raw`` binary.

    ``raw`` is the 20-byte header followed by the four state planes in the
    order unknown, free, static, dynamic; each plane is ``height`` rows of
    ``width`` little-endian float32 values.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        dominant = grid.dominant_states()
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["i", "j", "p_unk", "p_free", "p_static", "p_dyn", "argmax"])
            for i in range(grid.spec.width_cells):
                for j in range(grid.spec.height_cells):
                    p = grid.cells[i, j]
                    writer.writerow(
                        [i, j, repr(float(p[0])), repr(float(p[1])), repr(float(p[2])), repr(float(p[3])), STATE_NAMES[dominant[i, j]]]
                    )
    elif fmt == "raw":
        header = np.zeros(1, dtype=RAW_HEADER)
        header["magic"] = RAW_MAGIC
        header["version"] = RAW_VERSION
        header["width"] = grid.spec.width_cells
        header["height"] = grid.spec.height_cells
        header["cell_size"] = grid.spec.cell_size
        planes = np.ascontiguousarray(np.transpose(grid.cells, (2, 1, 0)), dtype="<f4")
        with path.open("wb") as fh:
            fh.write(header.tobytes())
            fh.write(planes.tobytes())
    else:
        raise ValidationError(f"unknown grid format {fmt!r}, expected 'csv' or 'raw'")
    logger.debug("exported grid cycle %d to %s", grid.cycle, path)
    return path


def load_grid_raw(path: str | Path) -> RawGrid:
    """Read a ``raw`` snapshot back into ``(width, height, 4)`` float32 cells."""
    data = Path(path).read_bytes()
    if len(data) < RAW_HEADER.itemsize:
        raise ScanFormatError(str(path), 1, "file shorter than the raw grid header")
    header = np.frombuffer(data[: RAW_HEADER.itemsize], dtype=RAW_HEADER)[0]
    if bytes(header["magic"]) != RAW_MAGIC:
        raise ScanFormatError(str(path), 1, "bad magic, not a raw grid file")
    if int(header["version"]) != RAW_VERSION:
        raise ScanFormatError(str(path), 1, f"unsupported raw grid version {int(header['version'])}")
    width, height = int(header["width"]), int(header["height"])
    body = np.frombuffer(data[RAW_HEADER.itemsize:], dtype="<f4")
    if body.size != 4 * width * height:
        raise ScanFormatError(str(path), 1, f"expected {4 * width * height} floats, found {body.size}")
    cells = np.transpose(body.reshape(4, height, width), (2, 1, 0)).copy()
    return RawGrid(width, height, float(header["cell_size"]), cells)
