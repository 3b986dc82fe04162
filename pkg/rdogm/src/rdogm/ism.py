"""First inverse-sensor-model stage: which cells did a scan touch, and how.

Two classifiers share one output type:

* :func:`classify_cells_radar` -- the radar field-of-view model. Occupancy is a
  disk footprint around every detection; free space is implicit, per angular
  sector, up to the closest detection in that sector.
* :func:`classify_cells_raycast` -- the lidar-style baseline that walks a
  Bresenham line from the sensor cell to each detection cell.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ValidationError
from .model import GridSpec, Pose, Scan, SensorConfig, _cell_index, cell_centers, world_to_index

__all__ = [
    "IsmParams",
    "MeasurementCells",
    "classify_cells_radar",
    "classify_cells_raycast",
    "bresenham_cells",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IsmParams:
    """Geometry of the radar field-of-view model.

    Parameters
    ----------
    sector_width:
        Angular width of one free-space sector (radians).
    occ_radius:
        Radius of the occupied footprint around a detection (metres).
    angular_sigma:
        Angular spread reserved for Gaussian occupancy smearing (radians).
    """

    sector_width: float = math.radians(2.0)
    occ_radius: float = 0.4
    angular_sigma: float = math.radians(1.0)

    def __post_init__(self) -> None:
        for name in ("sector_width", "occ_radius", "angular_sigma"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)!r}")


@dataclass(frozen=True, eq=False)
class MeasurementCells:
    """Disjoint unknown / free / occupied cell masks of one scan.

    ``nearest_det`` holds, for every classified cell, the index of the
    detection closest to the cell centre (``-1`` elsewhere, and everywhere
    when the scan is empty); ``nearest_dist`` the matching distance (``nan``
    elsewhere, ``None`` when not computed).
    """

    spec: GridSpec
    unknown: np.ndarray
    free: np.ndarray
    occupied: np.ndarray
    nearest_det: np.ndarray
    nearest_dist: np.ndarray | None = None

    @property
    def touched(self) -> np.ndarray:
        return self.unknown | self.free | self.occupied

    @staticmethod
    def _index_set(mask: np.ndarray) -> frozenset[tuple[int, int]]:
        return frozenset((int(i), int(j)) for i, j in np.argwhere(mask))

    @property
    def c_unk(self) -> frozenset[tuple[int, int]]:
        return self._index_set(self.unknown)

    @property
    def c_free(self) -> frozenset[tuple[int, int]]:
        return self._index_set(self.free)

    @property
    def c_occ(self) -> frozenset[tuple[int, int]]:
        return self._index_set(self.occupied)


def _wrap_angle(angle):
    return (np.asarray(angle) + np.pi) % (2.0 * np.pi) - np.pi


def _fov_window(spec: GridSpec, pose: Pose, sensor: SensorConfig) -> tuple[slice, slice]:
    """Index window of the bounding box of the sensor's field of view, padded by one cell."""
    r, span = sensor.max_range, sensor.azimuth_span
    angles = [pose.yaw - span, pose.yaw + span]
    angles += [k * math.pi / 2.0 for k in range(4) if abs(_wrap_angle(k * math.pi / 2.0 - pose.yaw)) <= span]
    xs = [pose.x] + [pose.x + r * math.cos(a) for a in angles]
    ys = [pose.y] + [pose.y + r * math.sin(a) for a in angles]
    i0, i1 = _cell_index(np.array([min(xs), max(xs)]) - spec.origin[0], spec.cell_size)
    j0, j1 = _cell_index(np.array([min(ys), max(ys)]) - spec.origin[1], spec.cell_size)
    return (
        slice(int(np.clip(i0 - 1, 0, spec.width_cells)), int(np.clip(i1 + 2, 0, spec.width_cells))),
        slice(int(np.clip(j0 - 1, 0, spec.height_cells)), int(np.clip(j1 + 2, 0, spec.height_cells))),
    )


def _sensor_geometry(spec: GridSpec, scan: Scan, sensor: SensorConfig):
    """Sensor pose, FOV window, per-window range and bearing, and the full-grid FOV mask."""
    pose = sensor.world_pose(scan.ego_pose)
    window = _fov_window(spec, pose, sensor)
    cx, cy = cell_centers(spec)
    dx, dy = cx[window] - pose.x, cy[window] - pose.y
    rng = np.hypot(dx, dy)
    bearing = _wrap_angle(np.arctan2(dy, dx) - pose.yaw)
    in_fov = np.zeros(spec.shape, dtype=bool)
    in_fov[window] = (np.abs(bearing) <= sensor.azimuth_span) & (rng <= sensor.max_range)
    return pose, window, rng, bearing, in_fov


def _nearest_detections(spec: GridSpec, positions: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    nearest = np.full(mask.shape, -1, dtype=np.int64)
    distance = np.full(mask.shape, np.nan)
    if len(positions) == 0 or not mask.any():
        return nearest, distance
    cx, cy = cell_centers(spec)
    query = np.column_stack((cx[mask], cy[mask]))
    dist, idx = cKDTree(positions).query(query, workers=-1)
    nearest[mask] = idx
    distance[mask] = dist
    return nearest, distance


def _occupied_footprint(spec: GridSpec, positions: np.ndarray, radius: float) -> np.ndarray:
    """Cells whose centre lies within ``radius`` of any detection."""
    occupied = np.zeros(spec.shape, dtype=bool)
    if len(positions) == 0:
        return occupied
    c = spec.cell_size
    reach = int(math.ceil(radius / c)) + 1
    steps = np.arange(-reach, reach + 1)
    oi, oj = (a.reshape(-1) for a in np.meshgrid(steps, steps, indexing="ij"))
    base_i = _cell_index(positions[:, 0] - spec.origin[0], c)
    base_j = _cell_index(positions[:, 1] - spec.origin[1], c)
    ii = base_i[:, None] + oi[None, :]
    jj = base_j[:, None] + oj[None, :]
    px = spec.origin[0] + (ii + 0.5) * c
    py = spec.origin[1] + (jj + 0.5) * c
    near = np.hypot(px - positions[:, 0:1], py - positions[:, 1:2]) <= radius
    inside = (ii >= 0) & (ii < spec.width_cells) & (jj >= 0) & (jj < spec.height_cells)
    keep = near & inside
    occupied[ii[keep], jj[keep]] = True
    return occupied


def classify_cells_radar(
    scan: Scan,
    spec: GridSpec,
    sensor: SensorConfig,
    params: IsmParams | None = None,
) -> MeasurementCells:
    """Classify cells with the radar field-of-view model.

    * occupied: every cell centre within ``occ_radius`` of a detection, inside
      or outside the field of view;
    * free: in-FOV cells of a sector holding at least one in-FOV detection and
      radially closer than that sector's nearest detection minus ``occ_radius``;
    * unknown: every other in-FOV, in-range cell, including whole sectors
      without a detection.
    """
    params = params or IsmParams()
    pose, window, rng, bearing, in_fov = _sensor_geometry(spec, scan, sensor)
    positions = scan.positions

    occupied = _occupied_footprint(spec, positions, params.occ_radius)
    free = np.zeros(spec.shape, dtype=bool)

    if len(positions):
        n_sectors = max(1, int(math.ceil(2.0 * sensor.azimuth_span / params.sector_width)))
        ddx = positions[:, 0] - pose.x
        ddy = positions[:, 1] - pose.y
        det_range = np.hypot(ddx, ddy)
        det_bearing = _wrap_angle(np.arctan2(ddy, ddx) - pose.yaw)
        seen = np.abs(det_bearing) <= sensor.azimuth_span
        if seen.any():
            det_sector = _sector_of(det_bearing[seen], sensor.azimuth_span, params.sector_width, n_sectors)
            sector_min = np.full(n_sectors, np.inf)
            np.minimum.at(sector_min, det_sector, det_range[seen])
            # empty sectors keep an infinite limit and contribute no free space
            limit = sector_min[_sector_of(bearing, sensor.azimuth_span, params.sector_width, n_sectors)]
            free[window] = in_fov[window] & np.isfinite(limit) & (rng < limit - params.occ_radius)
        logger.debug(
            "radar ism %s: %d/%d detections in FOV", scan.sensor_id, int(seen.sum()), len(positions)
        )

    free &= ~occupied
    unknown = in_fov & ~occupied & ~free
    nearest, distance = _nearest_detections(spec, positions, occupied | free | unknown)
    return MeasurementCells(spec, unknown, free, occupied, nearest, distance)


def _sector_of(bearing, span: float, width: float, n_sectors: int) -> np.ndarray:
    sector = np.floor((np.asarray(bearing) + span) / width).astype(np.int64)
    return np.clip(sector, 0, n_sectors - 1)


def bresenham_cells(start: tuple[int, int], end: tuple[int, int]) -> np.ndarray:
    """Cells of the Bresenham line from ``start`` up to, not including, ``end``.

    Returned as an ``(n, 2)`` integer array in walking order; ties of the minor
    coordinate round up.
    """
    (i0, j0), (i1, j1) = start, end
    di, dj = i1 - i0, j1 - j0
    n = max(abs(di), abs(dj))
    if n == 0:
        return np.empty((0, 2), dtype=np.int64)
    k = np.arange(n, dtype=np.int64)
    # integer form of round(k * d / n), identical to Bresenham's error walk
    step_i = np.sign(di) * ((2 * k * abs(di) + n) // (2 * n))
    step_j = np.sign(dj) * ((2 * k * abs(dj) + n) // (2 * n))
    return np.column_stack((i0 + step_i, j0 + step_j))


def classify_cells_raycast(
    scan: Scan,
    spec: GridSpec,
    sensor: SensorConfig,
) -> MeasurementCells:
    """Classify cells by Bresenham ray casting from the sensor cell.

    Ray cells are free (the detection cell itself excluded), detection cells
    are occupied, and the remaining in-FOV, in-range cells are unknown.
    """
    pose, _, _, _, in_fov = _sensor_geometry(spec, scan, sensor)
    positions = scan.positions
    occupied = np.zeros(spec.shape, dtype=bool)
    free = np.zeros(spec.shape, dtype=bool)
    source = world_to_index(spec, pose.x, pose.y)
    for x, y in positions:
        target = world_to_index(spec, x, y)
        ray = bresenham_cells(source, target)
        inside = (
            (ray[:, 0] >= 0)
            & (ray[:, 0] < spec.width_cells)
            & (ray[:, 1] >= 0)
            & (ray[:, 1] < spec.height_cells)
        )
        free[ray[inside, 0], ray[inside, 1]] = True
        if 0 <= target[0] < spec.width_cells and 0 <= target[1] < spec.height_cells:
            occupied[target] = True

    free &= ~occupied
    unknown = in_fov & ~occupied & ~free
    nearest, distance = _nearest_detections(spec, positions, occupied | free | unknown)
    return MeasurementCells(spec, unknown, free, occupied, nearest, distance)
