"""Core types of the dynamic occupancy grid.

Grid geometry, four-state cells, particles, radar detections and scans, plus
the coordinate helpers and the ego-centred recentring of the grid.

Frames
------
* **world / map frame** -- the world-aligned frame detections arrive in
  (ego motion already compensated, sensor yaw already applied).
* **grid frame** -- metres relative to the grid origin, the corner of cell
  ``(0, 0)``. Particle positions live here. When the grid is recentred the
  origin moves and particle coordinates are translated so their world
  positions stay put.

Cells are indexed ``(i, j)`` with ``i`` along world x and ``j`` along world y.
State arrays have shape ``(width_cells, height_cells, 4)`` in the order
unknown, free, static, dynamic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ValidationError

__all__ = [
    "STATE_NAMES",
    "UNK",
    "FREE",
    "STATIC",
    "DYN",
    "NORM_TOL",
    "GridSpec",
    "CellState",
    "GridMap",
    "Particle",
    "ParticleSet",
    "Pose",
    "RadarDetection",
    "Scan",
    "SensorConfig",
    "new_grid",
    "recenter",
    "world_to_cell",
    "world_to_index",
    "world_to_cells",
    "cell_center",
    "cell_centers",
    "normalize_states",
    "default_sensor_suite",
]

STATE_NAMES = ("unknown", "free", "static", "dynamic")
UNK, FREE, STATIC, DYN = range(4)
NORM_TOL = 1e-9

UNKNOWN_VECTOR = np.array([1.0, 0.0, 0.0, 0.0])
UNIFORM_VECTOR = np.full(4, 0.25)

# Points within this many cell widths below an edge snap to the higher cell, so
# 0.6 / 0.2 == 2.9999999999999996 still lands in cell 3.
_EDGE_EPS = 1e-9


# -- grid geometry -----------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the ego-centred grid window."""

    width_cells: int
    height_cells: int
    cell_size: float = 0.2
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.cell_size) and self.cell_size > 0):
            raise ValidationError(f"cell_size must be positive, got {self.cell_size!r}")
        for name in ("width_cells", "height_cells"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ValidationError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        ox, oy = self.origin
        object.__setattr__(self, "origin", (float(ox), float(oy)))

    @classmethod
    def centered(
        cls,
        center: tuple[float, float],
        width_cells: int,
        height_cells: int,
        cell_size: float = 0.2,
    ) -> GridSpec:
        """A window of the given size whose centre sits on ``center``."""
        origin = (
            center[0] - width_cells * cell_size / 2.0,
            center[1] - height_cells * cell_size / 2.0,
        )
        return cls(width_cells, height_cells, cell_size, origin)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.width_cells, self.height_cells)

    @property
    def size_m(self) -> tuple[float, float]:
        return (self.width_cells * self.cell_size, self.height_cells * self.cell_size)

    @property
    def center(self) -> tuple[float, float]:
        w, h = self.size_m
        return (self.origin[0] + w / 2.0, self.origin[1] + h / 2.0)

    def shifted(self, di: int, dj: int) -> GridSpec:
        """The same window moved by ``(di, dj)`` whole cells."""
        ox, oy = self.origin
        return replace(self, origin=(ox + di * self.cell_size, oy + dj * self.cell_size))


def _cell_index(offset, cell_size: float):
    return np.floor(np.asarray(offset, dtype=float) / cell_size + _EDGE_EPS).astype(np.int64)


def world_to_index(spec: GridSpec, x: float, y: float) -> tuple[int, int]:
    """Index of the cell containing ``(x, y)`` as if the grid were unbounded."""
    return (
        int(_cell_index(x - spec.origin[0], spec.cell_size)),
        int(_cell_index(y - spec.origin[1], spec.cell_size)),
    )


def world_to_cell(spec: GridSpec, x: float, y: float) -> tuple[int, int] | None:
    """Index of the cell containing world point ``(x, y)``, or ``None`` outside.

    Cells are half-open: a point on a shared edge belongs to the higher index.
    """
    if not (math.isfinite(x) and math.isfinite(y)):
        return None
    i = int(_cell_index(x - spec.origin[0], spec.cell_size))
    j = int(_cell_index(y - spec.origin[1], spec.cell_size))
    if 0 <= i < spec.width_cells and 0 <= j < spec.height_cells:
        return (i, j)
    return None


def world_to_cells(spec: GridSpec, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`world_to_cell`: ``(N, 2)`` points -> ``(N, 2)`` indices + inside mask."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    ij = np.empty((len(xy), 2), dtype=np.int64)
    ij[:, 0] = _cell_index(xy[:, 0] - spec.origin[0], spec.cell_size)
    ij[:, 1] = _cell_index(xy[:, 1] - spec.origin[1], spec.cell_size)
    inside = (
        (ij[:, 0] >= 0)
        & (ij[:, 0] < spec.width_cells)
        & (ij[:, 1] >= 0)
        & (ij[:, 1] < spec.height_cells)
    )
    return ij, inside


def cell_center(spec: GridSpec, i: int, j: int) -> tuple[float, float]:
    return (
        spec.origin[0] + (i + 0.5) * spec.cell_size,
        spec.origin[1] + (j + 0.5) * spec.cell_size,
    )


@lru_cache(maxsize=4)
def cell_centers(spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """World coordinates of every cell centre, each of shape ``spec.shape``.

    Cached per spec; the arrays are read-only.
    """
    xs = spec.origin[0] + (np.arange(spec.width_cells) + 0.5) * spec.cell_size
    ys = spec.origin[1] + (np.arange(spec.height_cells) + 0.5) * spec.cell_size
    cx, cy = np.meshgrid(xs, ys, indexing="ij")
    cx.setflags(write=False)
    cy.setflags(write=False)
    return cx, cy


# -- cell states ---------------------------------------------------------------


@dataclass(frozen=True)
class CellState:
    """Probabilities of the four cell states (unknown, free, static, dynamic)."""

    p_unk: float
    p_free: float
    p_static: float
    p_dyn: float

    def __post_init__(self) -> None:
        for name in ("p_unk", "p_free", "p_static", "p_dyn"):
            value = float(getattr(self, name))
            if not (-1e-12 <= value <= 1.0 + 1e-12):
                raise ValidationError(f"{name} must lie in [0, 1], got {value!r}")
            object.__setattr__(self, name, value)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> CellState:
        p = np.asarray(values, dtype=float).reshape(4)
        return cls(*(float(v) for v in p))

    def as_array(self) -> np.ndarray:
        return np.array([self.p_unk, self.p_free, self.p_static, self.p_dyn])

    @property
    def total(self) -> float:
        return self.p_unk + self.p_free + self.p_static + self.p_dyn

    @property
    def dominant(self) -> int:
        """Index of the most probable state (first one on ties)."""
        return int(np.argmax(self.as_array()))


def normalize_states(states: np.ndarray) -> np.ndarray:
    """Rescale every 4-vector along the last axis to sum to 1.

    All-zero vectors become uniform; negative round-off is clipped first.
    """
    states = np.clip(np.asarray(states, dtype=float), 0.0, None)
    totals = states.sum(axis=-1, keepdims=True)
    out = np.divide(states, totals, out=np.empty_like(states), where=totals > 0)
    empty = totals[..., 0] <= 0
    if np.any(empty):
        out[empty] = UNIFORM_VECTOR
    return out


# -- grid map ------------------------------------------------------------------


@dataclass
class GridMap:
    """The persistent world model: per-cell state vectors plus history counters.

    Pipeline stages never modify a ``GridMap`` in place; they return a new one.
    ``t`` is the timestamp of the last integrated scan (``None`` before the first).
    """

    spec: GridSpec
    cells: np.ndarray
    free_streak: np.ndarray
    static_streak: np.ndarray
    cycle: int = 0
    ego_xy: tuple[float, float] = (0.0, 0.0)
    ego_residual: tuple[float, float] = (0.0, 0.0)
    t: float | None = None

    def __post_init__(self) -> None:
        shape = self.spec.shape
        if self.cells.shape != (*shape, 4):
            raise ValidationError(f"cells shape {self.cells.shape} does not match grid {shape}")
        for name in ("free_streak", "static_streak"):
            if getattr(self, name).shape != shape:
                raise ValidationError(f"{name} shape does not match grid {shape}")

    def cell(self, i: int, j: int) -> CellState:
        return CellState.from_array(self.cells[i, j])

    def dominant_states(self) -> np.ndarray:
        return np.argmax(self.cells, axis=-1)

    def state_mass(self) -> dict[str, float]:
        totals = self.cells.reshape(-1, 4).sum(axis=0)
        return {name: float(v) for name, v in zip(STATE_NAMES, totals)}

    def copy(self) -> GridMap:
        return replace(
            self,
            cells=self.cells.copy(),
            free_streak=self.free_streak.copy(),
            static_streak=self.static_streak.copy(),
        )


def new_grid(spec: GridSpec, ego_xy: tuple[float, float] | None = None) -> GridMap:
    """A grid of pure-unknown cells with cleared history, centred on ``ego_xy``.

    When ``ego_xy`` is omitted the ego is assumed to sit at the window centre.
    """
    shape = spec.shape
    cells = np.zeros((*shape, 4))
    cells[..., UNK] = 1.0
    ego = spec.center if ego_xy is None else (float(ego_xy[0]), float(ego_xy[1]))
    return GridMap(
        spec=spec,
        cells=cells,
        free_streak=np.zeros(shape, dtype=np.int64),
        static_streak=np.zeros(shape, dtype=np.int64),
        ego_xy=ego,
    )


def _shift_array(array: np.ndarray, di: int, dj: int, fill) -> np.ndarray:
    """``out[i, j] = array[i + di, j + dj]``; cells without a source get ``fill``."""
    out = np.empty_like(array)
    out[...] = fill
    w, h = array.shape[:2]
    if abs(di) >= w or abs(dj) >= h:
        return out
    dst_i = slice(max(0, -di), w - max(0, di))
    src_i = slice(max(0, di), w - max(0, -di))
    dst_j = slice(max(0, -dj), h - max(0, dj))
    src_j = slice(max(0, dj), h - max(0, -dj))
    out[dst_i, dst_j] = array[src_i, src_j]
    return out


def recenter(grid: GridMap, new_ego_xy: tuple[float, float]) -> GridMap:
    """Follow the ego to ``new_ego_xy`` by whole-cell shifts of the window.

    The displacement since the last call, plus the stored sub-cell residual, is
    rounded to the nearest whole number of cells; the remainder is kept in
    ``ego_residual`` for the next call. Cells entering the window are pure
    unknown with zero streaks.
    """
    c = grid.spec.cell_size
    delta = (
        np.asarray(new_ego_xy, dtype=float)
        - np.asarray(grid.ego_xy, dtype=float)
        + np.asarray(grid.ego_residual, dtype=float)
    )
    shift = np.rint(delta / c).astype(np.int64)
    residual = delta - shift * c
    di, dj = int(shift[0]), int(shift[1])
    ego = (float(new_ego_xy[0]), float(new_ego_xy[1]))
    res = (float(residual[0]), float(residual[1]))
    if di == 0 and dj == 0:
        return replace(grid, ego_xy=ego, ego_residual=res)
    return replace(
        grid,
        spec=grid.spec.shifted(di, dj),
        cells=_shift_array(grid.cells, di, dj, UNKNOWN_VECTOR),
        free_streak=_shift_array(grid.free_streak, di, dj, 0),
        static_streak=_shift_array(grid.static_streak, di, dj, 0),
        ego_xy=ego,
        ego_residual=res,
    )


# -- particles -----------------------------------------------------------------


@dataclass(frozen=True)
class Particle:
    """One dynamic hypothesis: grid-frame position, world-frame velocity, weight."""

    x_p: float
    y_p: float
    v_px: float
    v_py: float
    weight: float
    age: int = 0


def _as_1d(values, dtype) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(values, dtype=dtype).reshape(-1))


@dataclass
class ParticleSet:
    """Struct-of-arrays particle pool (one entry per particle in every array)."""

    x: np.ndarray = field(default_factory=lambda: np.empty(0))
    y: np.ndarray = field(default_factory=lambda: np.empty(0))
    vx: np.ndarray = field(default_factory=lambda: np.empty(0))
    vy: np.ndarray = field(default_factory=lambda: np.empty(0))
    weight: np.ndarray = field(default_factory=lambda: np.empty(0))
    age: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self) -> None:
        self.x = _as_1d(self.x, float)
        self.y = _as_1d(self.y, float)
        self.vx = _as_1d(self.vx, float)
        self.vy = _as_1d(self.vy, float)
        self.weight = _as_1d(self.weight, float)
        self.age = _as_1d(self.age, np.int64)
        n = len(self.x)
        if any(len(a) != n for a in (self.y, self.vx, self.vy, self.weight, self.age)):
            raise ValidationError("particle arrays must all have the same length")
        if np.any(self.weight < 0):
            raise ValidationError("particle weights must be non-negative")

    @classmethod
    def from_particles(cls, particles: Iterable[Particle]) -> ParticleSet:
        items = list(particles)
        return cls(
            x=[p.x_p for p in items],
            y=[p.y_p for p in items],
            vx=[p.v_px for p in items],
            vy=[p.v_py for p in items],
            weight=[p.weight for p in items],
            age=[p.age for p in items],
        )

    @classmethod
    def concatenate(cls, sets: Sequence[ParticleSet]) -> ParticleSet:
        if not sets:
            return cls()
        return cls(
            x=np.concatenate([s.x for s in sets]),
            y=np.concatenate([s.y for s in sets]),
            vx=np.concatenate([s.vx for s in sets]),
            vy=np.concatenate([s.vy for s in sets]),
            weight=np.concatenate([s.weight for s in sets]),
            age=np.concatenate([s.age for s in sets]),
        )

    def __len__(self) -> int:
        return len(self.x)

    def __iter__(self) -> Iterator[Particle]:
        for k in range(len(self)):
            yield Particle(
                float(self.x[k]),
                float(self.y[k]),
                float(self.vx[k]),
                float(self.vy[k]),
                float(self.weight[k]),
                int(self.age[k]),
            )

    @property
    def total_weight(self) -> float:
        return float(self.weight.sum())

    def speeds(self) -> np.ndarray:
        return np.hypot(self.vx, self.vy)

    def take(self, index) -> ParticleSet:
        """Subset (boolean mask) or gather (integer indices, repeats allowed)."""
        return ParticleSet(
            x=self.x[index],
            y=self.y[index],
            vx=self.vx[index],
            vy=self.vy[index],
            weight=self.weight[index],
            age=self.age[index],
        )

    def with_weights(self, weight: np.ndarray) -> ParticleSet:
        return replace(self, weight=np.asarray(weight, dtype=float))

    def translated(self, dx: float, dy: float) -> ParticleSet:
        return replace(self, x=self.x + dx, y=self.y + dy)

    def cell_indices(self, spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
        """Flat C-order cell index of every particle plus an inside-grid mask."""
        i = _cell_index(self.x, spec.cell_size)
        j = _cell_index(self.y, spec.cell_size)
        inside = (i >= 0) & (i < spec.width_cells) & (j >= 0) & (j < spec.height_cells)
        flat = np.where(inside, i * spec.height_cells + j, -1)
        return flat, inside

    def culled(self, spec: GridSpec) -> ParticleSet:
        _, inside = self.cell_indices(spec)
        return self if inside.all() else self.take(inside)

    def world_positions(self, spec: GridSpec) -> np.ndarray:
        return np.column_stack((self.x + spec.origin[0], self.y + spec.origin[1]))


# -- measurements ----------------------------------------------------------------


@dataclass(frozen=True)
class Pose:
    """2D pose ``(x, y, yaw)``; yaw in radians, counter-clockwise from +x."""

    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def compose(self, local: Pose) -> Pose:
        """The pose ``local`` (expressed in this pose's frame) in the parent frame."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return Pose(
            self.x + c * local.x - s * local.y,
            self.y + s * local.x + c * local.y,
            self.yaw + local.yaw,
        )


@dataclass(frozen=True)
class RadarDetection:
    """One radar return in the world-aligned map frame.

    ``v_r`` is the ego-motion-compensated range rate (positive = receding).
    """

    x_map: float
    y_map: float
    v_r: float
    rcs: float

    def __post_init__(self) -> None:
        for name in ("x_map", "y_map", "v_r", "rcs"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValidationError(f"detection {name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class Scan:
    """All detections one sensor produced in one measurement cycle."""

    t: float
    sensor_id: str
    ego_pose: Pose
    detections: tuple[RadarDetection, ...] = ()

    def __post_init__(self) -> None:
        if not math.isfinite(self.t):
            raise ValidationError(f"scan timestamp must be finite, got {self.t!r}")
        object.__setattr__(self, "detections", tuple(self.detections))

    def __len__(self) -> int:
        return len(self.detections)

    @cached_property
    def positions(self) -> np.ndarray:
        return np.array([(d.x_map, d.y_map) for d in self.detections], dtype=float).reshape(-1, 2)

    @cached_property
    def range_rates(self) -> np.ndarray:
        return np.array([d.v_r for d in self.detections], dtype=float)

    @cached_property
    def rcs_values(self) -> np.ndarray:
        return np.array([d.rcs for d in self.detections], dtype=float)


@dataclass(frozen=True)
class SensorConfig:
    """Mounting and field of view of one radar."""

    sensor_id: str
    mount_pose: Pose
    max_range: float
    azimuth_span: float

    def __post_init__(self) -> None:
        if not (self.max_range > 0):
            raise ValidationError(f"{self.sensor_id}: max_range must be positive")
        if not (0 < self.azimuth_span <= math.pi):
            raise ValidationError(f"{self.sensor_id}: azimuth_span must lie in (0, pi]")

    def world_pose(self, ego_pose: Pose) -> Pose:
        return ego_pose.compose(self.mount_pose)


def default_sensor_suite() -> tuple[SensorConfig, ...]:
    """One forward long-range radar plus four corner radars.

    Mount poses are relative to the rear-axle ego origin; ranges and opening
    angles are placeholders, not datasheet values.
    """
    wide = math.radians(75.0)
    return (
        SensorConfig("front", Pose(3.6, 0.0, 0.0), 100.0, wide),
        SensorConfig("front_left", Pose(3.4, 0.8, math.radians(45.0)), 50.0, wide),
        SensorConfig("front_right", Pose(3.4, -0.8, math.radians(-45.0)), 50.0, wide),
        SensorConfig("rear_left", Pose(-0.9, 0.8, math.radians(135.0)), 50.0, wide),
        SensorConfig("rear_right", Pose(-0.9, -0.8, math.radians(-135.0)), 50.0, wide),
    )
