"""Bayesian fusion, state transition and the per-scan pipeline step.

:func:`step` runs one full cycle for one scan:

1. recentre the grid on the ego and carry the particles along;
2. predict particles, let the dynamic mass follow them, apply the transition;
3. classify cells with the mode's inverse sensor model;
4. build the measurement grid;
5. radar-centric only: correct it with the particle motion, fuse, then run the
   false-static detection; baseline: fuse only;
6. spawn particles in newly dynamic and flipped cells;
7. re-weight and resample the particles;
8. hand each cell's dynamic mass to its particles and normalise.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .correction import CorrectionParams, correct_measurement_grid, detect_false_static, update_history_counters
from .errors import TimestampError, ValidationError
from .ism import IsmParams, classify_cells_radar, classify_cells_raycast
from .measurement import MeasurementGrid, StateParams, build_measurement_grid, motion_probability
from .model import (
    DYN,
    UNK,
    CellState,
    GridMap,
    GridSpec,
    ParticleSet,
    Scan,
    SensorConfig,
    cell_centers,
    default_sensor_suite,
    new_grid,
    normalize_states,
    recenter,
)
from .particles import (
    CellMotionStats,
    ParticleParams,
    WeightUpdateVariant,
    cell_velocity_stats,
    predict_particles,
    resample,
    resample_target,
    spawn_in_cells,
    update_weights,
)

__all__ = [
    "Mode",
    "PipelineConfig",
    "FrameReport",
    "DogmPipeline",
    "bayes_fuse",
    "bayes_fuse_grid",
    "open_prior",
    "transition_matrix",
    "transition_states",
    "transition_grid",
    "distribute_dynamic_mass",
    "distribute_dynamic_mass_grid",
    "move_dynamic_mass",
    "step",
]

logger = logging.getLogger(__name__)


class Mode(str, enum.Enum):
    RADAR_CENTRIC = "radar-centric"
    HSBOF_RS = "hsbof-rs"


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one pipeline run depends on.

    ``mode = hsbof-rs`` selects ray casting and disables the measurement
    correction and the false-static detection.
    """

    mode: Mode = Mode.RADAR_CENTRIC
    grid: GridSpec = field(default_factory=lambda: GridSpec(300, 300, 0.2))
    ism: IsmParams = field(default_factory=IsmParams)
    state: StateParams = field(default_factory=StateParams)
    correction: CorrectionParams = field(default_factory=CorrectionParams)
    particles: ParticleParams = field(default_factory=ParticleParams)
    eq16_variant: WeightUpdateVariant = "convex"
    fd_normalized: bool = False
    sensors: tuple[SensorConfig, ...] = field(default_factory=default_sensor_suite)
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "sensors", tuple(self.sensors))
        if self.eq16_variant not in ("convex", "product"):
            raise ValidationError(f"eq16_variant must be 'convex' or 'product', got {self.eq16_variant!r}")
        ids = [s.sensor_id for s in self.sensors]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate sensor ids in {ids}")

    def sensor(self, sensor_id: str) -> SensorConfig:
        for sensor in self.sensors:
            if sensor.sensor_id == sensor_id:
                return sensor
        raise ValidationError(
            f"scan from sensor {sensor_id!r} but only {[s.sensor_id for s in self.sensors]} are configured"
        )


@dataclass
class FrameReport:
    """One structured record per pipeline cycle."""

    cycle: int
    t: float
    sensor_id: str
    mode: str
    particle_count: int
    spawned: int
    flipped_cells: int
    state_mass: dict[str, float]
    wall_time_ms: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


# -- fusion --------------------------------------------------------------------


def bayes_fuse(prior: CellState, meas: CellState) -> CellState:
    """Four-state multiplicative Bayes update of one cell (uniform on total conflict)."""
    return CellState.from_array(bayes_fuse_grid(prior.as_array(), meas.as_array()))


def bayes_fuse_grid(prior: np.ndarray, meas: np.ndarray) -> np.ndarray:
    """Vectorised :func:`bayes_fuse` over arrays ending in the 4 states."""
    return normalize_states(np.asarray(prior, dtype=float) * np.asarray(meas, dtype=float))


def open_prior(states: np.ndarray) -> np.ndarray:
    """Treat unknown mass as ignorance: spread it evenly over all four states."""
    states = np.asarray(states, dtype=float)
    share = states[..., UNK:UNK + 1] / 4.0
    opened = states + share
    opened[..., UNK] = share[..., 0]
    return opened


# -- transition ----------------------------------------------------------------


def transition_matrix(p_moving) -> np.ndarray:
    """Column-stochastic state transition for one or many cells.

    The occupied columns keep 0.9 (static) and 0.95 (dynamic) of their mass and
    split it by the cell's motion probability; the rest decays to unknown.
    """
    p = np.asarray(p_moving, dtype=float)
    p_stop = 1.0 - p
    m = np.zeros((*p.shape, 4, 4))
    m[..., 0, 0] = 1.0
    m[..., 0, 1] = 0.1
    m[..., 1, 1] = 0.9
    m[..., 0, 2] = 0.1
    m[..., 2, 2] = 0.9 * (1.0 - p)
    m[..., 3, 2] = 0.9 * p
    m[..., 0, 3] = 0.05
    m[..., 2, 3] = 0.95 * p_stop
    m[..., 3, 3] = 0.95 * (1.0 - p_stop)
    return m


def transition_grid(states: np.ndarray, p_moving) -> np.ndarray:
    u, f, s, d = np.moveaxis(np.asarray(states, dtype=float), -1, 0)
    p = np.broadcast_to(np.asarray(p_moving, dtype=float), u.shape)
    out = np.stack(
        (
            u + 0.1 * f + 0.1 * s + 0.05 * d,
            0.9 * f,
            0.9 * (1.0 - p) * s + 0.95 * (1.0 - p) * d,
            0.9 * p * s + 0.95 * p * d,
        ),
        axis=-1,
    )
    return normalize_states(out)


def transition_states(cell: CellState, p_moving: float) -> CellState:
    if not 0.0 <= p_moving <= 1.0:
        raise ValidationError(f"p_moving must lie in [0, 1], got {p_moving!r}")
    return CellState.from_array(transition_grid(cell.as_array(), p_moving))


# -- dynamic mass <-> particles --------------------------------------------------


def distribute_dynamic_mass(cell: CellState, weights: np.ndarray) -> np.ndarray:
    """Rescale one cell's particle weights to sum to its dynamic probability."""
    weights = np.asarray(weights, dtype=float)
    if weights.size == 0:
        return weights
    total = weights.sum()
    if total <= 0:
        return np.full(weights.shape, cell.p_dyn / weights.size)
    return weights * (cell.p_dyn / total)


def distribute_dynamic_mass_grid(
    states: np.ndarray,
    particles: ParticleSet,
    spec: GridSpec,
) -> tuple[ParticleSet, np.ndarray]:
    """Grid-wide :func:`distribute_dynamic_mass`.

    Returns the re-weighted particles and the mask of cells whose dominant
    state is dynamic but that hold no particle (queued for spawning).
    """
    flat, inside = particles.cell_indices(spec)
    size = spec.width_cells * spec.height_cells
    p_dyn = states[..., DYN].reshape(-1)
    count = np.bincount(flat[inside], minlength=size)
    total = np.bincount(flat[inside], weights=particles.weight[inside], minlength=size)

    weight = particles.weight.copy()
    cell = flat[inside]
    w = weight[inside]
    cell_total = total[cell]
    rescaled = np.where(
        cell_total > 0,
        w * np.divide(p_dyn[cell], cell_total, out=np.zeros_like(w), where=cell_total > 0),
        p_dyn[cell] / np.maximum(count[cell], 1),
    )
    weight[inside] = rescaled

    dominant_dyn = (np.argmax(states, axis=-1) == DYN).reshape(-1)
    empty = (dominant_dyn & (count == 0)).reshape(spec.shape)
    return particles.with_weights(weight), empty


def move_dynamic_mass(states: np.ndarray, particles: ParticleSet, spec: GridSpec) -> np.ndarray:
    """Let the dynamic mass follow the predicted particles.

    Each cell's dynamic probability becomes the summed weight of the particles
    now inside it (at most 1). Mass the dynamic state gains is taken from the
    other states in proportion; mass it loses goes to unknown.
    """
    states = np.asarray(states, dtype=float)
    size = spec.width_cells * spec.height_cells
    flat, inside = particles.cell_indices(spec)
    carried = np.bincount(flat[inside], weights=particles.weight[inside], minlength=size)
    new_dyn = np.minimum(carried, 1.0).reshape(spec.shape)

    old_dyn = states[..., DYN]
    others = states[..., :DYN].copy()
    rest = others.sum(axis=-1)
    gain = new_dyn > old_dyn
    scale = np.divide(1.0 - new_dyn, rest, out=np.ones_like(rest), where=gain & (rest > 0))
    others *= scale[..., None]
    others[..., UNK] += np.where(gain, 0.0, old_dyn - new_dyn)

    out = np.concatenate((others, new_dyn[..., None]), axis=-1)
    return normalize_states(out)


# -- pipeline step ---------------------------------------------------------------


def _cell_motion(stats: CellMotionStats, meas: MeasurementGrid, params: StateParams) -> np.ndarray:
    """Per-cell ``P(v != 0)`` that drives the measurement correction.

    Occupied cells that no particle mass has reached yet take it from their own
    range rate, so a fresh moving detection is not pulled toward static.
    """
    fresh = (stats.total_weight <= 0) & meas.cells.occupied
    moving, _ = motion_probability(np.where(fresh, meas.range_rate, 0.0), params.v_th, params.k_v)
    return np.where(fresh, moving, stats.p_moving)


def _cells_to_spawn(fused: np.ndarray, meas_cells, counts: np.ndarray, flipped_mask: np.ndarray) -> np.ndarray:
    dominant_dyn = np.argmax(fused, axis=-1) == DYN
    return dominant_dyn & meas_cells.occupied & (counts == 0) & (meas_cells.nearest_det >= 0) & ~flipped_mask


def step(
    grid: GridMap,
    particles: ParticleSet,
    scan: Scan,
    config: PipelineConfig,
    rng: np.random.Generator,
) -> tuple[GridMap, ParticleSet, FrameReport]:
    """Integrate one scan. Inputs are left untouched; new values are returned."""
    started = time.perf_counter()
    if grid.t is not None and not scan.t > grid.t:
        raise TimestampError(
            f"scan at t={scan.t!r} does not follow the previous scan at t={grid.t!r}",
            [grid.t, scan.t],
        )
    sensor = config.sensor(scan.sensor_id)
    sensor_pose = sensor.world_pose(scan.ego_pose)
    sensor_xy = (sensor_pose.x, sensor_pose.y)

    # 1. follow the ego
    old_origin = grid.spec.origin
    grid = recenter(grid, (scan.ego_pose.x, scan.ego_pose.y))
    spec = grid.spec
    particles = particles.translated(old_origin[0] - spec.origin[0], old_origin[1] - spec.origin[1])

    # 2. prediction
    if grid.t is None:
        particles = particles.culled(spec)
    else:
        particles = predict_particles(particles, scan.t - grid.t, spec)
    stats = cell_velocity_stats(particles, spec, config.state.v_th, config.state.k_v)
    predicted_cells = transition_grid(move_dynamic_mass(grid.cells, particles, spec), stats.p_moving)
    predicted = replace(grid, cells=predicted_cells)

    # 3.-4. measurement
    radar_centric = config.mode is Mode.RADAR_CENTRIC
    if radar_centric:
        cells = classify_cells_radar(scan, spec, sensor, config.ism)
    else:
        cells = classify_cells_raycast(scan, spec, sensor)
    meas = build_measurement_grid(scan, cells, predicted, config.state, config.fd_normalized)

    # 5. fusion
    if radar_centric:
        meas = correct_measurement_grid(meas, _cell_motion(stats, meas, config.state), config.correction)
    touched = meas.touched
    fused = predicted_cells.copy()
    fused[touched] = bayes_fuse_grid(open_prior(predicted_cells[touched]), meas.states[touched])
    fused_grid = replace(predicted, cells=fused)
    flipped: list[tuple[int, int]] = []
    if radar_centric:
        fused_grid = update_history_counters(fused_grid, config.correction)
        fused_grid, flipped = detect_false_static(fused_grid, config.correction)
    fused = fused_grid.cells

    # 6. birth
    flipped_mask = np.zeros(spec.shape, dtype=bool)
    if flipped:
        flipped_mask[tuple(np.array(flipped).T)] = True
    spawn_mask = _cells_to_spawn(fused, cells, stats.particle_count, flipped_mask)
    births = []
    spawn_ij = np.argwhere(spawn_mask)
    if len(spawn_ij):
        det = cells.nearest_det[spawn_mask]
        births.append(
            spawn_in_cells(spawn_ij, scan.positions[det], scan.range_rates[det], sensor_xy, spec, config.particles, rng)
        )
    if flipped:
        flip_ij = np.array(flipped)
        cx, cy = cell_centers(spec)
        centers = np.column_stack((cx[flipped_mask], cy[flipped_mask]))
        births.append(
            spawn_in_cells(flip_ij, centers, np.zeros(len(flip_ij)), sensor_xy, spec, config.particles, rng)
        )
    spawned = sum(len(b) for b in births)
    particles = ParticleSet.concatenate([particles, *births])

    # 7. weighting and resampling
    particles = update_weights(
        particles,
        scan,
        spec,
        sensor_xy,
        config.particles,
        sigma_d=config.state.sigma_d,
        variant=config.eq16_variant,
        fd_normalized=config.fd_normalized,
    )
    dominant_dyn = np.argmax(fused, axis=-1) == DYN
    target = resample_target(float(fused[..., DYN][dominant_dyn].sum()), config.particles)
    particles = resample(particles, target, rng)

    # 8. normalisation
    cells_out = normalize_states(fused)
    particles, _ = distribute_dynamic_mass_grid(cells_out, particles, spec)
    out = replace(fused_grid, cells=cells_out, cycle=grid.cycle + 1, t=float(scan.t))

    report = FrameReport(
        cycle=out.cycle,
        t=float(scan.t),
        sensor_id=scan.sensor_id,
        mode=config.mode.value,
        particle_count=len(particles),
        spawned=spawned,
        flipped_cells=len(flipped),
        state_mass=out.state_mass(),
        wall_time_ms=(time.perf_counter() - started) * 1000.0,
    )
    logger.debug(
        "cycle %d t=%.3f %s: %d particles (%d born), %d flipped",
        report.cycle, report.t, report.sensor_id, report.particle_count, spawned, len(flipped),
    )
    return out, particles, report


class DogmPipeline:
    """Stateful wrapper that owns the grid, the particles and the random stream.

    The grid is created lazily, centred on the ego pose of the first scan.
    """

    def __init__(self, config: PipelineConfig) -> None:
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.grid: GridMap | None = None
        self.particles = ParticleSet()
        self.reports: list[FrameReport] = []

    def process(self, scan: Scan) -> FrameReport:
        if self.grid is None:
            base = self.config.grid
            spec = GridSpec.centered(
                (scan.ego_pose.x, scan.ego_pose.y), base.width_cells, base.height_cells, base.cell_size
            )
            self.grid = new_grid(spec, (scan.ego_pose.x, scan.ego_pose.y))
        self.grid, self.particles, report = step(self.grid, self.particles, scan, self.config, self.rng)
        self.reports.append(report)
        return report
