"""Particle filter for the dynamic part of the grid.

Particles are born in newly dynamic cells with a velocity whose radial
component matches the measured range rate, re-weighted against every scan,
resampled systematically and moved with a constant-velocity model.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.spatial import cKDTree

from .errors import ValidationError
from .measurement import distance_weight, motion_probability
from .model import GridSpec, ParticleSet, RadarDetection, Scan

__all__ = [
    "ParticleParams",
    "CellMotionStats",
    "WeightUpdateVariant",
    "spawn_particles",
    "spawn_in_cells",
    "update_weights",
    "resample",
    "resample_target",
    "cell_velocity_stats",
    "predict_particles",
]

logger = logging.getLogger(__name__)

WeightUpdateVariant = Literal["convex", "product"]


@dataclass(frozen=True)
class ParticleParams:
    """Birth, weighting and budget parameters of the particle filter.

    Parameters
    ----------
    nu_birth:
        Particles born per newly dynamic cell.
    n_max:
        Hard cap on the particle pool after resampling.
    epsilon:
        Per-cycle survival decay of weights away from detections.
    sigma_r:
        Width (m/s) of the range-rate agreement kernel.
    v_max:
        Speed limit for sampled velocities (m/s).
    t_tangential_max:
        Limit of the sampled tangential component; ``None`` means ``v_max``.
    particles_per_mass:
        Particles kept per unit of dynamic probability mass.
    """

    nu_birth: int = 10
    n_max: int = 20000
    epsilon: float = 0.01
    sigma_r: float = 0.5
    v_max: float = 16.7
    t_tangential_max: float | None = None
    particles_per_mass: float = 50.0

    def __post_init__(self) -> None:
        for name in ("nu_birth", "n_max"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValidationError(f"{name} must be a positive integer, got {value!r}")
        if not 0.0 < self.epsilon < 1.0:
            raise ValidationError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")
        for name in ("sigma_r", "v_max", "particles_per_mass"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.t_tangential_max is not None and not self.t_tangential_max > 0:
            raise ValidationError("t_tangential_max must be positive")

    @property
    def tangential_limit(self) -> float:
        return self.v_max if self.t_tangential_max is None else self.t_tangential_max


# -- birth ---------------------------------------------------------------------


def _line_of_sight(sensor_xy, targets: np.ndarray) -> np.ndarray:
    """Unit vectors from the sensor to each target; ``(1, 0)`` for coincident points."""
    los = np.asarray(targets, dtype=float).reshape(-1, 2) - np.asarray(sensor_xy, dtype=float)
    length = np.hypot(los[:, 0], los[:, 1])
    unit = np.zeros_like(los)
    unit[:, 0] = 1.0
    ok = length > 0
    unit[ok] = los[ok] / length[ok, None]
    return unit


def spawn_in_cells(
    cells: np.ndarray,
    det_xy: np.ndarray,
    det_vr: np.ndarray,
    sensor_xy,
    spec: GridSpec,
    params: ParticleParams,
    rng: np.random.Generator,
) -> ParticleSet:
    """Spawn ``nu_birth`` particles in each of ``cells`` (``(K, 2)`` indices).

    Row ``k`` of ``det_xy`` / ``det_vr`` is the governing detection of cell
    ``k``. Radial speeds beyond ``v_max`` are clamped and get no tangential
    spread.
    """
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
    k = len(cells)
    if k == 0:
        return ParticleSet()
    n = params.nu_birth
    c = spec.cell_size

    unit = _line_of_sight(sensor_xy, det_xy)
    v_radial = np.clip(np.asarray(det_vr, dtype=float), -params.v_max, params.v_max)
    t_limit = np.minimum(
        params.tangential_limit,
        np.sqrt(np.maximum(params.v_max**2 - v_radial**2, 0.0)),
    )

    jitter = rng.random((k, n, 2))
    tangential = rng.uniform(-1.0, 1.0, (k, n)) * t_limit[:, None]

    x = (cells[:, 0, None] + jitter[..., 0]) * c
    y = (cells[:, 1, None] + jitter[..., 1]) * c
    ux, uy = unit[:, 0, None], unit[:, 1, None]
    vx = v_radial[:, None] * ux - tangential * uy
    vy = v_radial[:, None] * uy + tangential * ux
    return ParticleSet(
        x=x,
        y=y,
        vx=vx,
        vy=vy,
        weight=np.full(k * n, 1.0 / n),
        age=np.zeros(k * n, dtype=np.int64),
    )


def spawn_particles(
    cell: tuple[int, int],
    det: RadarDetection,
    sensor_xy,
    spec: GridSpec,
    params: ParticleParams,
    rng: np.random.Generator,
) -> ParticleSet:
    """Spawn ``nu_birth`` particles in one cell from its governing detection."""
    return spawn_in_cells(
        np.array([cell]),
        np.array([[det.x_map, det.y_map]]),
        np.array([det.v_r]),
        sensor_xy,
        spec,
        params,
        rng,
    )


# -- weighting -----------------------------------------------------------------


def update_weights(
    particles: ParticleSet,
    scan: Scan,
    spec: GridSpec,
    sensor_xy,
    params: ParticleParams,
    *,
    sigma_d: float = 1.0,
    variant: WeightUpdateVariant = "convex",
    fd_normalized: bool = False,
) -> ParticleSet:
    """Re-weight particles against the scan's nearest detections; age += 1.

    ``convex``:  ``w <- [f_d f_r + (1 - f_d)(1 - eps)] w``
    ``product``: ``w <- f_d f_r (1 - f_d)(1 - eps) w``

    ``f_r`` is a peak-normalised Gaussian of the range-rate mismatch, so the
    convex factor never exceeds 1. An empty scan only applies the decay.
    """
    if variant not in ("convex", "product"):
        raise ValidationError(f"unknown weight update variant {variant!r}")
    if len(particles) == 0:
        return particles
    decay = 1.0 - params.epsilon
    if len(scan) == 0:
        return ParticleSet(
            particles.x, particles.y, particles.vx, particles.vy,
            particles.weight * decay, particles.age + 1,
        )

    positions = scan.positions
    d, nearest = cKDTree(positions).query(particles.world_positions(spec), workers=-1)
    unit = _line_of_sight(sensor_xy, positions)[nearest]
    r_p = particles.vx * unit[:, 0] + particles.vy * unit[:, 1]
    f_r = np.exp(-((r_p - scan.range_rates[nearest]) ** 2) / (2.0 * params.sigma_r**2))
    f_d = np.asarray(distance_weight(d, sigma_d, fd_normalized))
    if variant == "convex":
        factor = f_d * f_r + (1.0 - f_d) * decay
    else:
        factor = f_d * f_r * (1.0 - f_d) * decay
    return ParticleSet(
        particles.x, particles.y, particles.vx, particles.vy,
        particles.weight * factor, particles.age + 1,
    )


# -- resampling ----------------------------------------------------------------


def resample_target(dynamic_mass: float, params: ParticleParams) -> int:
    """Particle count for a given total dynamic mass, capped at ``n_max``."""
    if dynamic_mass <= 0:
        return 0
    return int(min(params.n_max, math.ceil(dynamic_mass * params.particles_per_mass)))


def resample(
    particles: ParticleSet,
    target: int,
    rng: np.random.Generator | None = None,
    offset: float | None = None,
) -> ParticleSet:
    """Systematic (low-variance) resampling to ``target`` particles.

    One uniform ``offset`` in ``[0, 1)`` places ``target`` evenly spaced
    pointers on the cumulative weight. Offspring get the uniform weight
    ``total / target`` and inherit their parent's age; total weight is kept.
    """
    total = particles.total_weight
    if target <= 0 or len(particles) == 0 or total <= 0:
        return ParticleSet()
    if offset is None:
        if rng is None:
            raise ValidationError("resample needs either an rng or an explicit offset")
        offset = float(rng.random())
    if not 0.0 <= offset < 1.0:
        raise ValidationError(f"offset must lie in [0, 1), got {offset!r}")

    cumulative = np.cumsum(particles.weight)
    pointers = (offset + np.arange(target)) * (total / target)
    parents = np.minimum(np.searchsorted(cumulative, pointers, side="right"), len(particles) - 1)
    out = particles.take(parents)
    out.weight = np.full(target, total / target)
    logger.debug("resampled %d -> %d particles", len(particles), target)
    return out


# -- statistics and motion -----------------------------------------------------


@dataclass(eq=False)
class CellMotionStats:
    """Per-cell aggregates of the particles currently inside each cell."""

    mean_velocity: np.ndarray
    total_weight: np.ndarray
    particle_count: np.ndarray
    p_moving: np.ndarray


def cell_velocity_stats(
    particles: ParticleSet,
    spec: GridSpec,
    v_th: float = 0.5,
    k_v: float = 0.1,
) -> CellMotionStats:
    """Weight-weighted mean velocity and motion probability of every cell.

    Cells without particles (or with zero total weight) report zero velocity
    and ``P_moving = 0``.
    """
    size = spec.width_cells * spec.height_cells
    flat, inside = particles.cell_indices(spec)
    idx = flat[inside]
    w = particles.weight[inside]
    count = np.bincount(idx, minlength=size)
    total = np.bincount(idx, weights=w, minlength=size)
    sum_vx = np.bincount(idx, weights=w * particles.vx[inside], minlength=size)
    sum_vy = np.bincount(idx, weights=w * particles.vy[inside], minlength=size)

    has_mass = total > 0
    mean = np.zeros((size, 2))
    mean[has_mass, 0] = sum_vx[has_mass] / total[has_mass]
    mean[has_mass, 1] = sum_vy[has_mass] / total[has_mass]
    p_moving = np.zeros(size)
    moving, _ = motion_probability(np.hypot(mean[has_mass, 0], mean[has_mass, 1]), v_th, k_v)
    p_moving[has_mass] = moving

    shape = spec.shape
    return CellMotionStats(
        mean_velocity=mean.reshape(*shape, 2),
        total_weight=total.reshape(shape),
        particle_count=count.reshape(shape),
        p_moving=p_moving.reshape(shape),
    )


def predict_particles(particles: ParticleSet, dt: float, spec: GridSpec) -> ParticleSet:
    """Constant-velocity motion over ``dt`` seconds; particles leaving the grid are dropped."""
    if not dt > 0:
        raise ValidationError(f"prediction interval must be positive, got {dt!r}")
    moved = ParticleSet(
        particles.x + particles.vx * dt,
        particles.y + particles.vy * dt,
        particles.vx,
        particles.vy,
        particles.weight,
        particles.age,
    )
    return moved.culled(spec)
