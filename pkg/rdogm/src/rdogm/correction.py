"""Radar-specific corrections of the measurement grid and of the map.

* the measurement grid is pulled toward the motion the particle filter has
  already accumulated in each cell;
* cells that turn static inside space recently seen as confidently free are
  flipped to dynamic, since only motion can put an object there.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .measurement import MeasurementGrid
from .model import DYN, FREE, STATIC, GridMap, normalize_states

__all__ = [
    "CorrectionParams",
    "FLIP_STATIC_FLOOR",
    "correction_matrix",
    "correct_measurement_grid",
    "update_history_counters",
    "detect_false_static",
]

logger = logging.getLogger(__name__)

FLIP_STATIC_FLOOR = 0.01


@dataclass(frozen=True)
class CorrectionParams:
    """Correction gains and false-static thresholds.

    ``t_static`` / ``t_free`` are cycle counts that must be *exceeded*;
    ``p_free_conf`` is the free probability a cell needs to count as
    high-confidence free space.
    """

    s1: float = 0.5
    d1: float = 0.5
    t_static: int = 4
    t_free: int = 4
    p_free_conf: float = 0.8

    def __post_init__(self) -> None:
        for name in ("s1", "d1"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {getattr(self, name)!r}")
        for name in ("t_static", "t_free"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                raise ValidationError(f"{name} must be an integer >= 1, got {getattr(self, name)!r}")
        if not 0.5 < self.p_free_conf <= 1.0:
            raise ValidationError(f"p_free_conf must lie in (0.5, 1], got {self.p_free_conf!r}")


def correction_matrix(p_moving, s1: float = 0.5, d1: float = 0.5) -> np.ndarray:
    """Column-stochastic correction matrix for one or many cells.

    Unknown and free pass through; the static/dynamic block is::

        | 1 - s1 P(v!=0)    d1 P(v=0)     |
        | s1 P(v!=0)        1 - d1 P(v=0) |
    """
    p = np.asarray(p_moving, dtype=float)
    q = 1.0 - p
    m = np.zeros((*p.shape, 4, 4))
    m[..., 0, 0] = 1.0
    m[..., 1, 1] = 1.0
    m[..., STATIC, STATIC] = 1.0 - s1 * p
    m[..., STATIC, DYN] = d1 * q
    m[..., DYN, STATIC] = s1 * p
    m[..., DYN, DYN] = 1.0 - d1 * q
    return m


def correct_measurement_grid(
    meas: MeasurementGrid,
    cell_motion: np.ndarray,
    params: CorrectionParams | None = None,
) -> MeasurementGrid:
    """Left-multiply every touched cell's vector by its correction matrix.

    ``cell_motion`` is the per-cell ``P(v != 0)``, taken from the particle
    statistics where a cell holds particles.
    """
    params = params or CorrectionParams()
    touched = meas.touched
    if not touched.any():
        return meas
    matrices = correction_matrix(np.asarray(cell_motion)[touched], params.s1, params.d1)
    states = meas.states.copy()
    states[touched] = normalize_states(np.einsum("nij,nj->ni", matrices, meas.states[touched]))
    return replace(meas, states=states)


def update_history_counters(grid: GridMap, params: CorrectionParams | None = None) -> GridMap:
    """Advance the free / static streak counters from the cells' dominant state.

    A confidently free cell extends its free streak and ends any static one. A
    static cell extends its static streak while its free streak stays frozen.
    Anything else clears both.
    """
    params = params or CorrectionParams()
    dominant = grid.dominant_states()
    confident_free = (dominant == FREE) & (grid.cells[..., FREE] >= params.p_free_conf)
    static = dominant == STATIC

    free_streak = np.where(confident_free, grid.free_streak + 1, 0)
    free_streak = np.where(static, grid.free_streak, free_streak)
    static_streak = np.where(static, grid.static_streak + 1, 0)
    return replace(grid, free_streak=free_streak, static_streak=static_streak)


def detect_false_static(
    grid: GridMap,
    params: CorrectionParams | None = None,
) -> tuple[GridMap, list[tuple[int, int]]]:
    """Flip static cells that appeared in confident free space to dynamic.

    Returns the updated grid and the flipped cells in index order. Flipped cells
    have their streaks cleared, so a second call in the same cycle is a no-op.
    """
    params = params or CorrectionParams()
    flip = (grid.static_streak > params.t_static) & (grid.free_streak > params.t_free)
    if not flip.any():
        return grid, []

    cells = grid.cells.copy()
    occupied_mass = cells[flip, STATIC] + cells[flip, DYN]
    cells[flip, DYN] = occupied_mass
    cells[flip, STATIC] = FLIP_STATIC_FLOOR
    cells[flip] = normalize_states(cells[flip])

    flipped = [(int(i), int(j)) for i, j in np.argwhere(flip)]
    logger.debug("false-static detection flipped %d cells", len(flipped))
    return (
        replace(
            grid,
            cells=cells,
            free_streak=np.where(flip, 0, grid.free_streak),
            static_streak=np.where(flip, 0, grid.static_streak),
        ),
        flipped,
    )
