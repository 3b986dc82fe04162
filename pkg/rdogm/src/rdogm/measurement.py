"""Second inverse-sensor-model stage: per-cell measurement state vectors.

Classified cells plus the attributes of their governing detection (distance,
range rate, normalised RCS) become one four-state vector per touched cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .errors import ValidationError
from .ism import MeasurementCells
from .model import DYN, FREE, STATIC, UNK, GridMap, GridSpec, Scan, cell_centers, normalize_states

__all__ = [
    "StateParams",
    "MeasurementGrid",
    "distance_weight",
    "free_space_probability",
    "motion_probability",
    "occupied_state_probs",
    "normalize_rcs",
    "build_measurement_grid",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class StateParams:
    """Distance attenuation and range-rate classification parameters."""

    sigma_d: float = 1.0
    v_th: float = 0.5
    k_v: float = 0.1

    def __post_init__(self) -> None:
        for name in ("sigma_d", "v_th", "k_v"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)!r}")


def _scalar_or_array(values: np.ndarray):
    return float(values) if values.ndim == 0 else values


def distance_weight(d, sigma_d: float, normalized: bool = False):
    """Gaussian distance attenuation ``f_d``.

    The plain density is used (``f_d(0) = 1 / (sigma_d * sqrt(2 pi))``) unless
    ``normalized`` asks for the peak-normalised kernel with ``f_d(0) = 1``.
    """
    if not sigma_d > 0:
        raise ValidationError(f"sigma_d must be positive, got {sigma_d!r}")
    d = np.asarray(d, dtype=float)
    f = norm.pdf(d, scale=sigma_d)
    if normalized:
        f = f * sigma_d * _SQRT_2PI
    return _scalar_or_array(f)


def free_space_probability(d_c, sigma_d: float, normalized: bool = False):
    """``1 - f_d(d_c)``: the farther from a detection, the likelier free."""
    d = np.asarray(d_c, dtype=float)
    if np.any(d < 0):
        raise ValidationError("distance to the governing detection must be non-negative")
    return _scalar_or_array(1.0 - np.asarray(distance_weight(d, sigma_d, normalized)))


def motion_probability(v_r, v_th: float, k_v: float):
    """Logistic ``(P(v_r != 0), P(v_r == 0))`` of a range rate."""
    if not k_v > 0:
        raise ValidationError(f"k_v must be positive, got {k_v!r}")
    moving = expit((np.abs(np.asarray(v_r, dtype=float)) - v_th) / k_v)
    return _scalar_or_array(moving), _scalar_or_array(1.0 - moving)


def occupied_state_probs(
    d_c,
    v_r,
    prior_static,
    prior_dyn,
    params: StateParams,
    normalized: bool = False,
):
    """``(P_static, P_dyn)`` of an occupied cell.

    The range-rate evidence weighs in by ``f_d(d_c)``; the remainder keeps the
    cell's prior.
    """
    f = np.asarray(distance_weight(d_c, params.sigma_d, normalized))
    moving, still = motion_probability(v_r, params.v_th, params.k_v)
    p_dyn = f * moving + (1.0 - f) * np.asarray(prior_dyn, dtype=float)
    p_static = f * still + (1.0 - f) * np.asarray(prior_static, dtype=float)
    return _scalar_or_array(np.asarray(p_static)), _scalar_or_array(np.asarray(p_dyn))


def normalize_rcs(scan_or_rcs) -> np.ndarray:
    """Min-max normalise the RCS values of one scan to ``[0, 1]``.

    A scan whose values are all equal (including a single detection) maps to
    all ones.
    """
    rcs = scan_or_rcs.rcs_values if isinstance(scan_or_rcs, Scan) else np.asarray(scan_or_rcs, dtype=float)
    if rcs.size == 0:
        return np.empty(0)
    lo, hi = rcs.min(), rcs.max()
    if hi == lo:
        return np.ones_like(rcs)
    return (rcs - lo) / (hi - lo)


@dataclass(eq=False)
class MeasurementGrid:
    """Measurement state vectors over the whole grid.

    Untouched cells hold the uninformative vector ``(0.25, 0.25, 0.25, 0.25)``.
    ``range_rate`` and ``rcs_norm`` carry the governing detection's values on
    occupied cells and ``nan`` elsewhere.
    """

    spec: GridSpec
    states: np.ndarray
    cells: MeasurementCells
    range_rate: np.ndarray
    rcs_norm: np.ndarray

    @property
    def touched(self) -> np.ndarray:
        return self.cells.touched


def build_measurement_grid(
    scan: Scan,
    cells: MeasurementCells,
    prior: GridMap,
    params: StateParams | None = None,
    normalized: bool = False,
) -> MeasurementGrid:
    """Turn classified cells into normalised per-cell measurement vectors."""
    params = params or StateParams()
    spec = cells.spec
    if prior.spec.shape != spec.shape:
        raise ValidationError("prior grid and measurement cells differ in shape")

    states = np.full((*spec.shape, 4), 0.25)
    range_rate = np.full(spec.shape, np.nan)
    rcs_norm = np.full(spec.shape, np.nan)
    touched = cells.touched

    if len(scan) == 0:
        states[touched] = (1.0, 0.0, 0.0, 0.0)
        return MeasurementGrid(spec, states, cells, range_rate, rcs_norm)

    rcs_all = normalize_rcs(scan)
    det = cells.nearest_det[touched]
    if cells.nearest_dist is not None:
        d = cells.nearest_dist[touched]
    else:
        positions = scan.positions
        cx, cy = cell_centers(spec)
        d = np.hypot(cx[touched] - positions[det, 0], cy[touched] - positions[det, 1])

    raw = np.zeros((len(det), 4))
    free_p = np.asarray(free_space_probability(d, params.sigma_d, normalized))
    free_sel = cells.free[touched]
    unk_sel = cells.unknown[touched]
    occ_sel = cells.occupied[touched]
    raw[free_sel, FREE] = free_p[free_sel]
    raw[unk_sel, UNK] = free_p[unk_sel]

    vr = scan.range_rates[det[occ_sel]]
    prior_cells = prior.cells[touched][occ_sel]
    p_static, p_dyn = occupied_state_probs(
        d[occ_sel], vr, prior_cells[:, STATIC], prior_cells[:, DYN], params, normalized
    )
    raw[occ_sel, STATIC] = p_static
    raw[occ_sel, DYN] = p_dyn

    weight = rcs_all[det][:, None]
    blended = weight * raw + (1.0 - weight) * 0.5
    states[touched] = normalize_states(blended)

    occupied = cells.occupied
    range_rate[occupied] = scan.range_rates[cells.nearest_det[occupied]]
    rcs_norm[occupied] = rcs_all[cells.nearest_det[occupied]]
    return MeasurementGrid(spec, states, cells, range_rate, rcs_norm)
