"""Tests for the grid geometry, cell states and ego-centred recentring."""

from __future__ import annotations

import math

import numpy as np
import pytest

from rdogm.errors import ValidationError
from rdogm.model import (
    DYN,
    UNK,
    CellState,
    GridSpec,
    Particle,
    ParticleSet,
    Pose,
    RadarDetection,
    Scan,
    SensorConfig,
    cell_center,
    cell_centers,
    new_grid,
    normalize_states,
    recenter,
    world_to_cell,
)


def marked_grid(width=10, height=10):
    """A grid whose cell (i, j) carries p_dyn = (i * height + j) / (width * height)."""
    grid = new_grid(GridSpec(width, height, 0.2), ego_xy=(1.0, 1.0))
    cells = grid.cells.copy()
    marks = np.arange(width * height).reshape(width, height) / (width * height)
    cells[..., DYN] = marks
    cells[..., UNK] = 1.0 - marks
    grid.cells = cells
    return grid


# --------------------------------------------------------------------------
# GridSpec / new_grid
# --------------------------------------------------------------------------


def test_new_grid_is_pure_unknown_with_clear_history():
    grid = new_grid(GridSpec(10, 10))
    assert grid.cells.shape == (10, 10, 4)
    assert np.all(grid.cells[..., UNK] == 1.0)
    assert np.allclose(grid.cells.sum(axis=-1), 1.0)
    assert not grid.free_streak.any() and not grid.static_streak.any()
    assert grid.cycle == 0
    assert grid.t is None


def test_single_cell_grid():
    grid = new_grid(GridSpec(1, 1))
    assert grid.cell(0, 0) == CellState(1.0, 0.0, 0.0, 0.0)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"width_cells": 10, "height_cells": 10, "cell_size": 0.0},
        {"width_cells": 10, "height_cells": 10, "cell_size": -0.2},
        {"width_cells": 0, "height_cells": 10},
        {"width_cells": 10, "height_cells": 2.5},
    ],
)
def test_invalid_spec_is_rejected(kwargs):
    with pytest.raises(ValidationError):
        GridSpec(**kwargs)


def test_centered_spec_puts_center_on_point():
    spec = GridSpec.centered((5.0, -3.0), 100, 50, 0.2)
    assert spec.center == pytest.approx((5.0, -3.0))
    assert spec.origin == pytest.approx((-5.0, -8.0))


# --------------------------------------------------------------------------
# Coordinates
# --------------------------------------------------------------------------


def test_world_to_cell_origin_corner_and_outside():
    spec = GridSpec(10, 10, 0.2, origin=(-1.0, -1.0))
    assert world_to_cell(spec, -1.0, -1.0) == (0, 0)
    assert world_to_cell(spec, -1.01, 0.0) is None
    assert world_to_cell(spec, 1.0, 0.0) is None
    assert world_to_cell(spec, 0.0, 5.0) is None


def test_cell_centers_are_cached_and_read_only():
    spec = GridSpec(7, 5, 0.2, origin=(-3.3, 12.1))
    cx, cy = cell_centers(spec)
    assert cell_centers(GridSpec(7, 5, 0.2, origin=(-3.3, 12.1)))[0] is cx
    assert cx.shape == cy.shape == (7, 5)
    with pytest.raises(ValueError):
        cx[0, 0] = 0.0
    assert cell_centers(spec.shifted(1, 0))[0][0, 0] == pytest.approx(cx[1, 0])


def test_point_on_interior_edge_belongs_to_higher_cell():
    spec = GridSpec(10, 10, 0.2)
    assert world_to_cell(spec, 0.6, 0.1) == (3, 0)
    assert world_to_cell(spec, 0.2, 0.4) == (1, 2)


def test_cell_center_round_trips_for_every_cell():
    spec = GridSpec(7, 5, 0.2, origin=(-3.3, 12.1))
    for i in range(spec.width_cells):
        for j in range(spec.height_cells):
            assert world_to_cell(spec, *cell_center(spec, i, j)) == (i, j)


# --------------------------------------------------------------------------
# Cell states
# --------------------------------------------------------------------------


def test_normalize_states_rescales_and_handles_zero_rows():
    states = np.array([[2.0, 1.0, 1.0, 0.0], [0.0, 0.0, 0.0, 0.0]])
    out = normalize_states(states)
    assert out[0] == pytest.approx([0.5, 0.25, 0.25, 0.0])
    assert out[1] == pytest.approx([0.25] * 4)


def test_cell_state_rejects_out_of_range_probability():
    with pytest.raises(ValidationError):
        CellState(1.2, 0.0, 0.0, -0.2)


def test_cell_state_dominant_state():
    assert CellState(0.1, 0.2, 0.3, 0.4).dominant == DYN


# --------------------------------------------------------------------------
# Recentring
# --------------------------------------------------------------------------


def test_zero_displacement_leaves_grid_unchanged():
    grid = marked_grid()
    moved = recenter(grid, grid.ego_xy)
    assert np.array_equal(moved.cells, grid.cells)
    assert moved.spec == grid.spec


def test_one_cell_shift_brings_in_unknown_column():
    grid = marked_grid()
    moved = recenter(grid, (grid.ego_xy[0] + 0.2, grid.ego_xy[1]))
    assert np.array_equal(moved.cells[:-1], grid.cells[1:])
    assert np.all(moved.cells[-1, :, UNK] == 1.0)
    assert moved.spec.origin == pytest.approx((0.2, 0.0))


def test_sub_cell_displacement_accumulates_in_residual():
    grid = marked_grid()
    x0, y0 = grid.ego_xy
    once = recenter(grid, (x0 + 0.27, y0))
    assert once.spec.origin[0] == pytest.approx(grid.spec.origin[0] + 0.2)
    assert once.ego_residual[0] == pytest.approx(0.07)
    # 0.27 more plus the 0.07 carried over rounds to two cells
    twice = recenter(once, (x0 + 0.54, y0))
    assert twice.spec.origin[0] == pytest.approx(grid.spec.origin[0] + 0.6)
    assert twice.ego_residual[0] == pytest.approx(-0.06)


def test_two_recenters_equal_one_combined():
    grid = marked_grid(20, 20)
    x0, y0 = grid.ego_xy
    a = (0.47, -0.61)
    b = (0.81, 0.25)
    stepwise = recenter(recenter(grid, (x0 + a[0], y0 + a[1])), (x0 + a[0] + b[0], y0 + a[1] + b[1]))
    direct = recenter(grid, (x0 + a[0] + b[0], y0 + a[1] + b[1]))
    assert stepwise.spec.origin == pytest.approx(direct.spec.origin)
    # stepwise shifts (+2, -3) then (+4, +1); direct shifts (+6, -2)
    survivors = (slice(0, 20 - 6), slice(2, 20 - 1))
    assert np.array_equal(stepwise.cells[survivors], direct.cells[survivors])
    # the -3 then +1 row shift loses the last row that the direct shift keeps
    assert np.all(stepwise.cells[:, -1, UNK] == 1.0)
    assert not np.all(direct.cells[:14, -1, UNK] == 1.0)


def test_full_shift_yields_all_unknown():
    grid = marked_grid()
    moved = recenter(grid, (grid.ego_xy[0] + 50.0, grid.ego_xy[1]))
    assert np.all(moved.cells[..., UNK] == 1.0)


def test_recenter_does_not_touch_input():
    grid = marked_grid()
    before = grid.cells.copy()
    recenter(grid, (grid.ego_xy[0] + 1.0, grid.ego_xy[1]))
    assert np.array_equal(grid.cells, before)


# --------------------------------------------------------------------------
# Particles, detections, scans, sensors
# --------------------------------------------------------------------------


def test_particle_set_round_trips_particles():
    items = [Particle(0.1, 0.2, 1.0, 0.0, 0.5, 3), Particle(1.5, 0.3, 0.0, -2.0, 0.25, 0)]
    ps = ParticleSet.from_particles(items)
    assert len(ps) == 2
    assert list(ps) == items
    assert ps.total_weight == pytest.approx(0.75)


def test_particle_cells_and_culling():
    spec = GridSpec(4, 4, 0.5)
    ps = ParticleSet(x=[0.1, 1.9, 2.1, -0.1], y=[0.1, 0.6, 0.1, 0.1], vx=[0] * 4, vy=[0] * 4, weight=[1] * 4, age=[0] * 4)
    flat, inside = ps.cell_indices(spec)
    assert inside.tolist() == [True, True, False, False]
    assert flat[:2].tolist() == [0, 3 * 4 + 1]
    assert len(ps.culled(spec)) == 2


def test_particle_set_rejects_ragged_arrays():
    with pytest.raises(ValidationError):
        ParticleSet(x=[0.0, 1.0], y=[0.0], vx=[0.0], vy=[0.0], weight=[1.0], age=[0])


def test_detection_must_be_finite():
    with pytest.raises(ValidationError):
        RadarDetection(1.0, math.nan, 0.0, 0.0)
    with pytest.raises(ValidationError):
        RadarDetection(1.0, 0.0, math.inf, 0.0)


def test_scan_arrays():
    scan = Scan(0.1, "front", Pose(), (RadarDetection(1.0, 2.0, -0.5, 3.0),))
    assert scan.positions.shape == (1, 2)
    assert scan.range_rates.tolist() == [-0.5]
    empty = Scan(0.2, "front", Pose())
    assert empty.positions.shape == (0, 2)


def test_sensor_world_pose_composes_mount():
    sensor = SensorConfig("corner", Pose(1.0, 0.5, math.pi / 2), 50.0, math.radians(60))
    pose = sensor.world_pose(Pose(10.0, 0.0, math.pi / 2))
    assert pose.x == pytest.approx(9.5)
    assert pose.y == pytest.approx(1.0)
    assert pose.yaw == pytest.approx(math.pi)


@pytest.mark.parametrize("max_range,span", [(0.0, 1.0), (10.0, 0.0), (10.0, 4.0)])
def test_sensor_config_validation(max_range, span):
    with pytest.raises(ValidationError):
        SensorConfig("s", Pose(), max_range, span)
