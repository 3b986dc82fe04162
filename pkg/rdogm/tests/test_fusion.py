"""Tests for fusion, state transition, dynamic-mass bookkeeping and the pipeline step."""

from __future__ import annotations

import math
import time
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from rdogm.correction import CorrectionParams, correct_measurement_grid
from rdogm.errors import TimestampError, ValidationError
from rdogm.fusion import (
    DogmPipeline,
    Mode,
    PipelineConfig,
    bayes_fuse,
    bayes_fuse_grid,
    distribute_dynamic_mass,
    distribute_dynamic_mass_grid,
    move_dynamic_mass,
    open_prior,
    step,
    transition_grid,
    transition_matrix,
    transition_states,
)
from rdogm.ism import MeasurementCells
from rdogm.measurement import StateParams, build_measurement_grid
from rdogm.model import (
    DYN,
    STATIC,
    CellState,
    GridSpec,
    ParticleSet,
    Pose,
    RadarDetection,
    Scan,
    SensorConfig,
    new_grid,
    world_to_cell,
)
from rdogm.particles import ParticleParams

FRONT = SensorConfig("front", Pose(), 30.0, math.radians(60.0))


def small_config(**overrides):
    values = dict(grid=GridSpec(100, 100, 0.2), sensors=(FRONT,), seed=1)
    values.update(overrides)
    return PipelineConfig(**values)


def random_scan(rng, t, n=15):
    detections = tuple(
        RadarDetection(x, y, vr, rcs)
        for x, y, vr, rcs in zip(
            rng.uniform(1, 9, n), rng.uniform(-6, 6, n), rng.normal(0, 4, n), rng.normal(0, 5, n)
        )
    )
    return Scan(t, "front", Pose(), detections)


# --------------------------------------------------------------------------
# Bayesian fusion
# --------------------------------------------------------------------------


def test_uniform_measurement_keeps_prior():
    prior = CellState(0.1, 0.2, 0.3, 0.4)
    assert bayes_fuse(prior, CellState(0.25, 0.25, 0.25, 0.25)).as_array() == pytest.approx(prior.as_array())


def test_uniform_prior_returns_measurement():
    meas = CellState(0.05, 0.15, 0.5, 0.3)
    assert bayes_fuse(CellState(0.25, 0.25, 0.25, 0.25), meas).as_array() == pytest.approx(meas.as_array())


def test_fusion_worked_example():
    post = bayes_fuse(CellState(0.1, 0.1, 0.6, 0.2), CellState(0.0, 0.0, 0.0067, 0.9933))
    assert post.as_array() == pytest.approx([0.0, 0.0, 0.0198, 0.9802], abs=1e-4)


def test_total_conflict_falls_back_to_uniform():
    post = bayes_fuse(CellState(1.0, 0.0, 0.0, 0.0), CellState(0.0, 1.0, 0.0, 0.0))
    assert post.as_array() == pytest.approx([0.25] * 4)


def test_grid_fusion_matches_exact_oracle():
    rng = np.random.default_rng(42)
    prior = rng.dirichlet(np.ones(4), size=1000)
    meas = rng.dirichlet(np.ones(4), size=1000)
    fused = bayes_fuse_grid(prior, meas)
    for p, m, out in zip(prior, meas, fused):
        products = [Fraction(float(a)) * Fraction(float(b)) for a, b in zip(p, m)]
        total = sum(products)
        expected = [float(x / total) for x in products]
        assert np.max(np.abs(out - expected)) <= 1e-12


def test_open_prior_spreads_unknown_mass():
    opened = open_prior(np.array([0.4, 0.2, 0.3, 0.1]))
    assert opened == pytest.approx([0.1, 0.3, 0.4, 0.2])
    assert opened.sum() == pytest.approx(1.0)


# --------------------------------------------------------------------------
# Transition
# --------------------------------------------------------------------------


@pytest.mark.parametrize(
    "cell,p_moving,expected",
    [
        ((0, 1, 0, 0), 0.3, (0.1, 0.9, 0, 0)),
        ((0, 0, 1, 0), 0.0, (0.1, 0, 0.9, 0)),
        ((0, 0, 0, 1), 1.0, (0.05, 0, 0, 0.95)),
        ((1, 0, 0, 0), 0.7, (1, 0, 0, 0)),
    ],
)
def test_transition_examples(cell, p_moving, expected):
    out = transition_states(CellState(*cell), p_moving)
    assert out.as_array() == pytest.approx(expected)


@pytest.mark.parametrize("p", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_transition_columns_sum_to_one(p):
    assert np.abs(transition_matrix(p).sum(axis=0) - 1.0).max() <= 1e-12


def test_transition_grid_matches_matrix_product():
    rng = np.random.default_rng(3)
    states = rng.dirichlet(np.ones(4), size=(6, 7))
    p = rng.uniform(0, 1, (6, 7))
    expected = np.einsum("abij,abj->abi", transition_matrix(p), states)
    assert transition_grid(states, p) == pytest.approx(expected)


def test_transition_rejects_bad_probability():
    with pytest.raises(ValidationError):
        transition_states(CellState(1, 0, 0, 0), 1.5)


# --------------------------------------------------------------------------
# Dynamic mass and particles
# --------------------------------------------------------------------------


@pytest.mark.parametrize(
    "weights,p_dyn,expected",
    [([1.0], 0.8, [0.8]), ([2.0, 2.0], 0.5, [0.25, 0.25]), ([3.0, 1.0], 0.4, [0.3, 0.1])],
)
def test_distribute_dynamic_mass(weights, p_dyn, expected):
    cell = CellState(1.0 - p_dyn, 0.0, 0.0, p_dyn)
    assert distribute_dynamic_mass(cell, np.array(weights)) == pytest.approx(expected)


def test_distribute_dynamic_mass_grid_and_spawn_queue():
    spec = GridSpec(2, 2, 1.0)
    states = np.zeros((2, 2, 4))
    states[..., 0] = 1.0
    states[0, 0] = (0.3, 0.2, 0.1, 0.4)
    states[1, 1] = (0.1, 0.1, 0.1, 0.7)
    ps = ParticleSet(x=[0.2, 0.6], y=[0.2, 0.3], vx=[1, 1], vy=[0, 0], weight=[3.0, 1.0], age=[0, 0])
    out, empty = distribute_dynamic_mass_grid(states, ps, spec)
    assert out.weight == pytest.approx([0.3, 0.1])
    assert empty.tolist() == [[False, False], [False, True]]


def test_dynamic_mass_follows_particles():
    spec = GridSpec(2, 1, 1.0)
    states = np.array([[[0.0, 0.5, 0.2, 0.3]], [[0.5, 0.5, 0.0, 0.0]]])
    # the particle that carried cell (0, 0)'s mass has moved into cell (1, 0)
    ps = ParticleSet(x=[1.5], y=[0.5], vx=[1.0], vy=[0.0], weight=[0.3], age=[1])
    out = move_dynamic_mass(states, ps, spec)
    assert out[0, 0] == pytest.approx([0.3, 0.5, 0.2, 0.0])
    assert out[1, 0] == pytest.approx([0.35, 0.35, 0.0, 0.3])


# --------------------------------------------------------------------------
# Pipeline configuration
# --------------------------------------------------------------------------


def test_unknown_sensor_is_rejected():
    with pytest.raises(ValidationError):
        small_config().sensor("rear")


def test_duplicate_sensor_ids_are_rejected():
    with pytest.raises(ValidationError):
        small_config(sensors=(FRONT, FRONT))


def test_unknown_weight_variant_is_rejected():
    with pytest.raises(ValidationError):
        small_config(eq16_variant="sum")


def test_mode_accepts_its_string_value():
    assert small_config(mode="hsbof-rs").mode is Mode.HSBOF_RS


# --------------------------------------------------------------------------
# Pipeline step
# --------------------------------------------------------------------------


def test_empty_scans_keep_cells_normalised():
    pipeline = DogmPipeline(small_config())
    for k in range(5):
        report = pipeline.process(Scan(0.1 * (k + 1), "front", Pose()))
        assert report.particle_count == 0
    assert np.abs(pipeline.grid.cells.sum(axis=-1) - 1.0).max() <= 1e-9
    assert pipeline.grid.cycle == 5


@pytest.mark.parametrize("mode", list(Mode))
def test_random_scans_keep_cells_normalised(mode):
    rng = np.random.default_rng(8)
    pipeline = DogmPipeline(small_config(mode=mode))
    for k in range(6):
        pipeline.process(random_scan(rng, 0.1 * (k + 1)))
        assert np.abs(pipeline.grid.cells.sum(axis=-1) - 1.0).max() <= 1e-9
        assert np.all(pipeline.grid.cells >= 0)


def test_particle_weights_match_dynamic_mass():
    rng = np.random.default_rng(4)
    pipeline = DogmPipeline(small_config())
    for k in range(4):
        pipeline.process(random_scan(rng, 0.1 * (k + 1)))
    grid, ps = pipeline.grid, pipeline.particles
    assert len(ps) > 0
    flat, inside = ps.cell_indices(grid.spec)
    size = grid.spec.width_cells * grid.spec.height_cells
    carried = np.bincount(flat[inside], weights=ps.weight[inside], minlength=size)
    held = np.bincount(flat[inside], minlength=size) > 0
    assert carried[held] == pytest.approx(grid.cells[..., DYN].reshape(-1)[held], abs=1e-6)


def test_runs_are_deterministic():
    def run():
        rng = np.random.default_rng(21)
        pipeline = DogmPipeline(small_config(seed=5))
        for k in range(5):
            pipeline.process(random_scan(rng, 0.1 * (k + 1)))
        return pipeline

    a, b = run(), run()
    assert np.array_equal(a.grid.cells, b.grid.cells)
    for name in ("x", "y", "vx", "vy", "weight", "age"):
        assert np.array_equal(getattr(a.particles, name), getattr(b.particles, name))


def test_non_increasing_timestamp_is_rejected():
    pipeline = DogmPipeline(small_config())
    pipeline.process(Scan(0.5, "front", Pose()))
    with pytest.raises(TimestampError):
        pipeline.process(Scan(0.5, "front", Pose()))


def test_particle_count_respects_cap():
    rng = np.random.default_rng(6)
    pipeline = DogmPipeline(small_config(particles=ParticleParams(n_max=50)))
    for k in range(4):
        report = pipeline.process(random_scan(rng, 0.1 * (k + 1), n=40))
        assert report.particle_count <= 50


def test_baseline_mode_skips_radar_corrections():
    rng = np.random.default_rng(2)
    pipeline = DogmPipeline(small_config(mode=Mode.HSBOF_RS))
    for k in range(6):
        report = pipeline.process(random_scan(rng, 0.1 * (k + 1)))
        assert report.flipped_cells == 0
        assert report.mode == "hsbof-rs"
    assert not pipeline.grid.free_streak.any()
    assert not pipeline.grid.static_streak.any()


def test_static_target_converges_to_static():
    pipeline = DogmPipeline(small_config())
    target = (8.1, 0.1)
    spawned = 0
    for k in range(20):
        scan = Scan(0.1 * (k + 1), "front", Pose(), (RadarDetection(*target, 0.0, 10.0),))
        report = pipeline.process(scan)
        spawned += report.spawned
        i, j = world_to_cell(pipeline.grid.spec, *target)
        assert pipeline.grid.cell(i, j).dominant == STATIC
    assert spawned == 0
    assert len(pipeline.particles) == 0


def test_grid_follows_the_ego():
    pipeline = DogmPipeline(small_config())
    pipeline.process(Scan(0.1, "front", Pose(0.0, 0.0, 0.0)))
    start = pipeline.grid.spec.origin
    pipeline.process(Scan(0.2, "front", Pose(1.0, -0.4, 0.0)))
    assert pipeline.grid.spec.origin == pytest.approx((start[0] + 1.0, start[1] - 0.4))


def test_fresh_moving_detection_stays_dynamic_and_spawns():
    pipeline = DogmPipeline(small_config())
    target = (8.1, 0.1)
    report = pipeline.process(Scan(0.1, "front", Pose(), (RadarDetection(*target, 3.0, 10.0),)))
    i, j = world_to_cell(pipeline.grid.spec, *target)
    assert pipeline.grid.cell(i, j).dominant == DYN
    assert report.spawned > 0
    assert report.particle_count > 0


def test_receding_target_keeps_particles():
    pipeline = DogmPipeline(small_config())
    for k in range(10):
        t = 0.1 * (k + 1)
        x = 3.0 + 5.0 * t
        detections = tuple(RadarDetection(x, y, 5.0, 10.0) for y in (-0.3, 0.0, 0.3))
        report = pipeline.process(Scan(t, "front", Pose(), detections))
        i, j = world_to_cell(pipeline.grid.spec, x, 0.0)
        assert pipeline.grid.cell(i, j).dominant == DYN
        assert report.particle_count > 0


# --------------------------------------------------------------------------
# Normalisation through a whole cycle
# --------------------------------------------------------------------------


def test_hundred_thousand_cells_stay_normalised_through_every_stage():
    rng = np.random.default_rng(13)
    spec = GridSpec(400, 250, 0.2)
    shape = spec.shape
    n_det = 60
    scan = Scan(
        0.1,
        "front",
        Pose(),
        tuple(
            RadarDetection(x, y, vr, rcs)
            for x, y, vr, rcs in zip(
                rng.uniform(0, 80, n_det), rng.uniform(0, 50, n_det), rng.normal(0, 6, n_det), rng.normal(0, 8, n_det)
            )
        ),
    )
    prior_cells = rng.dirichlet(np.ones(4), size=shape)
    # some cells start in a pure state
    pure = rng.random(shape) < 0.05
    prior_cells[pure] = np.eye(4)[rng.integers(0, 4, pure.sum())]
    prior = replace(new_grid(spec), cells=prior_cells)

    started = time.perf_counter()
    kind = rng.integers(0, 4, shape)
    cells = MeasurementCells(
        spec,
        unknown=kind == 1,
        free=kind == 2,
        occupied=kind == 3,
        nearest_det=np.where(kind > 0, rng.integers(0, n_det, shape), -1),
        nearest_dist=rng.uniform(0.0, 3.0, shape),
    )
    meas = build_measurement_grid(scan, cells, prior, StateParams())
    corrected = correct_measurement_grid(meas, rng.random(shape), CorrectionParams())
    touched = corrected.touched
    fused = prior_cells.copy()
    fused[touched] = bayes_fuse_grid(open_prior(prior_cells[touched]), corrected.states[touched])
    moved = transition_grid(fused, rng.random(shape))
    elapsed = time.perf_counter() - started

    for states in (meas.states, corrected.states, fused, moved):
        assert states.shape == (400, 250, 4)
        assert np.abs(states.sum(axis=-1) - 1.0).max() <= 1e-9
        assert np.all(states >= 0)
    assert elapsed < 5.0


@pytest.mark.slow
def test_full_size_step_stays_within_real_time_budget():
    rng = np.random.default_rng(17)
    config = PipelineConfig()
    spec = GridSpec.centered((0.0, 0.0), 300, 300, 0.2)
    grid = replace(new_grid(spec, (0.0, 0.0)), t=0.0)
    n = 10_000
    particles = ParticleSet(
        x=rng.uniform(0.0, 60.0, n),
        y=rng.uniform(0.0, 60.0, n),
        vx=rng.normal(0.0, 5.0, n),
        vy=rng.normal(0.0, 5.0, n),
        weight=np.full(n, 1e-3),
        age=rng.integers(0, 10, n),
    )
    detections = tuple(
        RadarDetection(x, y, vr, rcs)
        for x, y, vr, rcs in zip(
            rng.uniform(5.0, 29.0, 200), rng.uniform(-20.0, 20.0, 200), rng.normal(0, 4, 200), rng.normal(5, 5, 200)
        )
    )
    scan = Scan(0.1, "front", Pose(), detections)

    step(grid, particles, scan, config, np.random.default_rng(0))
    times = []
    for k in range(7):
        started = time.perf_counter()
        step(grid, particles, scan, config, np.random.default_rng(k))
        times.append(time.perf_counter() - started)
    assert np.median(times) < 0.05
