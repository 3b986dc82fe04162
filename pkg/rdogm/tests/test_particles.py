"""Tests for particle birth, weighting, resampling, cell statistics and motion."""

from __future__ import annotations

import math

import numpy as np
import pytest

from rdogm.errors import ValidationError
from rdogm.model import GridSpec, ParticleSet, Pose, RadarDetection, Scan
from rdogm.particles import (
    ParticleParams,
    cell_velocity_stats,
    predict_particles,
    resample,
    resample_target,
    spawn_in_cells,
    spawn_particles,
    update_weights,
)

SPEC = GridSpec(40, 40, 0.2)
PARAMS = ParticleParams()


def radial_and_tangential(particles, unit):
    ux, uy = unit
    radial = particles.vx * ux + particles.vy * uy
    tangential = -particles.vx * uy + particles.vy * ux
    return radial, tangential


def one_particle(x, y, vx, vy, weight=1.0):
    return ParticleSet(x=[x], y=[y], vx=[vx], vy=[vy], weight=[weight], age=[0])


# --------------------------------------------------------------------------
# Birth
# --------------------------------------------------------------------------


def test_spawned_velocities_match_range_rate():
    det = RadarDetection(3.0, 4.0, 5.0, 0.0)
    ps = spawn_particles((15, 20), det, (0.0, 0.0), SPEC, PARAMS, np.random.default_rng(1))
    assert len(ps) == PARAMS.nu_birth
    radial, _ = radial_and_tangential(ps, (0.6, 0.8))
    assert np.all(np.abs(radial - 5.0) <= 1e-9)
    assert np.all(ps.speeds() <= PARAMS.v_max + 1e-9)
    assert np.all(ps.weight == pytest.approx(1.0 / PARAMS.nu_birth))
    assert np.all(ps.age == 0)


def test_spawned_positions_stay_in_their_cell():
    det = RadarDetection(3.0, 4.0, 5.0, 0.0)
    ps = spawn_particles((15, 20), det, (0.0, 0.0), SPEC, PARAMS, np.random.default_rng(2))
    assert np.all((ps.x >= 3.0 - 1e-12) & (ps.x < 3.2))
    assert np.all((ps.y >= 4.0 - 1e-12) & (ps.y < 4.2))


def test_zero_range_rate_gives_tangential_velocities():
    det = RadarDetection(3.0, 4.0, 0.0, 0.0)
    ps = spawn_particles((15, 20), det, (0.0, 0.0), SPEC, PARAMS, np.random.default_rng(3))
    radial, tangential = radial_and_tangential(ps, (0.6, 0.8))
    assert np.all(np.abs(radial) <= 1e-12)
    assert np.any(np.abs(tangential) > 0)


def test_range_rate_beyond_speed_limit_is_clamped():
    det = RadarDetection(3.0, 4.0, -30.0, 0.0)
    ps = spawn_particles((15, 20), det, (0.0, 0.0), SPEC, PARAMS, np.random.default_rng(4))
    radial, tangential = radial_and_tangential(ps, (0.6, 0.8))
    assert radial == pytest.approx([-PARAMS.v_max] * len(ps))
    assert np.all(np.abs(tangential) <= 1e-9)


def test_tangential_limit_is_respected():
    params = ParticleParams(t_tangential_max=1.0, nu_birth=200)
    det = RadarDetection(3.0, 4.0, 2.0, 0.0)
    ps = spawn_particles((15, 20), det, (0.0, 0.0), SPEC, params, np.random.default_rng(5))
    _, tangential = radial_and_tangential(ps, (0.6, 0.8))
    assert np.all(np.abs(tangential) <= 1.0 + 1e-9)


def test_bulk_birth_honours_range_rate_and_speed_limit():
    rng = np.random.default_rng(11)
    k = 1000
    cells = np.column_stack((rng.integers(0, 40, k), rng.integers(0, 40, k)))
    det_xy = rng.uniform(-50.0, 50.0, (k, 2))
    det_vr = rng.uniform(-PARAMS.v_max, PARAMS.v_max, k)
    sensor_xy = (1.5, -0.5)
    ps = spawn_in_cells(cells, det_xy, det_vr, sensor_xy, SPEC, PARAMS, rng)
    assert len(ps) == k * PARAMS.nu_birth == 10_000

    los = det_xy - np.asarray(sensor_xy)
    unit = np.repeat(los / np.linalg.norm(los, axis=1, keepdims=True), PARAMS.nu_birth, axis=0)
    radial = ps.vx * unit[:, 0] + ps.vy * unit[:, 1]
    assert np.max(np.abs(radial - np.repeat(det_vr, PARAMS.nu_birth))) <= 1e-9
    assert np.all(ps.speeds() <= PARAMS.v_max + 1e-9)


def test_spawning_is_deterministic_for_a_seed():
    det = RadarDetection(3.0, 4.0, 1.5, 0.0)
    a = spawn_particles((15, 20), det, (0.0, 0.0), SPEC, PARAMS, np.random.default_rng(9))
    b = spawn_particles((15, 20), det, (0.0, 0.0), SPEC, PARAMS, np.random.default_rng(9))
    assert list(a) == list(b)


@pytest.mark.parametrize(
    "kwargs",
    [{"nu_birth": 0}, {"n_max": 2.5}, {"epsilon": 1.0}, {"sigma_r": 0.0}, {"t_tangential_max": -1.0}],
)
def test_invalid_particle_params(kwargs):
    with pytest.raises(ValidationError):
        ParticleParams(**kwargs)


# --------------------------------------------------------------------------
# Weight update
# --------------------------------------------------------------------------

U = (1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0))


def scan_at(x, y, vr):
    return Scan(0.0, "front", Pose(), (RadarDetection(x, y, vr, 0.0),))


def test_weight_at_matching_detection():
    ps = one_particle(1.0, 1.0, 2.0 * U[0], 2.0 * U[1])
    out = update_weights(ps, scan_at(1.0, 1.0, 2.0), SPEC, (0.0, 0.0), PARAMS)
    assert out.weight[0] == pytest.approx(0.993990, abs=1e-6)
    assert out.age[0] == 1


def test_weight_at_mismatching_detection():
    ps = one_particle(1.0, 1.0, -2.0 * U[0], -2.0 * U[1])
    out = update_weights(ps, scan_at(1.0, 1.0, 2.0), SPEC, (0.0, 0.0), PARAMS)
    assert out.weight[0] == pytest.approx(0.595047, abs=1e-6)


def test_weight_far_from_detections_only_decays():
    spec = GridSpec(400, 400, 0.2)
    ps = one_particle(70.0, 70.0, 1.0, 0.0)
    out = update_weights(ps, scan_at(1.0, 1.0, 2.0), spec, (0.0, 0.0), PARAMS)
    assert out.weight[0] == pytest.approx(0.99)


def test_product_variant():
    ps = one_particle(1.0, 1.0, 2.0 * U[0], 2.0 * U[1])
    out = update_weights(ps, scan_at(1.0, 1.0, 2.0), SPEC, (0.0, 0.0), PARAMS, variant="product")
    f_d = 1.0 / math.sqrt(2.0 * math.pi)
    assert out.weight[0] == pytest.approx(f_d * (1.0 - f_d) * 0.99)


def test_unknown_variant_is_rejected():
    with pytest.raises(ValidationError):
        update_weights(one_particle(0, 0, 0, 0), scan_at(1.0, 1.0, 0.0), SPEC, (0.0, 0.0), PARAMS, variant="sum")


def test_empty_scan_applies_decay():
    ps = ParticleSet(x=[0.5, 1.5], y=[0.5, 0.5], vx=[0, 0], vy=[0, 0], weight=[0.2, 0.4], age=[3, 0])
    out = update_weights(ps, Scan(0.0, "front", Pose()), SPEC, (0.0, 0.0), PARAMS)
    assert out.weight == pytest.approx([0.198, 0.396])
    assert out.age.tolist() == [4, 1]


def test_weights_never_increase():
    rng = np.random.default_rng(17)
    n = 500
    ps = ParticleSet(
        x=rng.uniform(0, 8, n), y=rng.uniform(0, 8, n),
        vx=rng.normal(0, 5, n), vy=rng.normal(0, 5, n),
        weight=rng.uniform(0, 1, n), age=np.zeros(n, dtype=np.int64),
    )
    detections = tuple(
        RadarDetection(x, y, vr, 0.0)
        for x, y, vr in zip(rng.uniform(0, 8, 20), rng.uniform(0, 8, 20), rng.normal(0, 3, 20))
    )
    out = update_weights(ps, Scan(0.0, "front", Pose(), detections), SPEC, (-1.0, 4.0), PARAMS)
    assert np.all(out.weight <= ps.weight + 1e-15)
    assert np.all(out.weight >= 0)


# --------------------------------------------------------------------------
# Resampling
# --------------------------------------------------------------------------


def weighted(weights):
    n = len(weights)
    return ParticleSet(x=np.arange(n), y=np.zeros(n), vx=np.zeros(n), vy=np.zeros(n), weight=weights, age=np.arange(n))


def offspring(resampled, n):
    return np.bincount(resampled.x.astype(int), minlength=n).tolist()


@pytest.mark.parametrize("offset", [0.0, 0.5, 0.999])
def test_equal_weights_copy_each_particle_once(offset):
    out = resample(weighted([0.25] * 4), 4, offset=offset)
    assert offspring(out, 4) == [1, 1, 1, 1]


def test_degenerate_weights_copy_one_particle():
    out = resample(weighted([1.0, 0.0, 0.0, 0.0]), 4, offset=0.3)
    assert offspring(out, 4) == [4, 0, 0, 0]


def test_systematic_resampling_hand_trace():
    out = resample(weighted([0.5, 0.25, 0.125, 0.125]), 8, offset=0.05)
    assert offspring(out, 4) == [4, 2, 1, 1]
    assert out.weight == pytest.approx([1.0 / 8] * 8)


def test_resample_keeps_total_weight_and_ages():
    ps = weighted([0.3, 0.1, 0.7, 0.4])
    out = resample(ps, 9, rng=np.random.default_rng(0))
    assert out.total_weight == pytest.approx(ps.total_weight)
    assert np.array_equal(out.age, out.x.astype(int))


def test_resample_of_zero_weight_is_empty():
    assert len(resample(weighted([0.0, 0.0]), 5, offset=0.1)) == 0


def test_resample_needs_randomness():
    with pytest.raises(ValidationError):
        resample(weighted([1.0]), 2)


def test_resampling_is_unbiased():
    weights = np.array([0.05, 0.3, 0.15, 0.4, 0.1])
    target = 7
    rng = np.random.default_rng(2024)
    runs = 10_000
    counts = np.zeros(len(weights))
    ps = weighted(weights)
    for _ in range(runs):
        counts += offspring(resample(ps, target, rng=rng), len(weights))
    # systematic counts differ from the expectation by at most one, so sigma <= 0.5 / sqrt(runs)
    assert counts / runs == pytest.approx(weights * target, abs=4 * 0.5 / math.sqrt(runs))


@pytest.mark.parametrize("mass,expected", [(0.0, 0), (3.2, 160), (0.001, 1), (1e6, PARAMS.n_max)])
def test_resample_target(mass, expected):
    assert resample_target(mass, PARAMS) == expected


# --------------------------------------------------------------------------
# Cell statistics and prediction
# --------------------------------------------------------------------------


def test_cell_velocity_stats():
    spec = GridSpec(4, 4, 1.0)
    ps = ParticleSet(
        x=[1.5, 1.2, 0.3, 0.7],
        y=[2.5, 2.1, 0.3, 0.7],
        vx=[3.0, 3.0, 2.0, -2.0],
        vy=[0.0, 0.0, 0.0, 0.0],
        weight=[0.5, 0.5, 0.2, 0.2],
        age=[0, 0, 0, 0],
    )
    stats = cell_velocity_stats(ps, spec)
    assert stats.mean_velocity[1, 2] == pytest.approx([3.0, 0.0])
    assert stats.p_moving[1, 2] == pytest.approx(1.0)
    assert stats.mean_velocity[0, 0] == pytest.approx([0.0, 0.0])
    assert stats.p_moving[0, 0] == pytest.approx(0.006693, abs=1e-6)
    assert stats.p_moving[3, 3] == 0.0
    assert stats.particle_count[1, 2] == 2
    assert stats.total_weight[0, 0] == pytest.approx(0.4)


def test_predict_moves_particles():
    ps = ParticleSet(x=[1.0, 0.5], y=[1.0, 0.5], vx=[1.0, 0.0], vy=[0.0, 0.0], weight=[1, 1], age=[0, 0])
    out = predict_particles(ps, 0.1, SPEC)
    assert out.x == pytest.approx([1.1, 0.5])
    assert out.y == pytest.approx([1.0, 0.5])


def test_predict_culls_particles_leaving_the_grid():
    spec = GridSpec(10, 10, 0.2)
    out = predict_particles(one_particle(1.95, 1.0, 1.0, 0.0), 0.1, spec)
    assert len(out) == 0


@pytest.mark.parametrize("dt", [0.0, -0.1])
def test_predict_rejects_non_positive_interval(dt):
    with pytest.raises(ValidationError):
        predict_particles(one_particle(1.0, 1.0, 0.0, 0.0), dt, SPEC)
