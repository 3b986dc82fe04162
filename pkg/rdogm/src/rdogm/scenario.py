"""Synthetic radar scenarios with ground truth.

Objects are rectangles moving at constant velocity. Every frame, every sensor
sees points on the object edges that face it, with polar noise, an
ego-compensated range rate and a class-dependent RCS, plus Poisson clutter.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .evaluation import CLASS_LABELS, GtFrame, GtObject
from .model import Pose, RadarDetection, Scan, SensorConfig, default_sensor_suite

__all__ = [
    "SCENARIO_KINDS",
    "RCS_BY_CLASS",
    "ScenarioObject",
    "ScenarioParams",
    "scene_objects",
    "generate_scenario",
]

logger = logging.getLogger(__name__)

SCENARIO_KINDS = ("crossing-vehicle", "crossing-pedestrian", "static-world", "custom")

DEFAULT_SPEED = {
    "crossing-vehicle": 8.33,
    "crossing-pedestrian": 1.4,
    "static-world": 0.0,
    "custom": 0.0,
}
DEFAULT_DURATION = {
    "crossing-vehicle": 6.0,
    "crossing-pedestrian": 10.0,
    "static-world": 5.0,
    "custom": 5.0,
}

# (mean, sigma) in dBsm; placeholders, not measured values
RCS_BY_CLASS = {
    "car": (10.0, 3.0),
    "large": (15.0, 3.0),
    "two_wheeler": (2.0, 3.0),
    "pedestrian": (-5.0, 3.0),
    "pedestrian_group": (0.0, 3.0),
}


@dataclass(frozen=True)
class ScenarioObject:
    """A box of ``length`` x ``width`` metres, long side along its heading.

    ``labelled`` objects appear in the ground truth; unlabelled ones are
    static scenery.
    """

    id: str
    class_label: str
    start: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    length: float = 4.5
    width: float = 1.8
    heading: float | None = None
    labelled: bool = True

    def __post_init__(self) -> None:
        if self.class_label not in CLASS_LABELS:
            raise ValidationError(f"{self.id}: unknown class {self.class_label!r}")
        if not (self.length > 0 and self.width > 0):
            raise ValidationError(f"{self.id}: box dimensions must be positive")

    def center(self, t: float) -> tuple[float, float]:
        return (self.start[0] + self.velocity[0] * t, self.start[1] + self.velocity[1] * t)

    def yaw(self) -> float:
        if self.heading is not None:
            return self.heading
        vx, vy = self.velocity
        return math.atan2(vy, vx) if (vx or vy) else 0.0

    def corners(self, t: float) -> np.ndarray:
        """Corners in counter-clockwise order, shape ``(4, 2)``."""
        cx, cy = self.center(t)
        c, s = math.cos(self.yaw()), math.sin(self.yaw())
        half = np.array([[1, -1], [1, 1], [-1, 1], [-1, -1]]) * (self.length / 2.0, self.width / 2.0)
        rot = np.array([[c, -s], [s, c]])
        return half @ rot.T + (cx, cy)


@dataclass(frozen=True)
class ScenarioParams:
    """Scenario kind, object and ego motion, noise and clutter levels.

    ``object_speed`` and ``duration`` default per kind when left ``None``.
    """

    kind: str = "crossing-vehicle"
    object_speed: float | None = None
    ego_speed: float = 0.0
    frame_rate: float = 10.0
    duration: float | None = None
    detections_per_object: tuple[int, int] = (3, 8)
    range_noise: float = 0.15
    azimuth_noise: float = math.radians(0.5)
    vr_noise: float = 0.1
    clutter_rate: float = 2.0
    rcs_object: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(RCS_BY_CLASS))
    rcs_clutter_offset: float = 15.0
    rcs_clutter_sigma: float = 3.0
    clutter_max_range: float = 40.0
    seed: int = 0
    objects: tuple[ScenarioObject, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in SCENARIO_KINDS:
            raise ValidationError(f"unknown scenario {self.kind!r}, expected one of {SCENARIO_KINDS}")
        if self.object_speed is not None and self.object_speed < 0:
            raise ValidationError("object_speed must be non-negative")
        if self.ego_speed < 0:
            raise ValidationError("ego_speed must be non-negative")
        if not self.frame_rate > 0:
            raise ValidationError("frame_rate must be positive")
        if self.duration is not None and not self.duration > 0:
            raise ValidationError("duration must be positive")
        lo, hi = self.detections_per_object
        if not 1 <= lo <= hi:
            raise ValidationError(f"detections_per_object must satisfy 1 <= lo <= hi, got {(lo, hi)}")
        for name in ("range_noise", "azimuth_noise", "vr_noise", "clutter_rate", "rcs_clutter_sigma"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")
        object.__setattr__(self, "objects", tuple(self.objects))

    @property
    def speed(self) -> float:
        return DEFAULT_SPEED[self.kind] if self.object_speed is None else self.object_speed

    @property
    def total_duration(self) -> float:
        return DEFAULT_DURATION[self.kind] if self.duration is None else self.duration

    @property
    def n_frames(self) -> int:
        return int(round(self.total_duration * self.frame_rate))


def scene_objects(params: ScenarioParams) -> tuple[ScenarioObject, ...]:
    """The objects of a scenario kind; crossings pass ``x`` ahead at mid-run."""
    v = params.speed
    half_run = v * params.total_duration / 2.0
    if params.kind == "crossing-vehicle":
        return (ScenarioObject("car-1", "car", (15.0, -half_run), (0.0, v), 4.5, 1.8),)
    if params.kind == "crossing-pedestrian":
        return (ScenarioObject("ped-1", "pedestrian", (10.0, -half_run), (0.0, v), 0.6, 0.6),)
    if params.kind == "static-world":
        return (
            ScenarioObject("parked-1", "car", (12.0, 4.0), length=4.5, width=1.8, labelled=False),
            ScenarioObject("post-1", "pedestrian", (8.0, -3.0), length=0.3, width=0.3, labelled=False),
            ScenarioObject("truck-1", "large", (22.0, -6.0), length=10.0, width=2.5, labelled=False),
        )
    return params.objects


def _wrap(angle: np.ndarray) -> np.ndarray:
    return (angle + np.pi) % (2.0 * np.pi) - np.pi


def _sample_facing_edges(corners: np.ndarray, sensor_xy: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    starts = corners
    ends = np.roll(corners, -1, axis=0)
    edge = ends - starts
    # outward normal of a counter-clockwise polygon
    normal = np.column_stack((edge[:, 1], -edge[:, 0]))
    mid = (starts + ends) / 2.0
    facing = np.einsum("ij,ij->i", normal, sensor_xy - mid) > 0
    if not facing.any():
        return np.empty((0, 2))
    lengths = np.hypot(edge[facing, 0], edge[facing, 1])
    which = rng.choice(int(facing.sum()), size=n, p=lengths / lengths.sum())
    along = rng.random(n)
    return starts[facing][which] + along[:, None] * edge[facing][which]


def _object_detections(
    obj: ScenarioObject,
    t: float,
    sensor: SensorConfig,
    sensor_pose: Pose,
    ego_velocity: np.ndarray,
    params: ScenarioParams,
    rng: np.random.Generator,
) -> list[RadarDetection]:
    lo, hi = params.detections_per_object
    n = int(rng.integers(lo, hi + 1))
    sensor_xy = np.array([sensor_pose.x, sensor_pose.y])
    points = _sample_facing_edges(obj.corners(t), sensor_xy, n, rng)
    n = len(points)
    range_noise = rng.normal(0.0, params.range_noise, n)
    azimuth_noise = rng.normal(0.0, params.azimuth_noise, n)
    vr_noise = rng.normal(0.0, params.vr_noise, n)
    mean, sigma = params.rcs_object.get(obj.class_label, RCS_BY_CLASS[obj.class_label])
    rcs = rng.normal(mean, sigma, n)

    rel = points - sensor_xy
    rng_true = np.hypot(rel[:, 0], rel[:, 1])
    azimuth = np.arctan2(rel[:, 1], rel[:, 0])
    visible = (np.abs(_wrap(azimuth - sensor_pose.yaw)) <= sensor.azimuth_span) & (rng_true <= sensor.max_range)

    los = np.column_stack((np.cos(azimuth), np.sin(azimuth)))
    relative_rate = los @ (np.asarray(obj.velocity) - ego_velocity)
    # add back the sensor's own motion along the line of sight
    compensated = relative_rate + los @ ego_velocity
    noisy_range = rng_true + range_noise
    noisy_azimuth = azimuth + azimuth_noise
    x = sensor_pose.x + noisy_range * np.cos(noisy_azimuth)
    y = sensor_pose.y + noisy_range * np.sin(noisy_azimuth)
    vr = compensated + vr_noise
    return [
        RadarDetection(float(x[k]), float(y[k]), float(vr[k]), float(rcs[k]))
        for k in np.flatnonzero(visible)
    ]


def _clutter(
    sensor: SensorConfig,
    sensor_pose: Pose,
    clutter_rcs: float,
    params: ScenarioParams,
    rng: np.random.Generator,
) -> list[RadarDetection]:
    n = int(rng.poisson(params.clutter_rate))
    if n == 0:
        return []
    reach = min(sensor.max_range, params.clutter_max_range)
    r = rng.uniform(1.0, max(reach, 1.0), n)
    azimuth = sensor_pose.yaw + rng.uniform(-sensor.azimuth_span, sensor.azimuth_span, n)
    vr = rng.normal(0.0, params.vr_noise, n)
    rcs = rng.normal(clutter_rcs, params.rcs_clutter_sigma, n)
    x = sensor_pose.x + r * np.cos(azimuth)
    y = sensor_pose.y + r * np.sin(azimuth)
    return [RadarDetection(float(x[k]), float(y[k]), float(vr[k]), float(rcs[k])) for k in range(n)]


def generate_scenario(
    params: ScenarioParams,
    sensors: Sequence[SensorConfig] | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[list[Scan], list[GtFrame]]:
    """Generate the scan stream and matching ground truth of a scenario.

    Sensors fire staggered within each frame period, so scan timestamps are
    strictly increasing; ground truth is emitted at every scan timestamp.
    """
    sensors = tuple(sensors) if sensors else default_sensor_suite()
    rng = np.random.default_rng(params.seed) if rng is None else rng
    objects = scene_objects(params)
    present = {o.class_label for o in objects} or {"car"}
    clutter_rcs = min(params.rcs_object.get(c, RCS_BY_CLASS[c])[0] for c in present) - params.rcs_clutter_offset
    ego_velocity = np.array([params.ego_speed, 0.0])

    scans: list[Scan] = []
    truth: list[GtFrame] = []
    n_sensors = len(sensors)
    for frame in range(params.n_frames):
        for k, sensor in enumerate(sensors):
            t = (frame + k / n_sensors) / params.frame_rate
            ego = Pose(params.ego_speed * t, 0.0, 0.0)
            pose = sensor.world_pose(ego)
            detections: list[RadarDetection] = []
            for obj in objects:
                detections.extend(_object_detections(obj, t, sensor, pose, ego_velocity, params, rng))
            detections.extend(_clutter(sensor, pose, clutter_rcs, params, rng))
            scans.append(Scan(t, sensor.sensor_id, ego, tuple(detections)))
            truth.append(
                GtFrame(
                    t,
                    tuple(
                        GtObject(t, o.id, o.class_label, o.center(t), o.velocity)
                        for o in objects
                        if o.labelled
                    ),
                )
            )
    logger.info(
        "generated %s: %d frames x %d sensors, %d detections",
        params.kind, params.n_frames, n_sensors, sum(len(s) for s in scans),
    )
    return scans, truth
