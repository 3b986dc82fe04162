"""rdogm -- radar-centric dynamic occupancy grid mapping.

Example
-------
>>> from rdogm import DogmPipeline, PipelineConfig, ScenarioParams, generate_scenario
>>> scans, truth = generate_scenario(ScenarioParams(kind="crossing-vehicle", seed=7))
>>> pipeline = DogmPipeline(PipelineConfig())
>>> report = pipeline.process(scans[0])
"""

__version__ = "0.1.0"

from .errors import ConfigError, DogmError, ScanFormatError, TimestampError, ValidationError
from .evaluation import (
    DetectedObject,
    EvalFrame,
    EvalParams,
    GtFrame,
    GtObject,
    average_precision,
    cluster_dynamic_cells,
    evaluate,
    match_detections,
    mean_average_precision,
    track_metrics,
)
from .fusion import DogmPipeline, FrameReport, Mode, PipelineConfig, step
from .model import (
    CellState,
    GridMap,
    GridSpec,
    Particle,
    ParticleSet,
    Pose,
    RadarDetection,
    Scan,
    SensorConfig,
    default_sensor_suite,
    new_grid,
    recenter,
    world_to_cell,
)
from .scenario import ScenarioParams, generate_scenario

__all__ = [
    "CellState",
    "ConfigError",
    "DetectedObject",
    "DogmError",
    "DogmPipeline",
    "EvalFrame",
    "EvalParams",
    "FrameReport",
    "GridMap",
    "GridSpec",
    "GtFrame",
    "GtObject",
    "Mode",
    "Particle",
    "ParticleSet",
    "PipelineConfig",
    "Pose",
    "RadarDetection",
    "Scan",
    "ScanFormatError",
    "ScenarioParams",
    "SensorConfig",
    "TimestampError",
    "ValidationError",
    "average_precision",
    "cluster_dynamic_cells",
    "default_sensor_suite",
    "evaluate",
    "generate_scenario",
    "match_detections",
    "mean_average_precision",
    "new_grid",
    "recenter",
    "step",
    "track_metrics",
    "world_to_cell",
    "__version__",
]
