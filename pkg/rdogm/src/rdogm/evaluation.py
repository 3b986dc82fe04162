"""Object extraction from the grid and detection-quality metrics.

Particles in dynamic cells are clustered into objects; objects are matched
to ground truth by centre distance and scored with recall / precision /
position and velocity error and a distance-based average precision.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.cluster import DBSCAN

from .errors import TimestampError, ValidationError
from .model import DYN, GridMap, ParticleSet

__all__ = [
    "CLASS_LABELS",
    "GtObject",
    "GtFrame",
    "DetectedObject",
    "EvalParams",
    "EvalFrame",
    "MatchResult",
    "TrackMetrics",
    "cluster_dynamic_cells",
    "confidence",
    "score_objects",
    "match_detections",
    "average_precision",
    "mean_average_precision",
    "track_metrics",
    "longest_undetected_run",
    "align_frames",
    "evaluate",
]

logger = logging.getLogger(__name__)

CLASS_LABELS = ("car", "large", "two_wheeler", "pedestrian", "pedestrian_group")

# recall samples 0.11 .. 1.00; recall below 0.1 is not scored
_RECALL_GRID = np.arange(11, 101) / 100.0
_MIN_PRECISION = 0.1


@dataclass(frozen=True)
class GtObject:
    t: float
    id: str
    class_label: str
    center: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if self.class_label not in CLASS_LABELS:
            raise ValidationError(f"unknown class {self.class_label!r}, expected one of {CLASS_LABELS}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "velocity", (float(self.velocity[0]), float(self.velocity[1])))


@dataclass(frozen=True)
class GtFrame:
    t: float
    objects: tuple[GtObject, ...] = ()


@dataclass(frozen=True)
class DetectedObject:
    """One particle cluster: weighted centroid and velocity plus its support."""

    t: float
    center: tuple[float, float]
    velocity: tuple[float, float]
    confidence: float
    particle_count: int
    mean_age: float
    mean_weight: float = 0.0


@dataclass(frozen=True)
class EvalParams:
    eps: float = 0.6
    min_pts: int = 5
    match_thresholds: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
    single_threshold: float = 2.0
    age_norm: float = 5.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "match_thresholds", tuple(float(v) for v in self.match_thresholds))
        for name in ("eps", "single_threshold", "age_norm"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)!r}")
        if int(self.min_pts) != self.min_pts or self.min_pts < 1:
            raise ValidationError(f"min_pts must be a positive integer, got {self.min_pts!r}")
        thresholds = self.match_thresholds
        if not thresholds or any(v <= 0 for v in thresholds) or list(thresholds) != sorted(thresholds):
            raise ValidationError(f"match_thresholds must be positive and ascending, got {thresholds}")


@dataclass(frozen=True)
class EvalFrame:
    """Detections and ground truth sharing one timestamp."""

    t: float
    detections: tuple[DetectedObject, ...] = ()
    ground_truth: tuple[GtObject, ...] = ()


@dataclass
class MatchResult:
    matches: list[tuple[DetectedObject, GtObject, float]] = field(default_factory=list)
    false_positives: list[DetectedObject] = field(default_factory=list)
    false_negatives: list[GtObject] = field(default_factory=list)


@dataclass(frozen=True)
class TrackMetrics:
    """Aggregate single-threshold metrics; ``dx`` / ``dv`` are ``None`` without matches."""

    dx: float | None
    dv: float | None
    recall: float
    precision: float
    tp: int
    fp: int
    fn: int


# -- object extraction -----------------------------------------------------------


def confidence(obj: DetectedObject, params: EvalParams, max_mean_weight: float) -> float:
    """Relative weight times a saturating age factor, in ``[0, 1]``."""
    relative = obj.mean_weight / max_mean_weight if max_mean_weight > 0 else 0.0
    return float(min(max(relative, 0.0), 1.0) * min(obj.mean_age / params.age_norm, 1.0))


def score_objects(objects: Sequence[DetectedObject], params: EvalParams) -> list[DetectedObject]:
    """Attach confidences, normalising weights by the frame's strongest cluster."""
    if not objects:
        return []
    top = max(o.mean_weight for o in objects)
    return [
        DetectedObject(o.t, o.center, o.velocity, confidence(o, params, top), o.particle_count, o.mean_age, o.mean_weight)
        for o in objects
    ]


def cluster_dynamic_cells(
    grid: GridMap,
    particles: ParticleSet,
    params: EvalParams | None = None,
    t: float | None = None,
) -> list[DetectedObject]:
    """DBSCAN over the particles of dominant-dynamic cells, one object per cluster.

    Particles are put in a canonical order first, so the result does not
    depend on the order of the particle pool. Objects come back sorted by
    centre and already scored.
    """
    params = params or EvalParams()
    t = grid.t if t is None else t
    if len(particles) == 0:
        return []
    flat, inside = particles.cell_indices(grid.spec)
    dynamic = (grid.dominant_states() == DYN).reshape(-1)
    keep = inside & dynamic[np.where(inside, flat, 0)]
    if keep.sum() < params.min_pts:
        return []

    sub = particles.take(keep)
    order = np.lexsort((sub.age, sub.weight, sub.vy, sub.vx, sub.y, sub.x))
    sub = sub.take(order)
    xy = sub.world_positions(grid.spec)
    labels = DBSCAN(eps=params.eps, min_samples=params.min_pts).fit(xy).labels_

    objects = []
    for label in range(labels.max() + 1):
        members = labels == label
        w = sub.weight[members]
        total = w.sum()
        weights = w / total if total > 0 else np.full(len(w), 1.0 / len(w))
        center = weights @ xy[members]
        velocity = weights @ np.column_stack((sub.vx[members], sub.vy[members]))
        objects.append(
            DetectedObject(
                t=float(t) if t is not None else 0.0,
                center=(float(center[0]), float(center[1])),
                velocity=(float(velocity[0]), float(velocity[1])),
                confidence=0.0,
                particle_count=int(members.sum()),
                mean_age=float(sub.age[members].mean()),
                mean_weight=float(w.mean()),
            )
        )
    objects.sort(key=lambda o: o.center)
    logger.debug("clustered %d particles into %d objects", len(sub), len(objects))
    return score_objects(objects, params)


# -- matching --------------------------------------------------------------------


def _by_confidence(dets: Sequence[DetectedObject]) -> list[DetectedObject]:
    return sorted(dets, key=lambda d: -d.confidence)


def match_detections(
    dets: Sequence[DetectedObject],
    gts: Sequence[GtObject],
    threshold: float,
) -> MatchResult:
    """Greedy one-to-one matching by descending confidence.

    Each detection claims the nearest unclaimed ground truth whose centre lies
    within ``threshold`` metres.
    """
    result = MatchResult()
    dets = _by_confidence(dets)
    if not gts:
        result.false_positives.extend(dets)
        return result
    if not dets:
        result.false_negatives.extend(gts)
        return result
    dist = cdist(np.array([d.center for d in dets]), np.array([g.center for g in gts]))
    claimed = np.zeros(len(gts), dtype=bool)
    for k, det in enumerate(dets):
        candidates = np.where(~claimed & (dist[k] <= threshold), dist[k], np.inf)
        best = int(np.argmin(candidates))
        if math.isinf(candidates[best]):
            result.false_positives.append(det)
            continue
        claimed[best] = True
        result.matches.append((det, gts[best], float(dist[k, best])))
    result.false_negatives.extend(g for g, c in zip(gts, claimed) if not c)
    return result


# -- average precision -------------------------------------------------------------


def _ap_at_threshold(frames: Sequence[EvalFrame], class_label: str, threshold: float, n_gt: int) -> float:
    scores: list[float] = []
    hits: list[bool] = []
    for frame in frames:
        result = match_detections(frame.detections, frame.ground_truth, threshold)
        for det, gt, _ in result.matches:
            if gt.class_label == class_label:
                scores.append(det.confidence)
                hits.append(True)
        for det in result.false_positives:
            scores.append(det.confidence)
            hits.append(False)
    if not scores:
        return 0.0

    order = np.argsort(-np.asarray(scores), kind="stable")
    hit = np.asarray(hits)[order]
    tp = np.cumsum(hit)
    fp = np.cumsum(~hit)
    recall = tp / n_gt
    precision = tp / (tp + fp)
    # max-interpolation: best precision at this recall or beyond
    envelope = np.maximum.accumulate(precision[::-1])[::-1]

    idx = np.searchsorted(recall, _RECALL_GRID, side="left")
    sampled = np.zeros(len(_RECALL_GRID))
    reached = idx < len(recall)
    sampled[reached] = envelope[idx[reached]]
    sampled[sampled < _MIN_PRECISION] = 0.0
    return float(sampled.mean())


def average_precision(
    frames: Sequence[EvalFrame],
    class_label: str,
    params: EvalParams | None = None,
    thresholds: Sequence[float] | None = None,
) -> float | None:
    """Distance-based AP of one class, averaged over the match thresholds.

    Detections matched to another class's ground truth count neither as true
    nor as false positives. Returns ``None`` when the class has no ground truth.
    """
    params = params or EvalParams()
    thresholds = params.match_thresholds if thresholds is None else tuple(thresholds)
    n_gt = sum(1 for f in frames for g in f.ground_truth if g.class_label == class_label)
    if n_gt == 0:
        return None
    return float(np.mean([_ap_at_threshold(frames, class_label, d, n_gt) for d in thresholds]))


def mean_average_precision(
    frames: Sequence[EvalFrame],
    params: EvalParams | None = None,
) -> tuple[float | None, dict[str, float | None]]:
    """Mean AP over the classes that have ground truth, plus the per-class values."""
    per_class = {label: average_precision(frames, label, params) for label in CLASS_LABELS}
    scored = [v for v in per_class.values() if v is not None]
    missing = [label for label, v in per_class.items() if v is None]
    if missing:
        logger.warning("no ground truth for %s; excluded from mAP", ", ".join(missing))
    return (float(np.mean(scored)) if scored else None), per_class


# -- tracking metrics --------------------------------------------------------------


def track_metrics(frames: Sequence[EvalFrame], params: EvalParams | None = None) -> TrackMetrics:
    params = params or EvalParams()
    tp = fp = fn = 0
    dx: list[float] = []
    dv: list[float] = []
    for frame in frames:
        result = match_detections(frame.detections, frame.ground_truth, params.single_threshold)
        tp += len(result.matches)
        fp += len(result.false_positives)
        fn += len(result.false_negatives)
        for det, gt, distance in result.matches:
            dx.append(distance)
            dv.append(math.hypot(det.velocity[0] - gt.velocity[0], det.velocity[1] - gt.velocity[1]))
    return TrackMetrics(
        dx=float(np.mean(dx)) if dx else None,
        dv=float(np.mean(dv)) if dv else None,
        recall=tp / (tp + fn) if tp + fn else 0.0,
        precision=tp / (tp + fp) if tp + fp else 0.0,
        tp=tp,
        fp=fp,
        fn=fn,
    )


def longest_undetected_run(frames: Sequence[EvalFrame], threshold: float) -> int:
    """Longest run of consecutive frames whose ground truth all went unmatched."""
    longest = current = 0
    for frame in frames:
        if not frame.ground_truth:
            continue
        result = match_detections(frame.detections, frame.ground_truth, threshold)
        if result.matches:
            current = 0
        else:
            current += 1
            longest = max(longest, current)
    return longest


def align_frames(
    detections: Iterable[tuple[float, Sequence[DetectedObject]]],
    ground_truth: Iterable[GtFrame],
) -> list[EvalFrame]:
    """Pair detection records and ground-truth frames by exact timestamp."""
    det_by_t = {float(t): tuple(objs) for t, objs in detections}
    gt_by_t = {float(f.t): f.objects for f in ground_truth}
    missing_gt = sorted(set(det_by_t) - set(gt_by_t))
    missing_det = sorted(set(gt_by_t) - set(det_by_t))
    if missing_gt or missing_det:
        parts = []
        if missing_det:
            parts.append(f"{len(missing_det)} frames without detections")
        if missing_gt:
            parts.append(f"{len(missing_gt)} frames without ground truth")
        raise TimestampError(
            "detection and ground-truth timestamps differ: " + ", ".join(parts),
            missing_det + missing_gt,
        )
    return [EvalFrame(t, det_by_t[t], gt_by_t[t]) for t in sorted(gt_by_t)]


def evaluate(
    frames: Sequence[EvalFrame],
    params: EvalParams | None = None,
    particle_counts: Sequence[int] | None = None,
) -> dict:
    """The full metrics report of one run as a plain dict."""
    params = params or EvalParams()
    tracks = track_metrics(frames, params)
    map_value, per_class = mean_average_precision(frames, params)
    counts = list(particle_counts or [])
    return {
        "frames": len(frames),
        "threshold": params.single_threshold,
        "recall": tracks.recall,
        "precision": tracks.precision,
        "dx": tracks.dx,
        "dv": tracks.dv,
        "tp": tracks.tp,
        "fp": tracks.fp,
        "fn": tracks.fn,
        "ap": per_class,
        "map": map_value,
        "longest_undetected_run": longest_undetected_run(frames, params.single_threshold),
        "particles": {
            "mean": float(np.mean(counts)) if counts else 0.0,
            "max": int(max(counts)) if counts else 0,
        },
    }
