"""Waypoint generation from the semantic map and the detection log.

Large objects get a waypoint from the map: most confident cell, nearest
navigable cell, rotation facing the object, then a class-dependent back-up
to leave articulation clearance. Small objects reuse the pose of their
best (largest mask) logged detection, falling back to the waypoint of
their container when nothing qualified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ClassNotOnMap, NoWaypoint
from .geometry import FACING, allo_to_ego
from .mapping import SemanticMap
from .perception import Detection
from .world import LARGE_CLASS_INDEX, backup_magnitude

DEFAULT_DETECTION_CONFIDENCE = 0.8  # tau_c
DEFAULT_MAP_CONFIDENCE_FLOOR = 0.5  # theta_wp

SOURCE_LARGE_MAP = "large_map"
SOURCE_SMALL_DETECTION = "small_detection"
SOURCE_CONTAINER_FALLBACK = "container_fallback"


@dataclass(frozen=True)
class Waypoint:
    x: int
    y: int
    r: int
    h: int | None = None
    source: str = SOURCE_LARGE_MAP


@dataclass
class DetectionLog:
    """Append-only record of detections accumulated during exploration."""

    records: list[Detection] = field(default_factory=list)

    def extend(self, detections) -> None:
        self.records.extend(detections)

    def qualifying(self, class_id: str, min_confidence: float) -> list[Detection]:
        return [d for d in self.records
                if d.class_id == class_id and d.confidence >= min_confidence]

    def has_qualifying(self, class_id: str, min_confidence: float) -> bool:
        return any(d.class_id == class_id and d.confidence >= min_confidence
                   for d in self.records)


def backup_offsets(class_id: str, r: int) -> tuple[int, int]:
    """Displacement opposite the facing direction, of the class magnitude."""
    if r not in FACING:
        raise ValueError(f"illegal rotation {r}")
    b = backup_magnitude(class_id)
    dx, dy = FACING[r]
    return -dx * b, -dy * b


def _argmax_cell(channel: np.ndarray) -> tuple[int, int, float]:
    flat = int(np.argmax(channel))
    y, x = divmod(flat, channel.shape[1])
    return x, y, float(channel[y, x])


def _nearest_navigable(navigable: np.ndarray, px: int, py: int) -> tuple[int, int]:
    ys, xs = np.nonzero(navigable)
    d2 = (xs - px) ** 2 + (ys - py) ** 2
    best = int(np.argmin(d2))  # np.argmin scans row-major, which is the tie-break
    return int(xs[best]), int(ys[best])


def _best_rotation(x: int, y: int, px: int, py: int) -> int:
    """Rotation putting (px, py) closest to the center of the field of view."""
    best_r, best_key = 0, None
    for r in (0, 90, 180, 270):
        d, l = allo_to_ego(x, y, r, px, py)
        key = (abs(math.atan2(l, d)), d)
        if best_key is None or key < best_key:
            best_key, best_r = key, r
    return best_r


def waypoint_large(semantic: SemanticMap, navigable: np.ndarray, class_id: str,
                   confidence_floor: float = DEFAULT_MAP_CONFIDENCE_FLOOR,
                   no_backup: bool = False) -> Waypoint:
    """Waypoint for a large class from the predicted map.

    Raises ClassNotOnMap when the channel maximum sits below the
    confidence floor. When the backed-up cell is not navigable the back-up
    magnitude shrinks one cell at a time.
    """
    if class_id not in LARGE_CLASS_INDEX:
        raise ClassNotOnMap(f"{class_id!r} is not a large class")
    channel = semantic.channel(LARGE_CLASS_INDEX[class_id])
    px, py, conf = _argmax_cell(channel)
    if conf < confidence_floor:
        raise ClassNotOnMap(f"no confident cell for {class_id!r} (max {conf:.3f})")
    if not navigable.any():
        raise ClassNotOnMap("no navigable cell on the post-processed grid")
    x, y = _nearest_navigable(navigable, px, py)
    r = _best_rotation(x, y, px, py)
    fx, fy = FACING[r]
    ux, uy = -fx, -fy  # back-up direction: opposite the facing vector
    magnitude = 0 if no_backup else backup_magnitude(class_id)
    G = semantic.grid_size
    for m in range(magnitude, 0, -1):
        bx, by = x + ux * m, y + uy * m
        if 0 <= bx < G and 0 <= by < G and navigable[by, bx]:
            return Waypoint(bx, by, r, source=SOURCE_LARGE_MAP)
    return Waypoint(x, y, r, source=SOURCE_LARGE_MAP)


def waypoint_small(log: DetectionLog, class_id: str,
                   min_confidence: float = DEFAULT_DETECTION_CONFIDENCE) -> Waypoint | None:
    """Pose of the largest-mask qualifying detection, earliest record on ties."""
    best: Detection | None = None
    for d in log.records:
        if d.class_id != class_id or d.confidence < min_confidence:
            continue
        if best is None or d.mask_area > best.mask_area:
            best = d
    if best is None:
        return None
    x, y, r, _h = best.pose_at_detection
    return Waypoint(x, y, r, h=None, source=SOURCE_SMALL_DETECTION)


def resolve_target(semantic: SemanticMap, navigable: np.ndarray, log: DetectionLog,
                   target_class: str, container_class: str | None = None,
                   strategy: str = "both",
                   min_confidence: float = DEFAULT_DETECTION_CONFIDENCE,
                   confidence_floor: float = DEFAULT_MAP_CONFIDENCE_FLOOR,
                   no_backup: bool = False) -> Waypoint:
    """Waypoint for a target class, honoring the waypoint-strategy ablation.

    strategy: "both" (map for large, detections for small with container
    fallback), "map_only" (never consult the log) or "detection_only"
    (never consult the map, no fallback). Raises NoWaypoint when every
    route fails.
    """
    is_large = target_class in LARGE_CLASS_INDEX

    if strategy == "detection_only":
        wp = waypoint_small(log, target_class, min_confidence)
        if wp is None:
            raise NoWaypoint(f"no qualifying detection for {target_class!r}")
        return wp

    if is_large:
        try:
            return waypoint_large(semantic, navigable, target_class,
                                  confidence_floor, no_backup)
        except ClassNotOnMap as e:
            raise NoWaypoint(str(e)) from e

    if strategy != "map_only":
        wp = waypoint_small(log, target_class, min_confidence)
        if wp is not None:
            return wp
    if container_class is not None and container_class in LARGE_CLASS_INDEX:
        try:
            wp = waypoint_large(semantic, navigable, container_class,
                                confidence_floor, no_backup)
            return Waypoint(wp.x, wp.y, wp.r, source=SOURCE_CONTAINER_FALLBACK)
        except ClassNotOnMap as e:
            raise NoWaypoint(str(e)) from e
    raise NoWaypoint(f"no waypoint strategy succeeded for {target_class!r}")
