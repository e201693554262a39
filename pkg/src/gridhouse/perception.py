"""Noisy observation oracle.

Stands in for learned perception: rasterizes ground truth inside a 7-wide
by 10-deep egocentric window and corrupts it with a configurable noise
model. Small-object detections are emitted with a synthetic mask area that
shrinks with depth and lateral offset, so "closest, most centered view"
is a meaningful argmax.

Objects sitting inside a closed articulated container are never detected;
large-object footprints are always visible on the partial map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import allo_to_ego, window_coords
from .world import N_CHANNELS, ObjectStates, Scene, horizon_band

WINDOW_DEPTH = 10
WINDOW_WIDTH = 7
BASE_MASK_AREA = 100.0

# Spurious map confidences stay strictly below the waypoint confidence
# floor (0.5), so max-pooled noise can never masquerade as an object;
# true positives sit near 1.0 and are clearly separable.
FALSE_POSITIVE_RANGE = (0.2, 0.45)


@dataclass(frozen=True)
class NoiseModel:
    p_false_negative: float = 0.10
    p_false_positive: float = 0.02
    confidence_jitter: float = 0.05
    detection_decay: float = 0.9

    def __post_init__(self):
        for p in (self.p_false_negative, self.p_false_positive):
            if not 0.0 <= p <= 1.0:
                raise ValueError("noise probabilities must lie in [0, 1]")

    @property
    def is_zero(self) -> bool:
        return (
            self.p_false_negative == 0.0
            and self.p_false_positive == 0.0
            and self.confidence_jitter == 0.0
            and self.detection_decay == 1.0
        )

    @classmethod
    def zero(cls) -> "NoiseModel":
        return cls(0.0, 0.0, 0.0, 1.0)


@dataclass
class PartialMap:
    """Egocentric confidence window: (depth, width, channels) values in [0, 1]."""

    values: np.ndarray  # (WINDOW_DEPTH, WINDOW_WIDTH, N_CHANNELS)
    valid: np.ndarray   # (WINDOW_DEPTH, WINDOW_WIDTH) bool


@dataclass(frozen=True)
class Detection:
    class_id: str
    confidence: float
    mask_area: float
    pose_at_detection: tuple[int, int, int, int]
    # simulator-side anchor of the sighted object; exploration heuristics
    # may steer by it, waypoint generation never reads it
    cell: tuple[int, int] = (0, 0)


def mask_area(depth: int, lateral: int) -> float:
    """Synthetic mask area, strictly decreasing in depth and |lateral|."""
    centering = (4 - abs(lateral)) / 4.0
    return BASE_MASK_AREA * (WINDOW_DEPTH - depth) * centering


def observe_partial_map(scene: Scene, pose: tuple[int, int, int, int],
                        noise: NoiseModel, rng: np.random.Generator | None = None) -> PartialMap:
    """Rasterize ground truth in the egocentric window, then apply noise.

    Window row 0 is the agent's own row; cells beyond the grid are masked
    out and carry zero confidence. With the zero noise model the output
    equals ground truth at confidence 1.0.
    """
    x, y, r, _h = pose
    cx, cy = window_coords(x, y, r, WINDOW_DEPTH, WINDOW_WIDTH)
    valid = (cx >= 0) & (cx < scene.grid_size) & (cy >= 0) & (cy < scene.grid_size)
    values = np.zeros((WINDOW_DEPTH, WINDOW_WIDTH, N_CHANNELS), dtype=float)
    grid = scene.channel_grid()
    values[valid] = grid[cy[valid], cx[valid]]

    if not noise.is_zero:
        if rng is None:
            raise ValueError("a noise model with nonzero parameters needs an rng")
        shape = values.shape
        drop = rng.random(shape) < noise.p_false_negative
        spur = rng.random(shape) < noise.p_false_positive
        spur_vals = rng.uniform(*FALSE_POSITIVE_RANGE, size=shape)
        jitter = rng.normal(0.0, noise.confidence_jitter, size=shape) \
            if noise.confidence_jitter > 0 else np.zeros(shape)
        truth = values > 0
        kept = truth & ~drop
        values[truth & drop] = 0.0
        values[kept] = np.clip(values[kept] + jitter[kept], 0.0, 1.0)
        inject = ~truth & spur & valid[:, :, None]
        values[inject] = spur_vals[inject]

    values[~valid] = 0.0
    return PartialMap(values=values, valid=valid)


def _visible_small_indices(scene: Scene, objects: ObjectStates | None):
    """Small objects currently placed and not hidden inside a closed articulated container."""
    for obj in scene.small_objects:
        if objects is None:
            cell, container = obj.cell, obj.container
        else:
            cell = objects.small_cell[obj.index]
            container = objects.small_container[obj.index]
        if cell is None:
            continue
        if container is not None:
            holder = scene.large_objects[container]
            opened = objects.opened[container] if objects is not None else False
            if holder.articulated and not opened:
                continue
        yield obj, cell


def detect_small_objects(scene: Scene, pose: tuple[int, int, int, int],
                         noise: NoiseModel, rng: np.random.Generator | None = None,
                         objects: ObjectStates | None = None) -> list[Detection]:
    """Detections for small objects inside the window at the current horizon band.

    Emission probability decays with depth (detection_decay ** depth) and
    with the false-negative rate; confidence is jittered around 1.0.
    """
    x, y, r, h = pose
    out: list[Detection] = []
    for obj, cell in _visible_small_indices(scene, objects):
        if h not in horizon_band(obj.height_class):
            continue
        d, l = allo_to_ego(x, y, r, cell[0], cell[1])
        if not (0 <= d < WINDOW_DEPTH and abs(l) <= WINDOW_WIDTH // 2):
            continue
        p_emit = (noise.detection_decay ** d) * (1.0 - noise.p_false_negative)
        if p_emit < 1.0:
            if rng is None or rng.random() >= p_emit:
                continue
        conf = 1.0
        if noise.confidence_jitter > 0:
            if rng is None:
                raise ValueError("jittered detections need an rng")
            conf = float(np.clip(1.0 + rng.normal(0.0, noise.confidence_jitter), 0.0, 1.0))
        out.append(Detection(obj.class_id, conf, mask_area(d, l), pose, cell))
    return out


def detect_large_objects(scene: Scene, pose: tuple[int, int, int, int],
                         noise: NoiseModel, rng: np.random.Generator | None = None) -> list[Detection]:
    """Detection-style sightings of large-object footprints, one per instance.

    The nearest, most centered footprint cell inside the window anchors the
    mask area. Used for horizon selection and for detection-only waypoint
    generation.
    """
    x, y, r, h = pose
    out: list[Detection] = []
    for obj in scene.large_objects:
        if h not in horizon_band(obj.height_class):
            continue
        best: tuple[int, int, tuple[int, int]] | None = None
        for (cx, cy) in obj.cells:
            d, l = allo_to_ego(x, y, r, cx, cy)
            if 0 <= d < WINDOW_DEPTH and abs(l) <= WINDOW_WIDTH // 2:
                if best is None or (d, abs(l)) < best[:2]:
                    best = (d, abs(l), (cx, cy))
        if best is None:
            continue
        d, al, anchor = best
        p_emit = (noise.detection_decay ** d) * (1.0 - noise.p_false_negative)
        if p_emit < 1.0:
            if rng is None or rng.random() >= p_emit:
                continue
        conf = 1.0
        if noise.confidence_jitter > 0:
            if rng is None:
                raise ValueError("jittered detections need an rng")
            conf = float(np.clip(1.0 + rng.normal(0.0, noise.confidence_jitter), 0.0, 1.0))
        out.append(Detection(obj.class_id, conf, mask_area(d, al), pose, anchor))
    return out
