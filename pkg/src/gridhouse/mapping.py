"""Allocentric semantic map and explored-area bookkeeping.

Egocentric partial maps are placed into the global frame with exact
integer rotation/translation (poses are known exactly, so no interpolation
is needed) and aggregated by elementwise max. The navigable channel is
post-processed into a conservative boolean grid before planning. The
explored-area map tracks which cells the agent has observed, rendered
agent-centered with the heading pointing up.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .geometry import allo_to_ego, window_coords
from .perception import WINDOW_DEPTH, WINDOW_WIDTH, PartialMap
from .world import LARGE_CLASSES, N_CHANNELS, NAVIGABLE_CHANNEL

NAVIGABLE_CONF_THRESHOLD = 0.95
NEIGHBOR_CONF_THRESHOLD = 0.5
MIN_QUALIFYING_NEIGHBORS = 3

EXPLORED_RECT_DEPTH = 5
EXPLORED_RECT_WIDTH = 3

MAP_DUMP_FORMAT_VERSION = 1


def transform_partial(partial: PartialMap, pose: tuple[int, int, int, int],
                      grid_size: int) -> np.ndarray:
    """Place an egocentric window into a (G, G, channels) allocentric layer.

    Cells mapping off-grid are dropped; everything else is an exact integer
    placement.
    """
    x, y, r, _h = pose
    cx, cy = window_coords(x, y, r, WINDOW_DEPTH, WINDOW_WIDTH)
    ok = partial.valid & (cx >= 0) & (cx < grid_size) & (cy >= 0) & (cy < grid_size)
    layer = np.zeros((grid_size, grid_size, N_CHANNELS), dtype=float)
    layer[cy[ok], cx[ok]] = partial.values[ok]
    return layer


@dataclass
class SemanticMap:
    """(G, G, N_large+1) confidence grid, grown by max-pooling layers in."""

    grid_size: int
    grid: np.ndarray = None

    def __post_init__(self):
        if self.grid is None:
            self.grid = np.zeros((self.grid_size, self.grid_size, N_CHANNELS), dtype=float)

    def add_layer(self, layer: np.ndarray) -> None:
        np.maximum(self.grid, layer, out=self.grid)

    def add_partial(self, partial: PartialMap, pose: tuple[int, int, int, int]) -> None:
        """Fused transform + max-pool, equivalent to add_layer(transform_partial(...))."""
        x, y, r, _h = pose
        cx, cy = window_coords(x, y, r, WINDOW_DEPTH, WINDOW_WIDTH)
        ok = partial.valid & (cx >= 0) & (cx < self.grid_size) & (cy >= 0) & (cy < self.grid_size)
        tgt = self.grid[cy[ok], cx[ok]]
        np.maximum(tgt, partial.values[ok], out=tgt)
        self.grid[cy[ok], cx[ok]] = tgt

    def channel(self, index: int) -> np.ndarray:
        return self.grid[:, :, index]

    def copy(self) -> "SemanticMap":
        return SemanticMap(self.grid_size, self.grid.copy())


def aggregate(layers: Iterable[np.ndarray], grid_size: int) -> SemanticMap:
    """Elementwise maximum of layers; order-independent and idempotent."""
    out = SemanticMap(grid_size)
    for layer in layers:
        out.add_layer(layer)
    return out


def postprocess_navigable(semantic: SemanticMap | np.ndarray) -> np.ndarray:
    """Conservative boolean navigable grid.

    Map A keeps cells whose navigable confidence exceeds 0.95; map B keeps
    cells with at least 3 of their 4 L1-distance-1 neighbors at confidence
    >= 0.5 (out-of-bounds neighbors never qualify). The result is A AND B.
    """
    nav = semantic.channel(NAVIGABLE_CHANNEL) if isinstance(semantic, SemanticMap) else semantic
    a = nav > NAVIGABLE_CONF_THRESHOLD
    q = (nav >= NEIGHBOR_CONF_THRESHOLD).astype(np.int8)
    count = np.zeros_like(q)
    count[1:, :] += q[:-1, :]
    count[:-1, :] += q[1:, :]
    count[:, 1:] += q[:, :-1]
    count[:, :-1] += q[:, 1:]
    return a & (count >= MIN_QUALIFYING_NEIGHBORS)


@dataclass
class ExploredAreaMap:
    """Set of allocentric cells the agent has observed.

    Rendered agent-centered: value 2 at the center (the agent), 1 on
    explored cells, 0 elsewhere.
    """

    grid_size: int
    cells: set = field(default_factory=set)

    def update(self, pose: tuple[int, int, int, int]) -> "ExploredAreaMap":
        """Mark the 5-deep x 3-wide observed rectangle ahead of the pose."""
        x, y, r, _h = pose
        cx, cy = window_coords(x, y, r, EXPLORED_RECT_DEPTH, EXPLORED_RECT_WIDTH)
        ok = (cx >= 0) & (cx < self.grid_size) & (cy >= 0) & (cy < self.grid_size)
        self.cells.update(zip(cx[ok].tolist(), cy[ok].tolist()))
        return self

    def mask(self) -> np.ndarray:
        m = np.zeros((self.grid_size, self.grid_size), dtype=bool)
        for (x, y) in self.cells:
            m[y, x] = True
        return m

    def render(self, pose: tuple[int, int, int, int]) -> np.ndarray:
        """Agent-centered view, heading up; cells beyond G//2 are clipped."""
        G = self.grid_size
        center = G // 2
        out = np.zeros((G, G), dtype=np.int8)
        x, y, r, _h = pose
        for (cx, cy) in self.cells:
            d, l = allo_to_ego(x, y, r, cx, cy)
            row, col = center - d, center + l
            if 0 <= row < G and 0 <= col < G:
                out[row, col] = 1
        out[center, center] = 2
        return out


def update_explored_area(explored: ExploredAreaMap, pose) -> ExploredAreaMap:
    return explored.update(pose)


def render_explored(explored: ExploredAreaMap, pose) -> np.ndarray:
    return explored.render(pose)


def semantic_map_to_json(semantic: SemanticMap) -> dict:
    """Row-major per-channel dump used by the replay subcommand."""
    channels = list(LARGE_CLASSES) + ["navigable"]
    return {
        "format": MAP_DUMP_FORMAT_VERSION,
        "grid_size": semantic.grid_size,
        "channels": {
            name: [round(float(v), 6) for v in semantic.grid[:, :, i].ravel()]
            for i, name in enumerate(channels)
        },
    }


def save_semantic_map(semantic: SemanticMap, path: str | Path) -> None:
    Path(path).write_text(json.dumps(semantic_map_to_json(semantic), sort_keys=True))
