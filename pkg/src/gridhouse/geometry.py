"""Grid geometry: rotations, horizon ladder, egocentric/allocentric transforms.

Conventions used everywhere in this package:

* Cells are (x, y) with x the column and y the row.
* r = 0 faces north (-y), r = 90 faces east (+x), rotations are clockwise.
* Horizon h is the vertical camera angle; positive h looks downward.
  LookDown increases h, LookUp decreases it.
* Egocentric coordinates are (depth, lateral): depth counts cells straight
  ahead of the agent (0 = the agent's own row), lateral counts cells to the
  agent's right (negative = left).
"""

from __future__ import annotations

import numpy as np

ROTATIONS = (0, 90, 180, 270)
HORIZONS = (60, 45, 30, 15, 0, -15, -30)
HORIZON_MAX = 60
HORIZON_MIN = -30

# Unit facing vector (dx, dy) per rotation.
FACING = {0: (0, -1), 90: (1, 0), 180: (0, 1), 270: (-1, 0)}


def rotate_right(r: int) -> int:
    return (r + 90) % 360


def rotate_left(r: int) -> int:
    return (r - 90) % 360


def ego_to_allo(x: int, y: int, r: int, depth: int, lateral: int) -> tuple[int, int]:
    """Map an egocentric (depth, lateral) offset to an allocentric cell."""
    if r == 0:
        return x + lateral, y - depth
    if r == 90:
        return x + depth, y + lateral
    if r == 180:
        return x - lateral, y + depth
    if r == 270:
        return x - depth, y - lateral
    raise ValueError(f"illegal rotation {r}")


def allo_to_ego(x: int, y: int, r: int, cx: int, cy: int) -> tuple[int, int]:
    """Inverse of ego_to_allo: where does cell (cx, cy) sit relative to the pose."""
    vx, vy = cx - x, cy - y
    if r == 0:
        return -vy, vx
    if r == 90:
        return vx, vy
    if r == 180:
        return vy, -vx
    if r == 270:
        return -vx, -vy
    raise ValueError(f"illegal rotation {r}")


def window_coords(x: int, y: int, r: int, depth: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Allocentric coordinates of a depth x width egocentric window.

    Returns (cx, cy) integer arrays of shape (depth, width); row 0 is the
    agent's own row, the lateral axis is centered on the agent.
    """
    half = width // 2
    d = np.arange(depth)[:, None]
    l = np.arange(-half, width - half)[None, :]
    if r == 0:
        cx, cy = x + l, y - d
    elif r == 90:
        cx, cy = x + d, y + l
    elif r == 180:
        cx, cy = x - l, y + d
    elif r == 270:
        cx, cy = x - d, y - l
    else:
        raise ValueError(f"illegal rotation {r}")
    cx, cy = np.broadcast_arrays(cx, cy)
    return np.ascontiguousarray(cx), np.ascontiguousarray(cy)
