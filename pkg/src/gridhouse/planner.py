"""Dijkstra path planning over (x, y, r) plus online horizon selection.

Edges are MoveAhead into a navigable cell and Rotate by 90 degrees, all
unit cost, so the planner is exact and cheap on desk-scale grids.
Horizon selection sweeps the camera through six angles at the waypoint,
keeping the one with the largest high-confidence mask; a small
backtracking ladder around the chosen horizon covers estimation error.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import Unreachable
from .geometry import FACING, HORIZON_MAX, HORIZON_MIN, rotate_left, rotate_right
from .perception import NoiseModel, detect_large_objects, detect_small_objects
from .world import LARGE_CLASS_INDEX, NavAction, Simulator

HORIZON_SWEEP = (60, 45, 30, 15, 0, -15)
MASK_CONFIDENCE_THRESHOLD = 0.8


class PlanNode(NamedTuple):
    x: int
    y: int
    r: int


@dataclass(frozen=True)
class Plan:
    actions: tuple[NavAction, ...]
    cost: int


def _neighbors(node: PlanNode, navigable: np.ndarray):
    """Expansion order fixes tie-breaking: Move, RotateLeft, RotateRight."""
    x, y, r = node
    dx, dy = FACING[r]
    nx, ny = x + dx, y + dy
    G = navigable.shape[0]
    if 0 <= nx < G and 0 <= ny < G and navigable[ny, nx]:
        yield PlanNode(nx, ny, r), NavAction.MOVE_AHEAD
    yield PlanNode(x, y, rotate_left(r)), NavAction.ROTATE_LEFT
    yield PlanNode(x, y, rotate_right(r)), NavAction.ROTATE_RIGHT


def plan_path(navigable: np.ndarray, start: PlanNode, goal: PlanNode,
              goal_any_rotation: bool = False) -> Plan:
    """Minimum-cost action sequence from start to goal on the planning grid.

    Raises Unreachable when the goal is in a different component (or on a
    non-navigable cell).
    """
    navigable = np.asarray(navigable, dtype=bool)
    if not navigable[start.y, start.x]:
        raise Unreachable(f"start {start} not navigable on the planning grid")
    if not navigable[goal.y, goal.x]:
        raise Unreachable(f"goal {goal} not navigable on the planning grid")

    def is_goal(n: PlanNode) -> bool:
        if goal_any_rotation:
            return n.x == goal.x and n.y == goal.y
        return n == goal

    counter = 0
    dist: dict[PlanNode, int] = {start: 0}
    parent: dict[PlanNode, tuple[PlanNode, NavAction]] = {}
    heap: list[tuple[int, int, PlanNode]] = [(0, counter, start)]
    settled: set[PlanNode] = set()
    while heap:
        d, _, node = heapq.heappop(heap)
        if node in settled:
            continue
        settled.add(node)
        if is_goal(node):
            actions: list[NavAction] = []
            cur = node
            while cur != start:
                cur, act = parent[cur]
                actions.append(act)
            actions.reverse()
            return Plan(tuple(actions), d)
        for nxt, act in _neighbors(node, navigable):
            nd = d + 1
            if nxt not in dist or nd < dist[nxt]:
                dist[nxt] = nd
                parent[nxt] = (node, act)
                counter += 1
                heapq.heappush(heap, (nd, counter, nxt))
    raise Unreachable(f"no path from {start} to {goal}")


def backtrack_horizons(h_star: int) -> list[int]:
    """Retry ladder around a chosen horizon: h*, h*+15, h*-15, clipped to legal."""
    if h_star % 15 != 0 or not HORIZON_MIN <= h_star <= HORIZON_MAX:
        raise ValueError(f"illegal horizon {h_star}")
    return [h for h in (h_star, h_star + 15, h_star - 15)
            if HORIZON_MIN <= h <= HORIZON_MAX]


def walk_horizon(sim: Simulator, target_h: int) -> bool:
    """Step the camera to target_h with look actions; budget applies."""
    while sim.state.h != target_h:
        action = NavAction.LOOK_DOWN if sim.state.h < target_h else NavAction.LOOK_UP
        if not sim.step(action):
            return False
    return True


def select_horizon(sim: Simulator, target_class: str, noise: NoiseModel,
                   rng: np.random.Generator | None = None) -> int | None:
    """Sweep six horizons at the current cell and pick the best view.

    Each camera move consumes budget. Among detections of the target class
    with confidence above 0.8 the horizon with the largest mask area wins,
    earlier in the sweep on ties. Returns None (and restores the arrival
    horizon) when nothing qualifies.
    """
    arrival_h = sim.state.h
    best: tuple[float, int] | None = None  # (area, h)
    for h in HORIZON_SWEEP:
        if not walk_horizon(sim, h):
            break
        pose = sim.state.pose
        if target_class in LARGE_CLASS_INDEX:
            dets = detect_large_objects(sim.scene, pose, noise, rng)
        else:
            dets = detect_small_objects(sim.scene, pose, noise, rng, sim.objects)
        for d in dets:
            if d.class_id == target_class and d.confidence > MASK_CONFIDENCE_THRESHOLD:
                if best is None or d.mask_area > best[0]:
                    best = (d.mask_area, h)
    if best is None:
        walk_horizon(sim, arrival_h)
        return None
    walk_horizon(sim, best[1])
    return best[1]
