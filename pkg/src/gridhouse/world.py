"""Deterministic household-scene simulator.

A Scene is an immutable grid layout: navigable cells, large-object
footprints and small objects sitting on (or inside) container objects.
Per-episode dynamics live in AgentState (pose plus budgets) and
ObjectStates (articulation flags, small-object placement, held object).
The Simulator ties the three together and enforces the step / failure
budgets of an episode.

Interactions are resolved by a ground-truth affordance oracle: an
interaction succeeds only from a pose inside the target's waypoint set
(see gt_waypoints), with the hand and articulation constraints satisfied.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import BudgetExhausted, UnknownClass
from .geometry import (
    FACING,
    HORIZON_MAX,
    HORIZON_MIN,
    allo_to_ego,
    rotate_left,
    rotate_right,
)

EPISODE_STEP_LIMIT = 1000
EPISODE_FAILURE_LIMIT = 10

LARGE_CLASSES = (
    "armchair", "chair", "cart", "sofa", "shelf",
    "drawer", "cabinet", "countertop", "sink", "stove_burner",
    "fridge", "bed", "dresser", "toilet", "bathtub",
    "ottoman", "diningtable", "sidetable", "coffeetable", "desk",
)
N_LARGE = len(LARGE_CLASSES)
NAVIGABLE_CHANNEL = N_LARGE
N_CHANNELS = N_LARGE + 1
LARGE_CLASS_INDEX = {c: i for i, c in enumerate(LARGE_CLASSES)}

SMALL_CLASSES = (
    "apple", "mug", "lettuce", "watch", "spray_bottle",
    "knife", "tomato", "bread", "cup", "plate",
    "book", "pencil", "phone", "remote", "soap",
    "candle", "keys", "bowl", "egg", "potato",
)
SMALL_CLASS_INDEX = {c: i for i, c in enumerate(SMALL_CLASSES)}

ALL_CLASSES = set(LARGE_CLASSES) | set(SMALL_CLASSES)

# Classes with articulation state and the clearance (in cells) an agent
# must leave in front of each class before interacting.  "safe" never
# occurs in generated scenes (it is outside the 20-class list) but keeps
# its clearance entry.
ARTICULATED_CLASSES = frozenset({"fridge", "safe", "cabinet", "drawer"})
_BACKUP = {"fridge": 3, "safe": 2, "cabinet": 2, "drawer": 2}

# Horizon band an object is visible/reachable at, per height class.
HEIGHT_BANDS = {"floor": (60, 45), "mid": (30, 15), "high": (0, -15)}

DEFAULT_HEIGHT_CLASS = {
    "armchair": "floor", "chair": "floor", "cart": "floor", "sofa": "floor",
    "bed": "floor", "toilet": "floor", "bathtub": "floor", "ottoman": "floor",
    "countertop": "mid", "sink": "mid", "stove_burner": "mid", "drawer": "mid",
    "dresser": "mid", "diningtable": "mid", "sidetable": "mid",
    "coffeetable": "mid", "desk": "mid", "fridge": "mid",
    "shelf": "high", "cabinet": "high",
}

SCENE_FORMAT_VERSION = 1


def backup_magnitude(class_id: str) -> int:
    """Clearance distance in cells for a class: fridge 3, safe/cabinet/drawer 2, else 1."""
    return _BACKUP.get(class_id, 1)


def horizon_band(height_class: str) -> tuple[int, int]:
    return HEIGHT_BANDS[height_class]


class NavAction(Enum):
    MOVE_AHEAD = "MoveAhead"
    ROTATE_LEFT = "RotateLeft"
    ROTATE_RIGHT = "RotateRight"
    LOOK_UP = "LookUp"
    LOOK_DOWN = "LookDown"


class InteractionKind(Enum):
    PICK_UP = "PickUp"
    PUT = "Put"
    OPEN = "Open"
    CLOSE = "Close"
    SLICE = "Slice"
    TOGGLE_ON = "ToggleOn"
    TOGGLE_OFF = "ToggleOff"


@dataclass(frozen=True)
class Interact:
    kind: InteractionKind
    target_class: str


Action = NavAction | Interact


@dataclass(frozen=True)
class StepOutcome:
    success: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.success


OK = StepOutcome(True)


@dataclass
class LargeObject:
    class_id: str
    cells: tuple[tuple[int, int], ...]
    articulated: bool
    height_class: str
    index: int = -1


@dataclass
class SmallObject:
    class_id: str
    cell: tuple[int, int]
    container: int | None
    height_class: str
    index: int = -1


@dataclass
class Scene:
    """Immutable room layout. Treat as read-only after construction."""

    grid_size: int
    navigable: np.ndarray  # (G, G) bool, indexed [y, x]
    large_objects: list[LargeObject]
    small_objects: list[SmallObject]
    cell_unit: float = 0.25

    def __post_init__(self):
        self.navigable = np.asarray(self.navigable, dtype=bool)
        for i, obj in enumerate(self.large_objects):
            obj.index = i
        for i, obj in enumerate(self.small_objects):
            obj.index = i
        self._channel_grid = None

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.grid_size and 0 <= y < self.grid_size

    def is_navigable(self, x: int, y: int) -> bool:
        return self.in_bounds(x, y) and bool(self.navigable[y, x])

    def channel_grid(self) -> np.ndarray:
        """Ground-truth (G, G, N_large+1) occupancy used by the perception oracle."""
        if self._channel_grid is None:
            g = np.zeros((self.grid_size, self.grid_size, N_CHANNELS), dtype=float)
            g[:, :, NAVIGABLE_CHANNEL] = self.navigable.astype(float)
            for obj in self.large_objects:
                ch = LARGE_CLASS_INDEX[obj.class_id]
                for (x, y) in obj.cells:
                    g[y, x, ch] = 1.0
            self._channel_grid = g
        return self._channel_grid

    def validate(self) -> None:
        """Raise ValueError on any violated scene invariant."""
        G = self.grid_size
        if self.navigable.shape != (G, G):
            raise ValueError("navigable grid shape mismatch")
        if not self.navigable.any():
            raise ValueError("scene has no navigable cell")
        occupied: set[tuple[int, int]] = set()
        for obj in self.large_objects:
            if obj.class_id not in LARGE_CLASS_INDEX:
                raise ValueError(f"unknown large class {obj.class_id!r}")
            if obj.height_class not in HEIGHT_BANDS:
                raise ValueError(f"bad height class {obj.height_class!r}")
            for (x, y) in obj.cells:
                if not self.in_bounds(x, y):
                    raise ValueError("footprint cell out of bounds")
                if self.navigable[y, x]:
                    raise ValueError("footprint cell is navigable")
                if (x, y) in occupied:
                    raise ValueError("overlapping footprints")
                occupied.add((x, y))
        for obj in self.small_objects:
            if obj.class_id not in SMALL_CLASS_INDEX:
                raise ValueError(f"unknown small class {obj.class_id!r}")
            if obj.container is not None:
                holder = self.large_objects[obj.container]
                if obj.cell not in holder.cells:
                    raise ValueError("contained small object off its container footprint")
            elif not self.in_bounds(*obj.cell):
                raise ValueError("small object cell out of bounds")
        if not self._connected():
            raise ValueError("navigable region is disconnected")

    def _connected(self) -> bool:
        ys, xs = np.nonzero(self.navigable)
        if len(xs) == 0:
            return False
        seen = np.zeros_like(self.navigable)
        stack = [(int(xs[0]), int(ys[0]))]
        seen[ys[0], xs[0]] = True
        while stack:
            x, y = stack.pop()
            for dx, dy in ((0, 1), (0, -1), (1, 0), (-1, 0)):
                nx, ny = x + dx, y + dy
                if self.in_bounds(nx, ny) and self.navigable[ny, nx] and not seen[ny, nx]:
                    seen[ny, nx] = True
                    stack.append((nx, ny))
        return bool(seen.sum() == len(xs))


def scene_to_json(scene: Scene) -> dict:
    nav = "".join(
        "1" if scene.navigable[y, x] else "0"
        for y in range(scene.grid_size)
        for x in range(scene.grid_size)
    )
    return {
        "format": SCENE_FORMAT_VERSION,
        "grid_size": scene.grid_size,
        "navigable": nav,
        "large_objects": [
            {
                "class": o.class_id,
                "cells": [list(c) for c in o.cells],
                "articulated": o.articulated,
                "height_class": o.height_class,
            }
            for o in scene.large_objects
        ],
        "small_objects": [
            {
                "class": o.class_id,
                "cell": list(o.cell),
                "container": o.container,
                "height_class": o.height_class,
            }
            for o in scene.small_objects
        ],
    }


def scene_from_json(data: dict) -> Scene:
    if data.get("format") != SCENE_FORMAT_VERSION:
        raise ValueError(f"unsupported scene format {data.get('format')!r}")
    G = int(data["grid_size"])
    nav_str = data["navigable"]
    if len(nav_str) != G * G:
        raise ValueError("navigable string length mismatch")
    nav = np.array([c == "1" for c in nav_str], dtype=bool).reshape(G, G)
    large = [
        LargeObject(
            class_id=o["class"],
            cells=tuple(tuple(c) for c in o["cells"]),
            articulated=bool(o["articulated"]),
            height_class=o["height_class"],
        )
        for o in data["large_objects"]
    ]
    small = [
        SmallObject(
            class_id=o["class"],
            cell=tuple(o["cell"]),
            container=o["container"],
            height_class=o["height_class"],
        )
        for o in data["small_objects"]
    ]
    return Scene(grid_size=G, navigable=nav, large_objects=large, small_objects=small)


def save_scene(scene: Scene, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scene_to_json(scene), sort_keys=True))


def load_scene(path: str | Path) -> Scene:
    return scene_from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class AgentState:
    """Agent pose 5-tuple plus episode budget counters."""

    x: int
    y: int
    r: int
    h: int
    o: str | None = None
    steps_taken: int = 0
    failures: int = 0

    @property
    def pose(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.r, self.h)

    @property
    def budget_exhausted(self) -> bool:
        return self.steps_taken >= EPISODE_STEP_LIMIT or self.failures >= EPISODE_FAILURE_LIMIT


@dataclass
class ObjectStates:
    """Mutable per-episode object state: articulation, placement, held object."""

    opened: list[bool]
    small_cell: list[tuple[int, int] | None]
    small_container: list[int | None]
    held: int | None = None
    opened_ever: set[int] = field(default_factory=set)
    picked_ever: set[int] = field(default_factory=set)
    sliced_ever: set[int] = field(default_factory=set)
    toggled_on: set[int] = field(default_factory=set)

    @classmethod
    def initial(cls, scene: Scene) -> "ObjectStates":
        return cls(
            opened=[False] * len(scene.large_objects),
            small_cell=[o.cell for o in scene.small_objects],
            small_container=[o.container for o in scene.small_objects],
        )

    def copy(self) -> "ObjectStates":
        return ObjectStates(
            opened=list(self.opened),
            small_cell=list(self.small_cell),
            small_container=list(self.small_container),
            held=self.held,
            opened_ever=set(self.opened_ever),
            picked_ever=set(self.picked_ever),
            sliced_ever=set(self.sliced_ever),
            toggled_on=set(self.toggled_on),
        )


def _check_budget(state: AgentState) -> None:
    if state.steps_taken >= EPISODE_STEP_LIMIT:
        raise BudgetExhausted(f"step budget ({EPISODE_STEP_LIMIT}) exhausted")
    if state.failures >= EPISODE_FAILURE_LIMIT:
        raise BudgetExhausted(f"failure budget ({EPISODE_FAILURE_LIMIT}) exhausted")


def step(scene: Scene, state: AgentState, action: NavAction) -> tuple[AgentState, StepOutcome]:
    """Execute one navigation/look action. Pure: returns a new AgentState.

    Every call consumes one step. A blocked MoveAhead or an out-of-range
    look leaves the pose unchanged, returns failure and increments the
    failure counter. Raises BudgetExhausted when called with a budget
    already spent.
    """
    _check_budget(state)
    if not isinstance(action, NavAction):
        raise TypeError(f"step() handles navigation actions, got {action!r}")
    x, y, r, h = state.x, state.y, state.r, state.h
    outcome = OK
    if action is NavAction.MOVE_AHEAD:
        dx, dy = FACING[r]
        nx, ny = x + dx, y + dy
        if scene.is_navigable(nx, ny):
            x, y = nx, ny
        else:
            outcome = StepOutcome(False, "blocked")
    elif action is NavAction.ROTATE_LEFT:
        r = rotate_left(r)
    elif action is NavAction.ROTATE_RIGHT:
        r = rotate_right(r)
    elif action is NavAction.LOOK_UP:
        if h - 15 < HORIZON_MIN:
            outcome = StepOutcome(False, "horizon limit")
        else:
            h -= 15
    elif action is NavAction.LOOK_DOWN:
        if h + 15 > HORIZON_MAX:
            outcome = StepOutcome(False, "horizon limit")
        else:
            h += 15
    new = dataclasses.replace(
        state,
        x=x, y=y, r=r, h=h,
        steps_taken=state.steps_taken + 1,
        failures=state.failures + (0 if outcome.success else 1),
    )
    return new, outcome


def effective_backup(scene: Scene, obj: SmallObject, objects: ObjectStates | None = None) -> int:
    """Reach distance for a small object: contained objects inherit the
    container's clearance so one pose serves both the articulation action
    and the pick."""
    container = obj.container if objects is None else objects.small_container[obj.index]
    if container is not None:
        return backup_magnitude(scene.large_objects[container].class_id)
    return 1


def _object_anchor_cells(scene: Scene, obj: LargeObject | SmallObject,
                         objects: ObjectStates | None) -> tuple[tuple[tuple[int, int], ...], int, str]:
    """(cells, reach distance, height class) for waypoint geometry."""
    if isinstance(obj, LargeObject):
        return obj.cells, backup_magnitude(obj.class_id), obj.height_class
    cell = obj.cell if objects is None else objects.small_cell[obj.index]
    if cell is None:  # held: no waypoint geometry
        return (), 1, obj.height_class
    return (cell,), effective_backup(scene, obj, objects), obj.height_class


def pose_in_waypoint_set(scene: Scene, obj: LargeObject | SmallObject,
                         pose: tuple[int, int, int, int],
                         objects: ObjectStates | None = None) -> bool:
    """Membership test for the ground-truth waypoint set W of an object.

    A pose qualifies when some object cell falls in the egocentric reach
    window (depth in [b, b+1], lateral in [-1, 1] for reach distance b),
    the pose cell is navigable and the horizon is in the object's band.
    """
    x, y, r, h = pose
    cells, b, height = _object_anchor_cells(scene, obj, objects)
    if not cells or h not in horizon_band(height) or not scene.is_navigable(x, y):
        return False
    for (cx, cy) in cells:
        d, l = allo_to_ego(x, y, r, cx, cy)
        if b <= d <= b + 1 and -1 <= l <= 1:
            return True
    return False


def gt_waypoints(scene: Scene, obj: LargeObject | SmallObject,
                 objects: ObjectStates | None = None) -> set[tuple[int, int, int, int]]:
    """All poses from which an interaction with the object succeeds."""
    cells, b, height = _object_anchor_cells(scene, obj, objects)
    out: set[tuple[int, int, int, int]] = set()
    for (cx, cy) in cells:
        for r in (0, 90, 180, 270):
            for d in (b, b + 1):
                for l in (-1, 0, 1):
                    # invert ego_to_allo: pose such that (cx, cy) sits at (d, l)
                    if r == 0:
                        px, py = cx - l, cy + d
                    elif r == 90:
                        px, py = cx - d, cy - l
                    elif r == 180:
                        px, py = cx + l, cy - d
                    else:
                        px, py = cx + d, cy + l
                    if scene.is_navigable(px, py):
                        for h in horizon_band(height):
                            out.add((px, py, r, h))
    return out


def _candidate_instances(scene: Scene, target_class: str,
                         objects: ObjectStates) -> list[LargeObject | SmallObject]:
    if target_class in LARGE_CLASS_INDEX:
        return [o for o in scene.large_objects if o.class_id == target_class]
    return [o for o in scene.small_objects if o.class_id == target_class]


def _instance_distance(scene: Scene, obj: LargeObject | SmallObject,
                       objects: ObjectStates, pose) -> float:
    cells, _, _ = _object_anchor_cells(scene, obj, objects)
    x, y = pose[0], pose[1]
    return min(abs(cx - x) + abs(cy - y) for (cx, cy) in cells) if cells else float("inf")


def interact(scene: Scene, state: AgentState, objects: ObjectStates,
             action: Interact) -> tuple[AgentState, StepOutcome]:
    """Execute an object interaction against the affordance oracle.

    Success requires a pose inside the waypoint set of some instance of
    the target class whose hand/articulation constraints hold. Mutates
    `objects` on success; consumes one step either way.
    """
    _check_budget(state)
    if action.target_class not in ALL_CLASSES:
        raise UnknownClass(f"unknown class {action.target_class!r}")

    kind = action.kind
    pose = state.pose
    candidates = [
        o for o in _candidate_instances(scene, action.target_class, objects)
        if pose_in_waypoint_set(scene, o, pose, objects)
    ]
    candidates.sort(key=lambda o: (_instance_distance(scene, o, objects, pose), o.index))

    ok = False
    held_class = state.o
    for obj in candidates:
        if kind is InteractionKind.PICK_UP and isinstance(obj, SmallObject):
            if objects.held is not None:
                continue
            holder = objects.small_container[obj.index]
            if holder is not None:
                large = scene.large_objects[holder]
                if large.articulated and not objects.opened[holder]:
                    continue
            objects.held = obj.index
            objects.small_cell[obj.index] = None
            objects.small_container[obj.index] = None
            objects.picked_ever.add(obj.index)
            held_class = obj.class_id
            ok = True
        elif kind is InteractionKind.PUT and isinstance(obj, LargeObject):
            if objects.held is None:
                continue
            if obj.articulated and not objects.opened[obj.index]:
                continue
            idx = objects.held
            objects.small_cell[idx] = min(obj.cells, key=lambda c: (c[1], c[0]))
            objects.small_container[idx] = obj.index
            objects.held = None
            held_class = None
            ok = True
        elif kind is InteractionKind.OPEN and isinstance(obj, LargeObject):
            if not obj.articulated or objects.opened[obj.index]:
                continue
            objects.opened[obj.index] = True
            objects.opened_ever.add(obj.index)
            ok = True
        elif kind is InteractionKind.CLOSE and isinstance(obj, LargeObject):
            if not obj.articulated or not objects.opened[obj.index]:
                continue
            objects.opened[obj.index] = False
            ok = True
        elif kind is InteractionKind.SLICE and isinstance(obj, SmallObject):
            if obj.index in objects.sliced_ever:
                continue
            holder = objects.small_container[obj.index]
            if holder is not None:
                large = scene.large_objects[holder]
                if large.articulated and not objects.opened[holder]:
                    continue
            objects.sliced_ever.add(obj.index)
            ok = True
        elif kind is InteractionKind.TOGGLE_ON and isinstance(obj, LargeObject):
            if obj.index in objects.toggled_on:
                continue
            objects.toggled_on.add(obj.index)
            ok = True
        elif kind is InteractionKind.TOGGLE_OFF and isinstance(obj, LargeObject):
            if obj.index not in objects.toggled_on:
                continue
            objects.toggled_on.discard(obj.index)
            ok = True
        if ok:
            break

    outcome = OK if ok else StepOutcome(False, f"{kind.value} failed")
    new = dataclasses.replace(
        state,
        o=held_class,
        steps_taken=state.steps_taken + 1,
        failures=state.failures + (0 if ok else 1),
    )
    return new, outcome


class Simulator:
    """Stateful wrapper for one episode over an immutable Scene."""

    def __init__(self, scene: Scene, start: tuple[int, int], r: int = 0, h: int = 30):
        if not scene.is_navigable(*start):
            raise ValueError(f"start cell {start} is not navigable")
        self.scene = scene
        self.state = AgentState(x=start[0], y=start[1], r=r, h=h)
        self.objects = ObjectStates.initial(scene)

    @property
    def pose(self) -> tuple[int, int, int, int]:
        return self.state.pose

    def step(self, action: NavAction) -> StepOutcome:
        self.state, outcome = step(self.scene, self.state, action)
        return outcome

    def interact(self, action: Interact) -> StepOutcome:
        self.state, outcome = interact(self.scene, self.state, self.objects, action)
        return outcome

    def teleport(self, pose: tuple[int, int, int, int]) -> None:
        """Directly set the agent pose (oracle navigation). Costs one step."""
        _check_budget(self.state)
        x, y, r, h = pose
        if not self.scene.is_navigable(x, y):
            raise ValueError(f"teleport target {(x, y)} not navigable")
        self.state = dataclasses.replace(
            self.state, x=x, y=y, r=r, h=h, steps_taken=self.state.steps_taken + 1
        )

    def gt_waypoints(self, obj: LargeObject | SmallObject) -> set[tuple[int, int, int, int]]:
        return gt_waypoints(self.scene, obj, self.objects)
