import numpy as np
import pytest

from gridhouse.world import LargeObject, Scene, SmallObject


def open_room(grid_size=12, margin=1):
    """All-navigable interior with a one-cell wall ring."""
    nav = np.zeros((grid_size, grid_size), dtype=bool)
    nav[margin:grid_size - margin, margin:grid_size - margin] = True
    return nav


def make_scene(grid_size=12, large=(), small=(), blocked=()):
    nav = open_room(grid_size)
    large_objects = []
    for spec in large:
        cells = tuple(spec["cells"])
        for (x, y) in cells:
            nav[y, x] = False
        large_objects.append(LargeObject(
            class_id=spec["class"],
            cells=cells,
            articulated=spec.get("articulated", False),
            height_class=spec.get("height", "mid"),
        ))
    for (x, y) in blocked:
        nav[y, x] = False
    scene = Scene(grid_size=grid_size, navigable=nav, large_objects=large_objects,
                  small_objects=[])
    smalls = []
    for spec in small:
        smalls.append(SmallObject(
            class_id=spec["class"],
            cell=tuple(spec["cell"]),
            container=spec.get("container"),
            height_class=spec.get("height", "mid"),
        ))
    scene.small_objects = smalls
    for i, o in enumerate(smalls):
        o.index = i
    return scene


@pytest.fixture
def fridge_scene():
    """Fridge against the north wall with its flanks walled off, so every
    waypoint approaches from the south (facing north)."""
    scene = make_scene(
        grid_size=12,
        large=[{"class": "fridge", "cells": [(5, 1), (6, 1)],
                "articulated": True, "height": "mid"}],
        blocked=[(x, 1) for x in range(1, 11) if x not in (5, 6)]
        + [(x, 2) for x in range(1, 11) if x not in (4, 5, 6, 7)],
    )
    return scene


@pytest.fixture
def counter_scene():
    """Countertop along the north wall with a lettuce on it."""
    return make_scene(
        grid_size=12,
        large=[{"class": "countertop", "cells": [(4, 1), (5, 1), (6, 1)],
                "articulated": False, "height": "mid"}],
        small=[{"class": "lettuce", "cell": (5, 1), "container": 0, "height": "mid"}],
    )
