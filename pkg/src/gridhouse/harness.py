"""Seeded scene/task generation, batch episode running and trace files.

Every episode derives its random streams from (base_seed, episode_index),
so batches are reproducible byte-for-byte and independent of execution
order. Scenes are rectangular rooms with internal obstacle blocks,
wall-adjacent large objects and small objects placed on containers; tasks
are pick-and-place families rendered through the template grammar.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import GenerationFailed
from .exploration import PolicyConfig
from .perception import NoiseModel
from .tasks import (
    EpisodeResult,
    ExecutionConfig,
    GoalCondition,
    Subgoal,
    Task,
    display_name,
    execute_task,
    score,
)
from .world import (
    ARTICULATED_CLASSES,
    LARGE_CLASSES,
    SMALL_CLASSES,
    DEFAULT_HEIGHT_CLASS,
    LargeObject,
    Scene,
    SmallObject,
    gt_waypoints,
    scene_to_json,
)

CSV_FORMAT_VERSION = 1
CSV_HEADER = (
    "csv_format", "arm", "policy", "oracle_mode", "perturbation",
    "waypoint_strategy", "no_backup", "no_horizon_search", "episodes",
    "success_rate", "goal_condition", "coverage", "coverage_efficiency",
    "mean_steps", "mean_failures",
)

TRACE_FORMAT_VERSION = 1

# Container classes small objects may sit on; a subset is articulated.
SURFACE_CONTAINERS = ("countertop", "sidetable", "diningtable", "coffeetable",
                      "shelf", "desk", "dresser")
ARTICULATED_CONTAINERS = ("fridge", "cabinet", "drawer")

GENERATOR_RETRIES = 50


def episode_rng(base_seed: int, episode_index: int, stream: int) -> np.random.Generator:
    """Independent, order-free stream: (seed, episode, stream) keys the generator."""
    return np.random.default_rng([base_seed, episode_index, stream])


# --------------------------------------------------------------------------
# scene generation
# --------------------------------------------------------------------------

def _place_large(rng, G, navigable, occupied, class_id):
    """Try to place a footprint against one of the room walls.

    Surface containers run several cells along the wall, so the most
    confident map cell genuinely differs from where a small object sits.
    """
    ys, xs = np.nonzero(navigable)
    x0, x1 = int(xs.min()), int(xs.max())
    y0, y1 = int(ys.min()), int(ys.max())
    if class_id in SURFACE_CONTAINERS:
        w = int(rng.integers(3, 7))
    elif class_id in ARTICULATED_CLASSES:
        w = int(rng.integers(1, 3))
    else:
        w = int(rng.integers(1, 4))
    w = max(1, min(w, (x1 - x0 + 1) - 1, (y1 - y0 + 1) - 1))
    d = int(rng.integers(1, 3)) if class_id == "fridge" else 1
    for _ in range(20):
        side = int(rng.integers(4))
        if side == 0:  # north wall
            cx = int(rng.integers(x0, x1 - w + 2))
            cells = [(cx + i, y0 + j) for i in range(w) for j in range(d)]
        elif side == 1:  # south wall
            cx = int(rng.integers(x0, x1 - w + 2))
            cells = [(cx + i, y1 - j) for i in range(w) for j in range(d)]
        elif side == 2:  # west wall
            cy = int(rng.integers(y0, y1 - w + 2))
            cells = [(x0 + j, cy + i) for i in range(w) for j in range(d)]
        else:  # east wall
            cy = int(rng.integers(y0, y1 - w + 2))
            cells = [(x1 - j, cy + i) for i in range(w) for j in range(d)]
        if any(not navigable[y, x] or (x, y) in occupied for (x, y) in cells):
            continue
        return tuple(sorted(cells))
    return None


def _carve_obstacles(rng, navigable, count):
    G = navigable.shape[0]
    ys, xs = np.nonzero(navigable)
    x0, x1 = int(xs.min()), int(xs.max())
    y0, y1 = int(ys.min()), int(ys.max())
    placed = 0
    for _ in range(count * 10):
        if placed >= count:
            break
        w = int(rng.integers(2, 5))
        h = int(rng.integers(2, 5))
        # keep one ring of the room clear so walls stay reachable
        if x1 - 2 - w < x0 + 2 or y1 - 2 - h < y0 + 2:
            continue
        bx = int(rng.integers(x0 + 2, x1 - w - 1))
        by = int(rng.integers(y0 + 2, y1 - h - 1))
        navigable[by:by + h, bx:bx + w] = False
        placed += 1


def generate_scene(rng: np.random.Generator, grid_size: int = 37,
                   n_large: tuple[int, int] = (4, 8),
                   n_small: tuple[int, int] = (3, 6),
                   n_obstacles: tuple[int, int] = (2, 5)) -> Scene:
    """Random valid room; retries internally, raises GenerationFailed after 50."""
    G = grid_size
    for _ in range(GENERATOR_RETRIES):
        navigable = np.zeros((G, G), dtype=bool)
        # rooms somewhat smaller than the grid keep targets inside the
        # range an augmented exploration budget can actually reach
        lo = min(max(10, G // 2), G - 2)
        hi = min(max(lo + 1, G * 4 // 5), G - 1)
        room_w = int(rng.integers(lo, hi))
        room_h = int(rng.integers(lo, hi))
        ox = int(rng.integers(1, G - room_w)) if G - room_w > 1 else 1
        oy = int(rng.integers(1, G - room_h)) if G - room_h > 1 else 1
        navigable[oy:oy + room_h, ox:ox + room_w] = True
        _carve_obstacles(rng, navigable, int(rng.integers(n_obstacles[0], n_obstacles[1] + 1)))

        count_large = int(rng.integers(n_large[0], n_large[1] + 1)) if n_large[1] > 0 else 0
        classes: list[str] = []
        if count_large > 0:
            count_large = max(count_large, 4)
            # one instance per class (class-level targeting stays unambiguous);
            # guarantee task affordances: one articulated container, two surfaces
            classes.append("fridge" if rng.random() < 0.5
                           else str(rng.choice(("cabinet", "drawer"))))
            surfaces = list(SURFACE_CONTAINERS)
            rng.shuffle(surfaces)
            classes.extend(surfaces[:2])
            rest = [c for c in LARGE_CLASSES if c not in classes]
            rng.shuffle(rest)
            classes.extend(rest[:max(0, count_large - len(classes))])
            rng.shuffle(classes)

        large_objects: list[LargeObject] = []
        occupied: set[tuple[int, int]] = set()
        failed = False
        for class_id in classes:
            cells = _place_large(rng, G, navigable, occupied, class_id)
            if cells is None:
                failed = True
                break
            occupied.update(cells)
            large_objects.append(LargeObject(
                class_id=class_id,
                cells=cells,
                articulated=class_id in ARTICULATED_CLASSES,
                height_class=DEFAULT_HEIGHT_CLASS[class_id],
            ))
        if failed or len(large_objects) < 3:
            continue
        for i, obj in enumerate(large_objects):
            obj.index = i
            for (x, y) in obj.cells:
                navigable[y, x] = False

        containers = [o for o in large_objects
                      if o.class_id in SURFACE_CONTAINERS + ARTICULATED_CONTAINERS]
        if len(containers) < 2:
            continue
        count_small = int(rng.integers(n_small[0], n_small[1] + 1))
        small_objects: list[SmallObject] = []
        used_cells: set[tuple[int, int]] = set()
        class_holders: dict[str, set[int]] = {}
        for i in range(count_small):
            if i > 0 and rng.random() < 0.35:
                class_id = small_objects[0].class_id
            else:
                class_id = str(rng.choice(SMALL_CLASSES))
            # same-class instances go on distinct containers so that
            # class-level targeting stays unambiguous at reach range
            taken = class_holders.setdefault(class_id, set())
            pool = [c for c in containers if c.index not in taken]
            if not pool:
                continue
            holder = pool[int(rng.integers(len(pool)))]
            free = [c for c in holder.cells if c not in used_cells]
            if not free:
                continue
            cell = free[int(rng.integers(len(free)))]
            used_cells.add(cell)
            taken.add(holder.index)
            small_objects.append(SmallObject(
                class_id=class_id,
                cell=cell,
                container=holder.index,
                height_class=holder.height_class,
            ))
        if len(small_objects) < n_small[0]:
            continue

        scene = Scene(grid_size=G, navigable=navigable,
                      large_objects=large_objects, small_objects=small_objects)
        try:
            scene.validate()
        except ValueError:
            continue
        if any(not gt_waypoints(scene, o) for o in large_objects + small_objects):
            continue
        return scene
    raise GenerationFailed(f"no valid scene after {GENERATOR_RETRIES} attempts")


# --------------------------------------------------------------------------
# task generation
# --------------------------------------------------------------------------

def _nav_instruction(rng, class_id: str) -> str:
    verb = ("go to the {}", "walk to the {}", "turn around and head to the {}")
    return verb[int(rng.integers(len(verb)))].format(display_name(class_id))


def _nav_subgoal(rng, scene, target, container_obj, instance) -> Subgoal:
    place = container_obj.class_id if container_obj is not None else target
    return Subgoal(
        instruction=_nav_instruction(rng, place),
        kind="navigation",
        target_class=target,
        container_class=container_obj.class_id if container_obj is not None else None,
        instance=instance,
    )


def _pick_subgoals(rng, scene, small: SmallObject) -> list[Subgoal]:
    holder = scene.large_objects[small.container] if small.container is not None else None
    pick_instr = f"pick up the {display_name(small.class_id)}"
    if holder is not None:
        pick_instr += f" from the {display_name(holder.class_id)}"
    from .world import InteractionKind
    return [
        _nav_subgoal(rng, scene, small.class_id, holder, small.index),
        Subgoal(instruction=pick_instr, kind="interaction", target_class=small.class_id,
                container_class=holder.class_id if holder else None,
                interaction_kind=InteractionKind.PICK_UP, instance=small.index),
    ]


def _put_subgoals(rng, scene, small: SmallObject, dest: LargeObject,
                  preposition: str) -> list[Subgoal]:
    from .world import InteractionKind
    return [
        Subgoal(instruction=_nav_instruction(rng, dest.class_id), kind="navigation",
                target_class=dest.class_id, instance=dest.index),
        Subgoal(instruction=f"put the {display_name(small.class_id)} {preposition} "
                            f"the {display_name(dest.class_id)}",
                kind="interaction", target_class=dest.class_id,
                interaction_kind=InteractionKind.PUT, instance=dest.index),
    ]


def generate_task(scene: Scene, rng: np.random.Generator) -> Task:
    """Sample a pick-and-place style task the scene can support."""
    from .world import InteractionKind

    smalls = list(scene.small_objects)
    surfaces = [o for o in scene.large_objects if o.class_id in SURFACE_CONTAINERS]
    articulated = [o for o in scene.large_objects if o.articulated]

    by_class: dict[str, list[SmallObject]] = {}
    for s in smalls:
        by_class.setdefault(s.class_id, []).append(s)
    duo_classes = [
        c for c, objs in by_class.items()
        if len(objs) >= 2 and objs[0].container != objs[1].container
    ]

    families = ["pick_place"]
    if articulated:
        families.append("open_place")
    if duo_classes and surfaces:
        families.append("pick_two")
    weights = {"pick_place": 0.45, "open_place": 0.4, "pick_two": 0.15}
    probs = np.array([weights[f] for f in families])
    family = families[int(rng.choice(len(families), p=probs / probs.sum()))]

    if family == "pick_two":
        cls = duo_classes[int(rng.integers(len(duo_classes)))]
        first, second = by_class[cls][0], by_class[cls][1]
        dest_pool = [o for o in surfaces
                     if o.index not in (first.container, second.container)] or surfaces
        dest = dest_pool[int(rng.integers(len(dest_pool)))]
        subgoals = (
            _pick_subgoals(rng, scene, first) + _put_subgoals(rng, scene, first, dest, "on")
            + _pick_subgoals(rng, scene, second) + _put_subgoals(rng, scene, second, dest, "on")
        )
        conditions = [
            GoalCondition("picked", cls, count=1),
            GoalCondition("in_container", cls, dest.class_id, count=1),
            GoalCondition("picked", cls, count=2),
            GoalCondition("in_container", cls, dest.class_id, count=2),
        ]
        goal = f"place two {display_name(cls)}s on the {display_name(dest.class_id)}"
        return Task(goal, subgoals, conditions)

    small = smalls[int(rng.integers(len(smalls)))]
    if family == "open_place":
        dest_pool = [o for o in articulated if o.index != small.container] or articulated
        dest = dest_pool[int(rng.integers(len(dest_pool)))]
        subgoals = _pick_subgoals(rng, scene, small)
        subgoals.append(Subgoal(instruction=_nav_instruction(rng, dest.class_id),
                                kind="navigation", target_class=dest.class_id,
                                instance=dest.index))
        subgoals.extend([
            Subgoal(instruction=f"open the {display_name(dest.class_id)}",
                    kind="interaction", target_class=dest.class_id,
                    interaction_kind=InteractionKind.OPEN, instance=dest.index),
            Subgoal(instruction=f"put the {display_name(small.class_id)} in "
                                f"the {display_name(dest.class_id)}",
                    kind="interaction", target_class=dest.class_id,
                    interaction_kind=InteractionKind.PUT, instance=dest.index),
            Subgoal(instruction=f"close the {display_name(dest.class_id)}",
                    kind="interaction", target_class=dest.class_id,
                    interaction_kind=InteractionKind.CLOSE, instance=dest.index),
        ])
        conditions = [
            GoalCondition("picked", small.class_id),
            GoalCondition("opened_once", dest.class_id),
            GoalCondition("in_container", small.class_id, dest.class_id),
            GoalCondition("closed_at_end", dest.class_id),
        ]
        goal = (f"move the {display_name(small.class_id)} to the inside of "
                f"the {display_name(dest.class_id)}")
        return Task(goal, subgoals, conditions)

    dest_pool = [o for o in surfaces if o.index != small.container] or surfaces
    if not dest_pool:
        raise GenerationFailed("scene offers no destination surface")
    dest = dest_pool[int(rng.integers(len(dest_pool)))]
    subgoals = _pick_subgoals(rng, scene, small) + _put_subgoals(rng, scene, small, dest, "on")
    conditions = [
        GoalCondition("picked", small.class_id),
        GoalCondition("in_container", small.class_id, dest.class_id),
    ]
    goal = f"move the {display_name(small.class_id)} to the {display_name(dest.class_id)}"
    return Task(goal, subgoals, conditions)


# --------------------------------------------------------------------------
# batch running
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Ablations:
    no_backup: bool = False
    waypoint_strategy: str = "both"
    no_horizon_search: bool = False


@dataclass(frozen=True)
class RunConfig:
    base_seed: int = 0
    episodes: int = 20
    policy: str = "instruction_guided"
    noise: NoiseModel = NoiseModel()
    oracle_mode: str = "none"
    perturbation: str = "none"
    ablations: Ablations = Ablations()
    grid_size: int = 37
    arm: str = "default"
    out: str | None = None

    def execution_config(self) -> ExecutionConfig:
        return ExecutionConfig(
            noise=self.noise,
            policy=PolicyConfig(kind=self.policy),
            oracle_mode=self.oracle_mode,
            perturbation=self.perturbation,
            waypoint_strategy=self.ablations.waypoint_strategy,
            no_backup=self.ablations.no_backup,
            no_horizon_search=self.ablations.no_horizon_search,
        )


def run_episode(config: RunConfig, episode_index: int,
                record_observations: bool = False) -> tuple[EpisodeResult, Scene, Task]:
    scene = generate_scene(episode_rng(config.base_seed, episode_index, 0),
                           grid_size=config.grid_size)
    task = generate_task(scene, episode_rng(config.base_seed, episode_index, 1))
    result = execute_task(
        scene, task, config.execution_config(),
        rng_policy=episode_rng(config.base_seed, episode_index, 2),
        rng_perception=episode_rng(config.base_seed, episode_index, 3),
        rng_task=episode_rng(config.base_seed, episode_index, 4),
        record_observations=record_observations,
    )
    return result, scene, task


def batch_coverage_efficiency(results: list[EpisodeResult]) -> float:
    """Total coverage over total un-augmented exploration steps."""
    raw = sum(r.raw_exploration_actions for r in results)
    if raw == 0:
        return 0.0
    return sum(r.coverage for r in results) / raw


def summarize(config: RunConfig, results: list[EpisodeResult]) -> dict:
    s = score(results)
    n = len(results)
    return {
        "csv_format": CSV_FORMAT_VERSION,
        "arm": config.arm,
        "policy": config.policy,
        "oracle_mode": config.oracle_mode,
        "perturbation": config.perturbation,
        "waypoint_strategy": config.ablations.waypoint_strategy,
        "no_backup": int(config.ablations.no_backup),
        "no_horizon_search": int(config.ablations.no_horizon_search),
        "episodes": n,
        "success_rate": f"{s['success_rate']:.6f}",
        "goal_condition": f"{s['goal_condition']:.6f}",
        "coverage": f"{sum(r.coverage for r in results) / n:.6f}",
        "coverage_efficiency": f"{batch_coverage_efficiency(results):.6f}",
        "mean_steps": f"{sum(r.steps for r in results) / n:.6f}",
        "mean_failures": f"{sum(r.failures for r in results) / n:.6f}",
    }


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_HEADER, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def write_trace(path: Path, config: RunConfig, episode_index: int,
                scene: Scene, result: EpisodeResult) -> None:
    """JSON-lines trace: a metadata record, then one record per executed step."""
    meta = {
        "format": TRACE_FORMAT_VERSION,
        "base_seed": config.base_seed,
        "episode_index": episode_index,
        "grid_size": scene.grid_size,
        "noise": {
            "p_false_negative": config.noise.p_false_negative,
            "p_false_positive": config.noise.p_false_positive,
            "confidence_jitter": config.noise.confidence_jitter,
            "detection_decay": config.noise.detection_decay,
        },
        "scene": scene_to_json(scene),
        "success": result.success,
        "goal_cond": result.goal_cond,
    }
    lines = [json.dumps(meta, sort_keys=True)]
    if result.trace is not None:
        for s in result.trace.trace.steps:
            lines.append(json.dumps({
                "t": s.t,
                "pose": list(s.pose),
                "action": s.action,
                "injected": s.injected,
                "subgoal_index": s.subgoal_index,
            }, sort_keys=True))
    path.write_text("\n".join(lines) + "\n")


def run_batch(config: RunConfig, write_figures: bool = True) -> list[dict]:
    """Execute config.episodes episodes, write traces + metrics CSV, return rows."""
    results = []
    out_dir = Path(config.out) if config.out else None
    trace_dir = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        trace_dir = out_dir / "traces"
        trace_dir.mkdir(exist_ok=True)
    for i in range(config.episodes):
        result, scene, task = run_episode(config, i)
        results.append(result)
        if trace_dir is not None:
            write_trace(trace_dir / f"ep_{i:04d}.jsonl", config, i, scene, result)
    rows = [summarize(config, results)]
    if out_dir is not None:
        (out_dir / "metrics.csv").write_text(rows_to_csv(rows))
        if write_figures:
            from .report import save_summary_figure
            fig_dir = out_dir / "figures"
            fig_dir.mkdir(exist_ok=True)
            save_summary_figure(rows, fig_dir / "summary.png")
    return rows


ABLATION_TABLES = {
    "table1": (
        ("gt_navigation", {"oracle_mode": "gt_navigation"}),
        ("gt_nav_displacement", {"oracle_mode": "gt_navigation", "perturbation": "displacement"}),
        ("gt_nav_horizon", {"oracle_mode": "gt_navigation", "perturbation": "horizon"}),
    ),
    "table3": (
        ("full", {"policy": "instruction_guided"}),
        ("rand_exploration", {"policy": "random"}),
        ("no_language", {"policy": "frontier_only"}),
        ("partial_language", {"policy": "partial_language"}),
        ("no_explored_area", {"policy": "no_explored_area"}),
    ),
    "table4": (
        ("full", {}),
        ("map_only", {"ablations": Ablations(waypoint_strategy="map_only")}),
        ("detection_only", {"ablations": Ablations(waypoint_strategy="detection_only")}),
        ("no_backup", {"ablations": Ablations(no_backup=True)}),
        ("rand_horizon", {"perturbation": "horizon"}),
    ),
}


def expand_ablation(config: RunConfig, table: str) -> list[RunConfig]:
    if table not in ABLATION_TABLES:
        raise ValueError(f"unknown ablation table {table!r}")
    return [replace(config, arm=name, **overrides)
            for name, overrides in ABLATION_TABLES[table]]


def run_ablation(config: RunConfig, table: str, write_figures: bool = True) -> list[dict]:
    """Run every arm of a named ablation table over the same seeds."""
    rows = []
    for arm in expand_ablation(config, table):
        results = [run_episode(arm, i)[0] for i in range(arm.episodes)]
        rows.append(summarize(arm, results))
    if config.out:
        out_dir = Path(config.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "metrics.csv").write_text(rows_to_csv(rows))
        if write_figures:
            from .report import save_summary_figure
            fig_dir = out_dir / "figures"
            fig_dir.mkdir(exist_ok=True)
            save_summary_figure(rows, fig_dir / "summary.png")
    return rows
