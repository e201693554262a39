"""Task model, templated-instruction parsing and the two-phase executor.

Instructions come from a closed template grammar over the class lexicon,
so parsing is exact: a keyword rule classifies each subgoal as navigation
or interaction, and noun extraction against the lexicon recovers target
and container classes. The executor runs exploration first, then walks
the subgoal list: navigation subgoals resolve a waypoint, plan to it and
pick a horizon; interaction subgoals run a short scripted action sequence
with horizon backtracking on failure.
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BudgetExhausted, EmptyInput, NoWaypoint, ParseError, Unreachable
from .exploration import (
    ExplorationResult,
    PolicyConfig,
    SubgoalTarget,
    coverage_metrics,
    run_exploration,
)
from .geometry import HORIZONS
from .mapping import postprocess_navigable
from .perception import NoiseModel
from .planner import PlanNode, backtrack_horizons, plan_path, select_horizon, walk_horizon
from .waypoints import resolve_target
from .world import (
    ARTICULATED_CLASSES,
    LARGE_CLASS_INDEX,
    SMALL_CLASS_INDEX,
    Interact,
    InteractionKind,
    LargeObject,
    Scene,
    Simulator,
    SmallObject,
    gt_waypoints,
)

NAVIGATION = "navigation"
INTERACTION = "interaction"

TASK_FORMAT_VERSION = 1

# Surface forms accepted (and emitted) for each class.
_DISPLAY = {
    "stove_burner": "stove burner",
    "diningtable": "dining table",
    "sidetable": "side table",
    "coffeetable": "coffee table",
    "countertop": "counter",
    "spray_bottle": "spray bottle",
}
_EXTRA_SURFACE = {
    "countertop": ("countertop",),
    "diningtable": ("diningtable",),
    "sidetable": ("sidetable",),
    "coffeetable": ("coffeetable",),
    "stove_burner": ("stove_burner",),
    "spray_bottle": ("spray_bottle",),
}


def display_name(class_id: str) -> str:
    return _DISPLAY.get(class_id, class_id)


def _build_lexicon() -> dict[str, str]:
    lex: dict[str, str] = {}
    for cls in list(LARGE_CLASS_INDEX) + list(SMALL_CLASS_INDEX):
        lex[display_name(cls)] = cls
        lex[cls] = cls
        for extra in _EXTRA_SURFACE.get(cls, ()):
            lex[extra] = cls
    return lex


LEXICON = _build_lexicon()

_NAV_RE = re.compile(r"^(?:go to|walk to|turn around and head to) the (.+)$")
_PICK_RE = re.compile(r"^pick up the (.+?)(?: from the (.+))?$")
_PUT_RE = re.compile(r"^put the (.+?) (?:on|in) the (.+)$")
_OPEN_RE = re.compile(r"^open the (.+)$")
_CLOSE_RE = re.compile(r"^close the (.+)$")
_SLICE_RE = re.compile(r"^slice the (.+)$")
_TOGGLE_RE = re.compile(r"^turn (on|off) the (.+)$")

_INTERACTION_PREFIXES = ("pick up ", "open ", "close ", "put ", "slice ", "turn on ", "turn off ")
_NAV_PREFIXES = ("go to ", "walk to ", "turn around and head to ")


def _lookup(noun: str) -> str:
    noun = noun.strip()
    if noun not in LEXICON:
        raise ParseError(f"unknown noun {noun!r}")
    return LEXICON[noun]


def parse_subgoal_kind(instruction: str) -> str:
    """Classify an instruction as navigation or interaction."""
    text = instruction.strip().lower()
    if text.startswith(_INTERACTION_PREFIXES):
        return INTERACTION
    if text.startswith(_NAV_PREFIXES):
        return NAVIGATION
    raise ParseError(f"instruction outside the grammar: {instruction!r}")


def parse_nav_place(instruction: str) -> str:
    """The class named by a navigation instruction."""
    m = _NAV_RE.match(instruction.strip().lower())
    if not m:
        raise ParseError(f"not a navigation instruction: {instruction!r}")
    return _lookup(m.group(1))


def parse_interaction(instruction: str) -> tuple[InteractionKind, str, str | None]:
    """(kind, target class the action is issued against, source container)."""
    text = instruction.strip().lower()
    m = _PICK_RE.match(text)
    if m:
        return InteractionKind.PICK_UP, _lookup(m.group(1)), \
            (_lookup(m.group(2)) if m.group(2) else None)
    m = _PUT_RE.match(text)
    if m:
        return InteractionKind.PUT, _lookup(m.group(2)), None
    m = _OPEN_RE.match(text)
    if m:
        return InteractionKind.OPEN, _lookup(m.group(1)), None
    m = _CLOSE_RE.match(text)
    if m:
        return InteractionKind.CLOSE, _lookup(m.group(1)), None
    m = _SLICE_RE.match(text)
    if m:
        return InteractionKind.SLICE, _lookup(m.group(1)), None
    m = _TOGGLE_RE.match(text)
    if m:
        kind = InteractionKind.TOGGLE_ON if m.group(1) == "on" else InteractionKind.TOGGLE_OFF
        return kind, _lookup(m.group(2)), None
    raise ParseError(f"not an interaction instruction: {instruction!r}")


def parse_targets(nav_instruction: str, next_instruction: str | None) -> tuple[str, str | None]:
    """Target and container for a navigation subgoal.

    The following interaction instruction refines the target: navigating
    to a container before a pick makes the picked object the target and
    the named place its container.
    """
    place = parse_nav_place(nav_instruction)
    if next_instruction is None:
        return place, None
    try:
        kind, obj, _src = parse_interaction(next_instruction)
    except ParseError:
        return place, None
    if kind in (InteractionKind.PICK_UP, InteractionKind.SLICE) and obj != place:
        return obj, place
    return place, None


@dataclass
class Subgoal:
    instruction: str
    kind: str
    target_class: str
    container_class: str | None = None
    interaction_kind: InteractionKind | None = None
    instance: int | None = None  # ground-truth annotation for oracle modes


@dataclass
class GoalCondition:
    """Class-level predicate over the final scene state.

    Class-level (not instance-level) on purpose: with several same-class
    instances the agent may legitimately manipulate any of them.
    """

    kind: str  # picked | opened_once | in_container | closed_at_end | sliced | toggled_on
    object_class: str | None = None
    container_class: str | None = None
    count: int = 1

    def _instances(self, scene: Scene, pool) -> list:
        return [o for o in pool if o.class_id == self.object_class]

    def satisfied(self, scene: Scene, objects) -> bool:
        if self.kind == "picked":
            picked = [o for o in self._instances(scene, scene.small_objects)
                      if o.index in objects.picked_ever]
            return len(picked) >= self.count
        if self.kind == "opened_once":
            return any(o.index in objects.opened_ever
                       for o in self._instances(scene, scene.large_objects))
        if self.kind == "in_container":
            placed = 0
            for o in self._instances(scene, scene.small_objects):
                holder = objects.small_container[o.index]
                if holder is not None \
                        and scene.large_objects[holder].class_id == self.container_class:
                    placed += 1
            return placed >= self.count
        if self.kind == "closed_at_end":
            return all(not objects.opened[o.index]
                       for o in self._instances(scene, scene.large_objects))
        if self.kind == "sliced":
            return any(o.index in objects.sliced_ever
                       for o in self._instances(scene, scene.small_objects))
        if self.kind == "toggled_on":
            return any(o.index in objects.toggled_on
                       for o in self._instances(scene, scene.large_objects))
        raise ValueError(f"unknown goal condition {self.kind!r}")


@dataclass
class Task:
    goal_description: str
    subgoals: list[Subgoal]
    goal_conditions: list[GoalCondition]


def task_to_json(task: Task) -> dict:
    return {
        "format": TASK_FORMAT_VERSION,
        "goal": task.goal_description,
        "subgoals": [
            {
                "instruction": s.instruction,
                "kind": s.kind,
                "target": s.target_class,
                "container": s.container_class,
                "interaction": s.interaction_kind.value if s.interaction_kind else None,
                "instance": s.instance,
            }
            for s in task.subgoals
        ],
        "goal_conditions": [
            {
                "kind": c.kind,
                "object_class": c.object_class,
                "container_class": c.container_class,
                "count": c.count,
            }
            for c in task.goal_conditions
        ],
    }


def task_from_json(data: dict) -> Task:
    if data.get("format") != TASK_FORMAT_VERSION:
        raise ValueError(f"unsupported task format {data.get('format')!r}")
    subgoals = [
        Subgoal(
            instruction=s["instruction"],
            kind=s["kind"],
            target_class=s["target"],
            container_class=s.get("container"),
            interaction_kind=InteractionKind(s["interaction"]) if s.get("interaction") else None,
            instance=s.get("instance"),
        )
        for s in data["subgoals"]
    ]
    conditions = [GoalCondition(**c) for c in data["goal_conditions"]]
    return Task(goal_description=data["goal"], subgoals=subgoals, goal_conditions=conditions)


def save_task(task: Task, path: str | Path) -> None:
    Path(path).write_text(json.dumps(task_to_json(task), sort_keys=True))


def load_task(path: str | Path) -> Task:
    return task_from_json(json.loads(Path(path).read_text()))


@dataclass
class SubgoalOutcome:
    index: int
    kind: str
    target: str
    ok: bool
    note: str = ""


@dataclass
class EpisodeResult:
    success: bool
    goal_cond: float
    steps: int
    failures: int
    per_subgoal: list[SubgoalOutcome] = field(default_factory=list)
    coverage: int = 1
    coverage_efficiency: float = 0.0
    raw_exploration_actions: int = 0
    exploration_steps: int = 0
    execution_steps: int = 0
    trace: ExplorationResult | None = None


def score(results: list[EpisodeResult]) -> dict:
    """Mean success rate and mean goal-condition fraction."""
    if not results:
        raise EmptyInput("no episode results to score")
    return {
        "success_rate": sum(r.success for r in results) / len(results),
        "goal_condition": sum(r.goal_cond for r in results) / len(results),
    }


@dataclass(frozen=True)
class ExecutionConfig:
    noise: NoiseModel = NoiseModel()
    policy: PolicyConfig = PolicyConfig()
    oracle_mode: str = "none"        # none | gt_navigation | gt_all
    perturbation: str = "none"       # none | displacement | horizon
    waypoint_strategy: str = "both"  # both | map_only | detection_only
    no_backup: bool = False
    no_horizon_search: bool = False

    def __post_init__(self):
        if self.oracle_mode not in ("none", "gt_navigation", "gt_all"):
            raise ValueError(f"bad oracle mode {self.oracle_mode!r}")
        if self.perturbation not in ("none", "displacement", "horizon"):
            raise ValueError(f"bad perturbation {self.perturbation!r}")
        if self.waypoint_strategy not in ("both", "map_only", "detection_only"):
            raise ValueError(f"bad waypoint strategy {self.waypoint_strategy!r}")
        if self.perturbation != "none" and self.oracle_mode == "gt_all":
            raise ValueError("perturbations make no sense with gt_all interactions")


def subgoal_targets(task: Task) -> list[SubgoalTarget]:
    """Exploration targets for each navigation subgoal, via the parser."""
    out = []
    for i, sg in enumerate(task.subgoals):
        if sg.kind != NAVIGATION:
            continue
        nxt = task.subgoals[i + 1].instruction if i + 1 < len(task.subgoals) else None
        target, container = parse_targets(sg.instruction, nxt)
        out.append(SubgoalTarget(
            target_class=target,
            container_class=container,
            nav_only_class=parse_nav_place(sg.instruction),
        ))
    return out


def _gt_instance(scene: Scene, sim: Simulator, sg: Subgoal):
    """Resolve the scene object a subgoal refers to, preferring the annotation."""
    if sg.target_class in LARGE_CLASS_INDEX:
        pool = [o for o in scene.large_objects if o.class_id == sg.target_class]
    else:
        pool = [o for o in scene.small_objects if o.class_id == sg.target_class]
    if not pool:
        return None
    if sg.instance is not None:
        for o in pool:
            if o.index == sg.instance:
                return o
    for o in pool:
        if gt_waypoints(scene, o, sim.objects):
            return o
    return pool[0]


def _teleport_gt(sim: Simulator, sg: Subgoal, cfg: ExecutionConfig,
                 rng: np.random.Generator) -> int | None:
    """Oracle navigation: jump to a ground-truth waypoint, maybe perturbed.

    Returns the horizon to anchor interaction retries on, or None when the
    perturbation disables the horizon machinery.
    """
    obj = _gt_instance(sim.scene, sim, sg)
    if obj is None:
        return None
    wps = sorted(sim.gt_waypoints(obj))
    if not wps:
        return None
    x, y, r, h = wps[int(rng.integers(len(wps)))]
    if cfg.perturbation == "displacement":
        dx = int(rng.choice((-1, 1)))
        dy = int(rng.choice((-1, 1)))
        for cand in ((x + dx, y + dy), (x + dx, y), (x, y + dy), (x, y)):
            if sim.scene.is_navigable(*cand):
                x, y = cand
                break
    anchor: int | None = h
    if cfg.perturbation == "horizon":
        h = int(rng.choice(HORIZONS))
        anchor = None  # backtracking disabled in this arm
    sim.teleport((x, y, r, h))
    return anchor


def _force_interact(sim: Simulator, kind: InteractionKind, obj) -> None:
    """gt_all oracle: apply the interaction effect directly (one step)."""
    objects = sim.objects
    held_class = sim.state.o
    if kind is InteractionKind.PICK_UP and isinstance(obj, SmallObject):
        objects.held = obj.index
        objects.small_cell[obj.index] = None
        objects.small_container[obj.index] = None
        objects.picked_ever.add(obj.index)
        held_class = obj.class_id
    elif kind is InteractionKind.PUT and isinstance(obj, LargeObject) and objects.held is not None:
        idx = objects.held
        objects.small_cell[idx] = min(obj.cells, key=lambda c: (c[1], c[0]))
        objects.small_container[idx] = obj.index
        objects.held = None
        held_class = None
    elif kind is InteractionKind.OPEN and isinstance(obj, LargeObject):
        objects.opened[obj.index] = True
        objects.opened_ever.add(obj.index)
    elif kind is InteractionKind.CLOSE and isinstance(obj, LargeObject):
        objects.opened[obj.index] = False
    elif kind is InteractionKind.SLICE and isinstance(obj, SmallObject):
        objects.sliced_ever.add(obj.index)
    elif kind is InteractionKind.TOGGLE_ON and isinstance(obj, LargeObject):
        objects.toggled_on.add(obj.index)
    elif kind is InteractionKind.TOGGLE_OFF and isinstance(obj, LargeObject):
        objects.toggled_on.discard(obj.index)
    sim.state = dataclasses.replace(sim.state, o=held_class,
                                    steps_taken=sim.state.steps_taken + 1)


class _Executor:
    """Execution-phase state shared across subgoals of one episode."""

    def __init__(self, sim: Simulator, cfg: ExecutionConfig,
                 rng_task: np.random.Generator, rng_perception: np.random.Generator,
                 semantic=None, log=None):
        self.sim = sim
        self.cfg = cfg
        self.rng_task = rng_task
        self.rng_perception = rng_perception
        self.semantic = semantic
        self.log = log
        self.nav_grid = None
        if semantic is not None:
            grid = postprocess_navigable(semantic)
            grid[sim.state.y, sim.state.x] = True
            self.nav_grid = grid
        self.horizon_anchor: int | None = None
        self.backtracking = True

    # navigation -----------------------------------------------------------

    def run_navigation(self, sg: Subgoal, target: str, container: str | None) -> bool:
        cfg = self.cfg
        if cfg.oracle_mode in ("gt_navigation", "gt_all"):
            anchor = _teleport_gt(self.sim, sg, cfg, self.rng_task)
            self.horizon_anchor = anchor
            self.backtracking = cfg.perturbation != "horizon"
            return True
        wp = resolve_target(self.semantic, self.nav_grid, self.log, target, container,
                            strategy=cfg.waypoint_strategy, no_backup=cfg.no_backup)
        gx, gy = wp.x, wp.y
        if cfg.perturbation == "displacement":
            dx = int(self.rng_task.choice((-1, 1)))
            dy = int(self.rng_task.choice((-1, 1)))
            for cand in ((gx + dx, gy + dy), (gx + dx, gy), (gx, gy + dy), (gx, gy)):
                if 0 <= cand[0] < self.sim.scene.grid_size \
                        and 0 <= cand[1] < self.sim.scene.grid_size \
                        and self.nav_grid[cand[1], cand[0]]:
                    gx, gy = cand
                    break
        start = PlanNode(self.sim.state.x, self.sim.state.y, self.sim.state.r)
        plan = plan_path(self.nav_grid, start, PlanNode(gx, gy, wp.r))
        blocked = 0
        for action in plan.actions:
            outcome = self.sim.step(action)
            while not outcome.success:
                blocked += 1
                if blocked >= 10:
                    return False
                outcome = self.sim.step(action)
            blocked = 0
        self.backtracking = True
        if cfg.perturbation == "horizon":
            walk_horizon(self.sim, int(self.rng_task.choice(HORIZONS)))
            self.horizon_anchor = None
            self.backtracking = False
        elif cfg.no_horizon_search:
            self.horizon_anchor = None
        else:
            self.horizon_anchor = select_horizon(self.sim, target, cfg.noise,
                                                 self.rng_perception)
        return True

    # interaction ------------------------------------------------------------

    def _script(self, kind: InteractionKind, target: str, source_container: str | None) -> bool:
        sim = self.sim
        if kind is InteractionKind.PICK_UP and source_container in ARTICULATED_CLASSES:
            closed_exists = any(
                o.class_id == source_container and o.articulated and not sim.objects.opened[o.index]
                for o in sim.scene.large_objects
            )
            auto_opened = False
            if closed_exists:
                auto_opened = bool(sim.interact(Interact(InteractionKind.OPEN, source_container)))
            ok = bool(sim.interact(Interact(InteractionKind.PICK_UP, target)))
            if auto_opened:
                sim.interact(Interact(InteractionKind.CLOSE, source_container))
            return ok
        return bool(sim.interact(Interact(kind, target)))

    def run_interaction(self, sg: Subgoal) -> bool:
        kind, target, source = parse_interaction(sg.instruction)
        if self.cfg.oracle_mode == "gt_all":
            obj = _gt_instance(self.sim.scene, self.sim, sg)
            if obj is None:
                return False
            _force_interact(self.sim, kind, obj)
            return True
        anchor = self.horizon_anchor if self.horizon_anchor is not None else self.sim.state.h
        if self.backtracking:
            candidates = backtrack_horizons(anchor)
        else:
            candidates = [self.sim.state.h]
        for h in candidates:
            if not walk_horizon(self.sim, h):
                return False
            if self._script(kind, target, source):
                return True
        return False


def execute_task(scene: Scene, task: Task, cfg: ExecutionConfig,
                 rng_policy: np.random.Generator, rng_perception: np.random.Generator,
                 rng_task: np.random.Generator,
                 start: tuple[int, int] | None = None, start_r: int = 0,
                 record_observations: bool = False) -> EpisodeResult:
    """Run one episode: exploration phase, then sequential subgoal execution.

    All failures fold into the result; the episode ends early on exhausted
    budgets, an unresolvable waypoint or an unreachable goal.
    """
    if start is None:
        ys, xs = np.nonzero(scene.navigable)
        i = int(rng_task.integers(len(xs)))
        start = (int(xs[i]), int(ys[i]))
        start_r = int(rng_task.choice((0, 90, 180, 270)))
    sim = Simulator(scene, start, r=start_r, h=30)

    explo: ExplorationResult | None = None
    if cfg.oracle_mode == "none":
        explo = run_exploration(sim, subgoal_targets(task), cfg.policy, cfg.noise,
                                rng_policy, rng_perception,
                                record_observations=record_observations)
        cov = coverage_metrics(explo.trace)
        executor = _Executor(sim, cfg, rng_task, rng_perception,
                             semantic=explo.semantic, log=explo.log)
    else:
        cov = {"coverage": 1, "coverage_efficiency": 0.0}
        executor = _Executor(sim, cfg, rng_task, rng_perception)

    exploration_steps = explo.steps if explo else 0
    outcomes: list[SubgoalOutcome] = []
    for idx, sg in enumerate(task.subgoals):
        if sim.state.budget_exhausted:
            outcomes.append(SubgoalOutcome(idx, sg.kind, sg.target_class, False, "budget"))
            continue
        try:
            if sg.kind == NAVIGATION:
                nxt = task.subgoals[idx + 1].instruction if idx + 1 < len(task.subgoals) else None
                target, container = parse_targets(sg.instruction, nxt)
                ok = executor.run_navigation(sg, target, container)
                note = "" if ok else "navigation failed"
            else:
                ok = executor.run_interaction(sg)
                note = "" if ok else "interaction failed"
            outcomes.append(SubgoalOutcome(idx, sg.kind, sg.target_class, ok, note))
        except BudgetExhausted:
            outcomes.append(SubgoalOutcome(idx, sg.kind, sg.target_class, False, "budget"))
        except (NoWaypoint, Unreachable) as e:
            outcomes.append(SubgoalOutcome(idx, sg.kind, sg.target_class, False, str(e)))
            break

    n_cond = len(task.goal_conditions)
    satisfied = sum(c.satisfied(scene, sim.objects) for c in task.goal_conditions)
    goal_cond = satisfied / n_cond if n_cond else 1.0
    return EpisodeResult(
        success=goal_cond == 1.0,
        goal_cond=goal_cond,
        steps=sim.state.steps_taken,
        failures=sim.state.failures,
        per_subgoal=outcomes,
        coverage=cov["coverage"],
        coverage_efficiency=cov["coverage_efficiency"],
        raw_exploration_actions=len(explo.trace.raw_actions) if explo else 0,
        exploration_steps=exploration_steps,
        execution_steps=sim.state.steps_taken - exploration_steps,
        trace=explo,
    )
