"""Exploration phase: policies, action augmentation and coverage metrics.

Policies emit MoveAhead / RotateLeft / RotateRight / Stop one step at a
time. The executor augments the stream online: four RotateRight after
every second MoveAhead (a full sweep), and alternating LookDown/LookUp
pairs around every executed action so each visited (x, y, r) is observed
at three horizons. Every executed step feeds the mapping pipeline and the
detection log, and counts against both the phase budget (500 augmented
steps, 4 failures) and the episode budget.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import BudgetExhausted, MalformedInput, Unreachable
from .geometry import allo_to_ego
from .mapping import ExploredAreaMap, SemanticMap, postprocess_navigable
from .perception import NoiseModel, detect_large_objects, detect_small_objects, observe_partial_map
from .planner import PlanNode, plan_path
from .waypoints import DEFAULT_DETECTION_CONFIDENCE, DEFAULT_MAP_CONFIDENCE_FLOOR, DetectionLog
from .world import LARGE_CLASS_INDEX, NavAction, Simulator

EXPLORATION_STEP_LIMIT = 500
EXPLORATION_FAILURE_LIMIT = 4

# How close (Chebyshev) the agent must get to a container sighting before
# a small-object subgoal stops without a direct detection.
APPROACH_STOP_DISTANCE = 1

# Raw actions a single subgoal may consume before the policy gives up on
# it, so one unfindable target cannot starve the remaining subgoals.
SUBGOAL_RAW_ACTION_SHARE = 32

# Extra traversal cost for re-entering already-explored cells during
# frontier selection.
EXPLORED_PENALTY = 0.25

POLICY_KINDS = (
    "instruction_guided",
    "random",
    "frontier_only",
    "partial_language",
    "no_explored_area",
)


class ExplorationAction(Enum):
    MOVE_AHEAD = "MoveAhead"
    ROTATE_LEFT = "RotateLeft"
    ROTATE_RIGHT = "RotateRight"
    STOP = "Stop"


_NAV_FOR = {
    ExplorationAction.MOVE_AHEAD: NavAction.MOVE_AHEAD,
    ExplorationAction.ROTATE_LEFT: NavAction.ROTATE_LEFT,
    ExplorationAction.ROTATE_RIGHT: NavAction.ROTATE_RIGHT,
}


@dataclass(frozen=True)
class PolicyConfig:
    kind: str = "instruction_guided"
    stop_confidence: float = 0.9
    detection_confidence: float = DEFAULT_DETECTION_CONFIDENCE
    map_confidence_floor: float = DEFAULT_MAP_CONFIDENCE_FLOOR
    # a detection only stops the subgoal once its mask is this large,
    # i.e. the view was taken centered from interaction range
    stop_mask_area: float = 800.0
    max_steps: int = EXPLORATION_STEP_LIMIT
    max_failures: int = EXPLORATION_FAILURE_LIMIT

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.max_steps <= 0 or self.max_failures <= 0:
            raise ValueError("budgets must be positive")


@dataclass(frozen=True)
class SubgoalTarget:
    """What one navigation subgoal is looking for."""

    target_class: str
    container_class: str | None = None
    nav_only_class: str | None = None  # target parsed from the nav instruction alone


@dataclass
class TraceStep:
    t: int
    pose: tuple[int, int, int, int]
    action: str
    injected: bool
    subgoal_index: int
    ok: bool


@dataclass
class ExplorationTrace:
    steps: list[TraceStep] = field(default_factory=list)
    visited: set = field(default_factory=set)
    observations: list | None = None

    @property
    def raw_actions(self) -> list[str]:
        return [s.action for s in self.steps if not s.injected]

    @property
    def augmented_actions(self) -> list[str]:
        return [s.action for s in self.steps]


@dataclass
class ExplorationResult:
    trace: ExplorationTrace
    semantic: SemanticMap
    explored: ExploredAreaMap
    log: DetectionLog
    steps: int
    failures: int


def inject_rotations(raw: list) -> list:
    """Insert four RotateRight after every second MoveAhead."""
    out = []
    moves = 0
    for a in raw:
        out.append(a)
        if a in (ExplorationAction.MOVE_AHEAD, "MoveAhead", NavAction.MOVE_AHEAD):
            moves += 1
            if moves % 2 == 0:
                rot = ExplorationAction.ROTATE_RIGHT if isinstance(a, ExplorationAction) \
                    else (NavAction.ROTATE_RIGHT if isinstance(a, NavAction) else "RotateRight")
                out.extend([rot] * 4)
    return out


_LOOKS = {"LookUp", "LookDown", NavAction.LOOK_UP, NavAction.LOOK_DOWN}


def zigzag(seq: list) -> list:
    """Wrap a look-free action sequence with the alternating horizon sweep.

    Emits the prefix [LookDown, LookUp, LookUp], then after each action an
    alternating look pair starting with [LookDown, LookDown]. Output length
    is 3*len(seq) + 3 for non-empty input; empty input passes through.
    """
    if any(a in _LOOKS for a in seq):
        raise MalformedInput("sequence already contains look actions")
    if not seq:
        return []
    if isinstance(seq[0], NavAction):
        down, up = NavAction.LOOK_DOWN, NavAction.LOOK_UP
    else:
        down, up = "LookDown", "LookUp"
    out = [down, up, up]
    for i, a in enumerate(seq):
        out.append(a)
        out.extend([down, down] if i % 2 == 0 else [up, up])
    return out


def coverage_metrics(trace: ExplorationTrace) -> dict:
    """Coverage = distinct cells visited; efficiency = coverage per raw action."""
    coverage = max(len(trace.visited), 1)
    n_raw = len(trace.raw_actions)
    return {
        "coverage": coverage,
        "coverage_efficiency": coverage / n_raw if n_raw else 0.0,
    }


def _frontier_cells(explored_mask: np.ndarray) -> np.ndarray:
    """Explored cells with at least one in-bounds unexplored 4-neighbor."""
    unexplored = ~explored_mask
    near = np.zeros_like(explored_mask)
    near[1:, :] |= unexplored[:-1, :]
    near[:-1, :] |= unexplored[1:, :]
    near[:, 1:] |= unexplored[:, :-1]
    near[:, :-1] |= unexplored[:, 1:]
    return explored_mask & near


def _penalized_distances(traversable: np.ndarray, explored_mask: np.ndarray,
                         start: tuple[int, int]) -> dict[tuple[int, int], float]:
    """Dijkstra cell distances; entering an explored cell costs 1 + penalty."""
    G = traversable.shape[0]
    dist = {start: 0.0}
    heap = [(0.0, start)]
    while heap:
        d, (x, y) = heapq.heappop(heap)
        if d > dist.get((x, y), float("inf")):
            continue
        for dx, dy in ((0, -1), (1, 0), (0, 1), (-1, 0)):
            nx, ny = x + dx, y + dy
            if not (0 <= nx < G and 0 <= ny < G) or not traversable[ny, nx]:
                continue
            cost = 1.0 + (EXPLORED_PENALTY if explored_mask[ny, nx] else 0.0)
            nd = d + cost
            if nd < dist.get((nx, ny), float("inf")):
                dist[(nx, ny)] = nd
                heapq.heappush(heap, (nd, (nx, ny)))
    return dist


@dataclass
class PolicyContext:
    pose: tuple[int, int, int, int]
    semantic: SemanticMap
    navigable_estimate: np.ndarray
    explored: ExploredAreaMap
    log: DetectionLog
    target: SubgoalTarget | None
    rng: np.random.Generator

    def observed_mask(self) -> np.ndarray:
        """Cells that appeared in any observation window (nonzero anywhere)."""
        return self.semantic.grid.max(axis=2) > 0.0


class ExplorationPolicy:
    """Base class; subclasses implement one decision heuristic each."""

    def __init__(self, config: PolicyConfig):
        self.config = config
        self._plan: list[ExplorationAction] = []
        self._plan_goal: tuple[int, int] | None = None
        self._subgoal_actions = 0

    def reset_subgoal(self) -> None:
        self._plan.clear()
        self._plan_goal = None
        self._subgoal_actions = 0

    def invalidate(self) -> None:
        self._plan.clear()
        self._plan_goal = None

    def subgoal_exhausted(self) -> bool:
        self._subgoal_actions += 1
        return self._subgoal_actions > SUBGOAL_RAW_ACTION_SHARE

    def next_action(self, ctx: PolicyContext) -> ExplorationAction:
        raise NotImplementedError

    # planning helpers ----------------------------------------------------

    def _traversable(self, ctx: PolicyContext) -> np.ndarray:
        grid = ctx.navigable_estimate.copy()
        grid[ctx.pose[1], ctx.pose[0]] = True
        return grid

    def _plan_to_cell(self, ctx: PolicyContext, goal: tuple[int, int]) -> bool:
        """Cache a plan to the goal cell (any final rotation). False if unreachable."""
        grid = self._traversable(ctx)
        x, y, r, _ = ctx.pose
        try:
            plan = plan_path(grid, PlanNode(x, y, r), PlanNode(goal[0], goal[1], 0),
                             goal_any_rotation=True)
        except Unreachable:
            return False
        mapping = {
            NavAction.MOVE_AHEAD: ExplorationAction.MOVE_AHEAD,
            NavAction.ROTATE_LEFT: ExplorationAction.ROTATE_LEFT,
            NavAction.ROTATE_RIGHT: ExplorationAction.ROTATE_RIGHT,
        }
        self._plan = [mapping[a] for a in plan.actions]
        self._plan_goal = goal
        return True

    def _pop_plan(self) -> ExplorationAction | None:
        if self._plan:
            return self._plan.pop(0)
        return None

    def _nearest_navigable_to(self, ctx: PolicyContext, cell: tuple[int, int]) -> tuple[int, int] | None:
        grid = self._traversable(ctx)
        ys, xs = np.nonzero(grid)
        if len(xs) == 0:
            return None
        d2 = (xs - cell[0]) ** 2 + (ys - cell[1]) ** 2
        i = int(np.argmin(d2))
        return int(xs[i]), int(ys[i])

    def _frontier_action(self, ctx: PolicyContext) -> ExplorationAction | None:
        """Head for the nearest edge of observed space, penalizing ground
        already in the explored-area memory."""
        cached = self._pop_plan()
        if cached is not None:
            return cached
        traversable = self._traversable(ctx)
        frontier = _frontier_cells(ctx.observed_mask()) & traversable
        ys, xs = np.nonzero(frontier)
        if len(xs) == 0:
            return None
        explored_mask = ctx.explored.mask()
        dist = _penalized_distances(traversable, explored_mask, (ctx.pose[0], ctx.pose[1]))
        best = None
        for x, y in zip(xs.tolist(), ys.tolist()):
            d = dist.get((x, y))
            if d is None or d == 0.0:
                continue
            key = (d, y, x)
            if best is None or key < best[0]:
                best = (key, (x, y))
        if best is None:
            return None
        if not self._plan_to_cell(ctx, best[1]):
            return None
        return self._pop_plan()


class InstructionGuidedPolicy(ExplorationPolicy):
    """Pursue the subgoal target on the map, fall back to frontier search.

    Variants toggle what the policy is allowed to see: the detection log,
    the explored-area memory, or the refined target of the next subgoal.
    """

    def __init__(self, config: PolicyConfig, use_memory: bool = True,
                 nav_only_targets: bool = False):
        super().__init__(config)
        self.use_memory = use_memory
        self.nav_only_targets = nav_only_targets

    def _effective_target(self, target: SubgoalTarget) -> tuple[str, str | None]:
        if self.nav_only_targets and target.nav_only_class is not None:
            return target.nav_only_class, None
        return target.target_class, target.container_class

    def _best_detection(self, ctx: PolicyContext, cls: str):
        best = None
        for d in ctx.log.records:
            if d.class_id == cls and d.confidence >= self.config.detection_confidence:
                if best is None or d.mask_area > best.mask_area:
                    best = d
        return best

    def _should_stop(self, ctx: PolicyContext) -> bool:
        if ctx.target is None:
            return True
        cls, container = self._effective_target(ctx.target)
        cfg = self.config
        if cls in LARGE_CLASS_INDEX:
            channel = ctx.semantic.channel(LARGE_CLASS_INDEX[cls])
            return float(channel.max()) >= cfg.stop_confidence
        if not self.nav_only_targets:
            best = self._best_detection(ctx, cls)
            if best is not None:
                # keep closing in on the sighting until the view is taken
                # from interaction range
                return best.mask_area >= cfg.stop_mask_area
        if container is not None and container in LARGE_CLASS_INDEX:
            channel = ctx.semantic.channel(LARGE_CLASS_INDEX[container])
            if float(channel.max()) >= cfg.stop_confidence:
                flat = int(np.argmax(channel))
                py, px = divmod(flat, channel.shape[1])
                if max(abs(px - ctx.pose[0]), abs(py - ctx.pose[1])) <= APPROACH_STOP_DISTANCE:
                    return True
        return False

    def _pursuit_goal(self, ctx: PolicyContext) -> tuple[int, int] | None:
        cls, container = self._effective_target(ctx.target)
        if cls not in LARGE_CLASS_INDEX and not self.nav_only_targets:
            # a sighting beats the container channel: close in on it until
            # a point-blank view gets logged
            best = self._best_detection(ctx, cls)
            if best is not None:
                return self._nearest_navigable_to(ctx, best.cell)
        goal_class = cls if cls in LARGE_CLASS_INDEX else container
        if goal_class is not None and goal_class in LARGE_CLASS_INDEX:
            channel = ctx.semantic.channel(LARGE_CLASS_INDEX[goal_class])
            if float(channel.max()) >= self.config.map_confidence_floor:
                flat = int(np.argmax(channel))
                py, px = divmod(flat, channel.shape[1])
                return self._nearest_navigable_to(ctx, (px, py))
        return None

    def _scan_toward(self, ctx: PolicyContext) -> ExplorationAction:
        """At the viewing cell: turn toward the sighting so the close-range
        view lands with as few rotations as possible."""
        cls, _ = self._effective_target(ctx.target)
        best = self._best_detection(ctx, cls)
        if best is not None:
            x, y, r, _h = ctx.pose
            d, l = allo_to_ego(x, y, r, best.cell[0], best.cell[1])
            if d >= 0 and l < 0:
                return ExplorationAction.ROTATE_LEFT
        return ExplorationAction.ROTATE_RIGHT

    def next_action(self, ctx: PolicyContext) -> ExplorationAction:
        if self._should_stop(ctx) or self.subgoal_exhausted():
            return ExplorationAction.STOP
        cached = self._pop_plan()
        if cached is not None:
            return cached
        goal = self._pursuit_goal(ctx)
        if goal is not None:
            if goal == (ctx.pose[0], ctx.pose[1]):
                return self._scan_toward(ctx)
            if self._plan_to_cell(ctx, goal):
                act = self._pop_plan()
                if act is not None:
                    return act
        if self.use_memory:
            act = self._frontier_action(ctx)
            if act is not None:
                return act
            return ExplorationAction.STOP
        moves = (ExplorationAction.MOVE_AHEAD, ExplorationAction.ROTATE_LEFT,
                 ExplorationAction.ROTATE_RIGHT)
        return moves[int(ctx.rng.integers(len(moves)))]


class FrontierPolicy(ExplorationPolicy):
    """Pure coverage-seeking frontier exploration; ignores the task."""

    def next_action(self, ctx: PolicyContext) -> ExplorationAction:
        act = self._frontier_action(ctx)
        return act if act is not None else ExplorationAction.STOP


class RandomPolicy(ExplorationPolicy):
    """Boundary-sampling exploration: spin once, then hop between random
    points on the edge of the currently known navigable area."""

    def __init__(self, config: PolicyConfig):
        super().__init__(config)
        self._spins_left = 4

    def reset_subgoal(self) -> None:  # one continuous walk; keep the plan
        pass

    def _boundary_cells(self, ctx: PolicyContext) -> list[tuple[int, int]]:
        grid = ctx.navigable_estimate
        G = grid.shape[0]
        inner = np.zeros_like(grid)
        inner[1:-1, 1:-1] = (grid[1:-1, 1:-1] & grid[:-2, 1:-1] & grid[2:, 1:-1]
                             & grid[1:-1, :-2] & grid[1:-1, 2:])
        boundary = grid & ~inner
        ys, xs = np.nonzero(boundary)
        return list(zip(xs.tolist(), ys.tolist()))

    def next_action(self, ctx: PolicyContext) -> ExplorationAction:
        if self._spins_left > 0:
            self._spins_left -= 1
            return ExplorationAction.ROTATE_RIGHT
        cached = self._pop_plan()
        if cached is not None:
            return cached
        cells = self._boundary_cells(ctx)
        ctx.rng.shuffle(cells)
        for cell in cells:
            if cell == (ctx.pose[0], ctx.pose[1]):
                continue
            if self._plan_to_cell(ctx, cell):
                act = self._pop_plan()
                if act is not None:
                    return act
        return ExplorationAction.ROTATE_RIGHT


def make_policy(config: PolicyConfig) -> ExplorationPolicy:
    if config.kind == "instruction_guided":
        return InstructionGuidedPolicy(config)
    if config.kind == "partial_language":
        return InstructionGuidedPolicy(config, nav_only_targets=True)
    if config.kind == "no_explored_area":
        return InstructionGuidedPolicy(config, use_memory=False)
    if config.kind == "frontier_only":
        return FrontierPolicy(config)
    if config.kind == "random":
        return RandomPolicy(config)
    raise ValueError(f"unknown policy kind {config.kind!r}")


def run_exploration(sim: Simulator, targets: list[SubgoalTarget], config: PolicyConfig,
                    noise: NoiseModel, policy_rng: np.random.Generator,
                    perception_rng: np.random.Generator,
                    record_observations: bool = False) -> ExplorationResult:
    """Run the exploration phase over the navigation subgoals in order.

    The policy is queried per raw action; rotation injection and the
    zigzag look pairs are applied online, so injected steps consume budget
    and produce observations exactly like policy steps.
    """
    scene = sim.scene
    G = scene.grid_size
    policy = make_policy(config)
    semantic = SemanticMap(G)
    explored = ExploredAreaMap(G)
    log = DetectionLog()
    trace = ExplorationTrace(observations=[] if record_observations else None)
    trace.visited.add((sim.state.x, sim.state.y))

    steps = 0
    failures = 0
    pair_down = True
    moves = 0

    def budget_left() -> bool:
        return steps < config.max_steps and failures < config.max_failures \
            and not sim.state.budget_exhausted

    def observe() -> None:
        pose = sim.state.pose
        partial = observe_partial_map(scene, pose, noise, perception_rng)
        semantic.add_partial(partial, pose)
        explored.update(pose)
        dets = detect_small_objects(scene, pose, noise, perception_rng, sim.objects)
        dets_large = detect_large_objects(scene, pose, noise, perception_rng)
        log.extend(dets)
        log.extend(dets_large)
        if trace.observations is not None:
            trace.observations.append((pose, partial, dets))

    def execute(action: NavAction, injected: bool, subgoal_index: int) -> bool:
        """Run one augmented step; returns False when the phase must end."""
        nonlocal steps, failures
        if not budget_left():
            return False
        try:
            outcome = sim.step(action)
        except BudgetExhausted:
            return False
        steps += 1
        if not outcome.success:
            failures += 1
            policy.invalidate()
        trace.visited.add((sim.state.x, sim.state.y))
        observe()
        trace.steps.append(TraceStep(
            t=len(trace.steps), pose=sim.state.pose, action=action.value,
            injected=injected, subgoal_index=subgoal_index, ok=outcome.success,
        ))
        return budget_left()

    alive = True
    for look in (NavAction.LOOK_DOWN, NavAction.LOOK_UP, NavAction.LOOK_UP):
        if not execute(look, injected=True, subgoal_index=0):
            alive = False
            break

    subgoals = targets if targets else [None]
    for sg_index, target in enumerate(subgoals):
        if not alive:
            break
        policy.reset_subgoal()
        while alive:
            ctx = PolicyContext(
                pose=sim.state.pose,
                semantic=semantic,
                navigable_estimate=postprocess_navigable(semantic),
                explored=explored,
                log=log,
                target=target,
                rng=policy_rng,
            )
            raw = policy.next_action(ctx)
            if raw is ExplorationAction.STOP:
                break
            stream: list[tuple[NavAction, bool]] = [(_NAV_FOR[raw], False)]
            if raw is ExplorationAction.MOVE_AHEAD:
                moves += 1
                if moves % 2 == 0:
                    stream.extend((NavAction.ROTATE_RIGHT, True) for _ in range(4))
            for nav, injected in stream:
                if not execute(nav, injected, sg_index):
                    alive = False
                    break
                pair = (NavAction.LOOK_DOWN, NavAction.LOOK_DOWN) if pair_down \
                    else (NavAction.LOOK_UP, NavAction.LOOK_UP)
                pair_down = not pair_down
                for look in pair:
                    if not execute(look, injected=True, subgoal_index=sg_index):
                        alive = False
                        break
                if not alive:
                    break

    return ExplorationResult(trace=trace, semantic=semantic, explored=explored,
                             log=log, steps=steps, failures=failures)
