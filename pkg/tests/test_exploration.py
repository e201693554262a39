import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridhouse.errors import MalformedInput
from gridhouse.exploration import (
    ExplorationAction,
    ExplorationTrace,
    PolicyConfig,
    SubgoalTarget,
    TraceStep,
    coverage_metrics,
    inject_rotations,
    run_exploration,
    zigzag,
)
from gridhouse.perception import NoiseModel
from gridhouse.world import Simulator

from conftest import make_scene

M, L, R = "MoveAhead", "RotateLeft", "RotateRight"
D, U = "LookDown", "LookUp"

GOLDEN_INJECTED = [M, R, M, R, R, R, R, M, L]
GOLDEN_ZIGZAG = [
    D, U, U, M, D, D, R, U, U, M, D, D, R, U, U, R, D, D, R, U, U, R, D, D,
    M, U, U, L, D, D,
]


class TestInjectRotations:
    def test_golden_example(self):
        assert inject_rotations([M, R, M, M, L]) == GOLDEN_INJECTED

    def test_single_move_passthrough(self):
        assert inject_rotations([M]) == [M]

    def test_empty(self):
        assert inject_rotations([]) == []

    def test_counter_resets_after_injection(self):
        out = inject_rotations([M, M, M, M])
        assert out == [M, M, R, R, R, R, M, M, R, R, R, R]

    def test_enum_actions_supported(self):
        out = inject_rotations([ExplorationAction.MOVE_AHEAD,
                                ExplorationAction.MOVE_AHEAD])
        assert out[-1] is ExplorationAction.ROTATE_RIGHT
        assert len(out) == 6


class TestZigzag:
    def test_golden_thirty_action_sequence(self):
        assert zigzag(GOLDEN_INJECTED) == GOLDEN_ZIGZAG

    def test_single_action(self):
        assert zigzag([M]) == [D, U, U, M, D, D]

    def test_empty(self):
        assert zigzag([]) == []

    def test_rejects_look_actions(self):
        with pytest.raises(MalformedInput):
            zigzag([M, D])

    @given(st.lists(st.sampled_from([M, L, R]), min_size=1, max_size=100))
    @settings(max_examples=60, deadline=None)
    def test_length_law(self, seq):
        assert len(zigzag(seq)) == 3 * len(seq) + 3

    @given(st.lists(st.sampled_from([M, L, R]), min_size=1, max_size=60))
    @settings(max_examples=30, deadline=None)
    def test_strip_looks_recovers_input(self, seq):
        out = zigzag(seq)
        assert [a for a in out if a not in (D, U)] == seq


class TestCoverageMetrics:
    def _trace(self, visited, raw_count):
        trace = ExplorationTrace()
        trace.visited = set(visited)
        for i in range(raw_count):
            trace.steps.append(TraceStep(i, (0, 0, 0, 30), M, False, 0, True))
        return trace

    def test_straight_line(self):
        trace = self._trace([(0, i) for i in range(6)], 5)
        m = coverage_metrics(trace)
        assert m["coverage"] == 6
        assert m["coverage_efficiency"] == pytest.approx(1.2)

    def test_rotations_in_place(self):
        trace = ExplorationTrace()
        trace.visited = {(3, 3)}
        for i in range(10):
            trace.steps.append(TraceStep(i, (3, 3, 0, 30), R, False, 0, True))
        m = coverage_metrics(trace)
        assert m["coverage"] == 1
        assert m["coverage_efficiency"] == pytest.approx(0.1)

    def test_empty_trace_convention(self):
        trace = ExplorationTrace()
        trace.visited = {(2, 2)}
        m = coverage_metrics(trace)
        assert m["coverage"] == 1
        assert m["coverage_efficiency"] == 0.0


def explore(scene, targets, kind="instruction_guided", seed=0, start=(5, 8), r=0,
            noise=None, max_steps=500):
    sim = Simulator(scene, start, r=r, h=30)
    config = PolicyConfig(kind=kind, max_steps=max_steps)
    result = run_exploration(
        sim, targets, config, noise or NoiseModel.zero(),
        np.random.default_rng([seed, 0]), np.random.default_rng([seed, 1]))
    return sim, result


class TestRunExploration:
    def test_target_visible_from_start_stops_in_first_sweep(self, fridge_scene):
        targets = [SubgoalTarget("fridge")]
        sim, result = explore(fridge_scene, targets, start=(5, 8))
        assert result.trace.raw_actions == []
        assert result.trace.visited == {(5, 8)}
        assert result.steps == 3  # the horizon-sweep prefix only

    def test_zigzag_prefix_recorded(self, fridge_scene):
        _, result = explore(fridge_scene, [SubgoalTarget("fridge")], start=(5, 8))
        assert [s.action for s in result.trace.steps[:3]] == [D, U, U]
        assert all(s.injected for s in result.trace.steps[:3])

    def test_horizon_sweep_covers_three_angles(self):
        scene = make_scene(grid_size=11)
        _, result = explore(scene, [SubgoalTarget("fridge")], kind="frontier_only",
                            start=(5, 8), max_steps=120)
        by_pose = {}
        for s in result.trace.steps:
            x, y, r, h = s.pose
            by_pose.setdefault((x, y, r), set()).add(h)
        full = [hs for hs in by_pose.values() if len(hs) == 3]
        assert full, "no pose observed at three horizons"
        for hs in by_pose.values():
            assert hs <= {15, 30, 45}

    def test_augmentation_identity(self):
        scene = make_scene(grid_size=11)
        _, result = explore(scene, [SubgoalTarget("fridge")], kind="frontier_only",
                            start=(5, 8), max_steps=150)
        raw = result.trace.raw_actions
        augmented = result.trace.augmented_actions
        stripped = [a for a, s in zip(augmented, result.trace.steps) if not s.injected]
        assert stripped == raw
        assert len(augmented) == len(result.trace.steps)

    def test_budget_safety(self):
        scene = make_scene(grid_size=15)
        _, result = explore(scene, [SubgoalTarget("fridge")], kind="random",
                            seed=3, start=(7, 7), max_steps=200)
        assert result.steps <= 200
        assert result.failures <= 4

    def test_random_policy_covers_ground(self):
        scene = make_scene(grid_size=15)
        _, result = explore(scene, [], kind="random", seed=4, start=(7, 7),
                            noise=NoiseModel(), max_steps=200)
        m = coverage_metrics(result.trace)
        navigable_count = int(scene.navigable.sum())
        assert 1 < m["coverage"] <= navigable_count

    def test_identical_seeds_identical_traces(self):
        scene = make_scene(grid_size=13)
        _, a = explore(scene, [SubgoalTarget("fridge")], kind="random", seed=9,
                       start=(6, 6), noise=NoiseModel(), max_steps=150)
        _, b = explore(scene, [SubgoalTarget("fridge")], kind="random", seed=9,
                       start=(6, 6), noise=NoiseModel(), max_steps=150)
        assert a.trace.steps == b.trace.steps
        assert np.array_equal(a.semantic.grid, b.semantic.grid)

    def test_steps_feed_semantic_map(self, counter_scene):
        sim, result = explore(counter_scene, [SubgoalTarget("countertop")],
                              start=(5, 8))
        from gridhouse.world import LARGE_CLASS_INDEX
        assert float(result.semantic.channel(LARGE_CLASS_INDEX["countertop"]).max()) == 1.0

    def test_detections_logged(self, counter_scene):
        _, result = explore(counter_scene,
                            [SubgoalTarget("lettuce", container_class="countertop")],
                            start=(5, 6))
        assert any(d.class_id == "lettuce" for d in result.log.records)

    def test_exploration_counts_against_episode_budget(self, counter_scene):
        sim, result = explore(counter_scene, [SubgoalTarget("lettuce", "countertop")],
                              start=(5, 8))
        assert sim.state.steps_taken == result.steps


class TestPolicyVariants:
    def test_all_kinds_run(self):
        scene = make_scene(grid_size=13)
        for kind in ("instruction_guided", "random", "frontier_only",
                     "partial_language", "no_explored_area"):
            _, result = explore(
                scene, [SubgoalTarget("fridge", nav_only_class="fridge")],
                kind=kind, seed=5, start=(6, 6), noise=NoiseModel(), max_steps=80)
            assert result.steps <= 80

    def test_policy_config_validation(self):
        with pytest.raises(ValueError):
            PolicyConfig(kind="nonsense")
        with pytest.raises(ValueError):
            PolicyConfig(max_steps=0)
