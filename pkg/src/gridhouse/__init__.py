"""Household gridworld: affordance-aware mapping, exploration and planning."""

from .world import Scene, AgentState, Simulator
from .perception import NoiseModel
from .mapping import SemanticMap, ExploredAreaMap
from .waypoints import Waypoint, DetectionLog
from .exploration import PolicyConfig
from .planner import Plan, PlanNode
from .tasks import Task, Subgoal, EpisodeResult, ExecutionConfig
from .harness import RunConfig, generate_scene, generate_task, run_batch

__version__ = "0.1.0"

__all__ = [
    "Scene", "AgentState", "Simulator", "NoiseModel", "SemanticMap",
    "ExploredAreaMap", "Waypoint", "DetectionLog", "PolicyConfig", "Plan",
    "PlanNode", "Task", "Subgoal", "EpisodeResult", "ExecutionConfig",
    "RunConfig", "generate_scene", "generate_task", "run_batch",
]
