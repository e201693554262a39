"""Command line interface: gen-scenes, run, replay, ablate."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


from .harness import (
    ABLATION_TABLES,
    Ablations,
    RunConfig,
    episode_rng,
    generate_scene,
    generate_task,
    run_ablation,
    run_batch,
)
from .mapping import SemanticMap, semantic_map_to_json
from .perception import NoiseModel, observe_partial_map
from .tasks import save_task
from .world import save_scene, scene_from_json

SEED_ENV_VAR = "AMSLAM_SEED"

SINGLE_ABLATIONS = {
    "none": Ablations(),
    "no_backup": Ablations(no_backup=True),
    "map_only": Ablations(waypoint_strategy="map_only"),
    "detection_only": Ablations(waypoint_strategy="detection_only"),
    "no_horizon_search": Ablations(no_horizon_search=True),
}


def _seed_default() -> int:
    env = os.environ.get(SEED_ENV_VAR)
    return int(env) if env else 0


def _parse_noise(spec: str) -> NoiseModel:
    """pfn,pfp,jitter with an optional fourth detection-decay component."""
    parts = [float(p) for p in spec.split(",")]
    if len(parts) == 3:
        return NoiseModel(parts[0], parts[1], parts[2])
    if len(parts) == 4:
        return NoiseModel(parts[0], parts[1], parts[2], parts[3])
    raise argparse.ArgumentTypeError("--noise expects pfn,pfp,jitter[,decay]")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None,
                        help=f"base seed (falls back to ${SEED_ENV_VAR}, then 0)")
    parser.add_argument("--out", type=str, default=None, help="output directory")


def _resolve_seed(args) -> int:
    return args.seed if args.seed is not None else _seed_default()


def cmd_gen_scenes(args) -> int:
    out = Path(args.out or "scenes")
    out.mkdir(parents=True, exist_ok=True)
    seed = _resolve_seed(args)
    for i in range(args.count):
        scene = generate_scene(episode_rng(seed, i, 0), grid_size=args.grid_size)
        save_scene(scene, out / f"scene_{i:04d}.json")
        if args.with_tasks:
            task = generate_task(scene, episode_rng(seed, i, 1))
            save_task(task, out / f"task_{i:04d}.json")
    print(f"wrote {args.count} scene(s) to {out}")
    return 0


def _run_config(args) -> RunConfig:
    return RunConfig(
        base_seed=_resolve_seed(args),
        episodes=args.episodes,
        policy=args.policy,
        noise=args.noise,
        oracle_mode=args.oracle,
        perturbation=args.perturb,
        ablations=SINGLE_ABLATIONS.get(args.ablation, Ablations()),
        grid_size=args.grid_size,
        out=args.out,
    )


def cmd_run(args) -> int:
    config = _run_config(args)
    if args.ablation in ABLATION_TABLES:
        rows = run_ablation(config, args.ablation)
    else:
        rows = run_batch(config)
    for row in rows:
        print(f"{row['arm']}: success_rate={row['success_rate']} "
              f"goal_condition={row['goal_condition']} "
              f"coverage_efficiency={row['coverage_efficiency']}")
    if config.out:
        print(f"metrics written to {Path(config.out) / 'metrics.csv'}")
    return 0


def cmd_ablate(args) -> int:
    config = _run_config(args)
    rows = run_ablation(config, args.table)
    for row in rows:
        print(f"{row['arm']}: success_rate={row['success_rate']} "
              f"goal_condition={row['goal_condition']} "
              f"coverage_efficiency={row['coverage_efficiency']}")
    return 0


def cmd_replay(args) -> int:
    """Rebuild the exploration-phase map from a trace and dump snapshots."""
    lines = Path(args.trace).read_text().splitlines()
    meta = json.loads(lines[0])
    scene = scene_from_json(meta["scene"])
    noise = NoiseModel(**meta["noise"])
    rng = episode_rng(meta["base_seed"], meta["episode_index"], 3)
    semantic = SemanticMap(scene.grid_size)

    out_dir = Path(args.out) if args.out else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    from .perception import detect_large_objects, detect_small_objects

    steps = [json.loads(line) for line in lines[1:]]
    for rec in steps:
        pose = tuple(rec["pose"])
        partial = observe_partial_map(scene, pose, noise, rng)
        semantic.add_partial(partial, pose)
        detect_small_objects(scene, pose, noise, rng)
        detect_large_objects(scene, pose, noise, rng)
        if out_dir is not None and rec["t"] % args.every == 0:
            path = out_dir / f"map_{rec['t']:04d}.json"
            path.write_text(json.dumps(semantic_map_to_json(semantic), sort_keys=True))

    from .report import render_map_text

    if out_dir is not None:
        (out_dir / "map_final.json").write_text(
            json.dumps(semantic_map_to_json(semantic), sort_keys=True))
        if args.png:
            from .report import save_map_figure
            save_map_figure(semantic, out_dir / "map_final.png", scene)
        print(f"replayed {len(steps)} steps into {out_dir}")
    else:
        print(render_map_text(semantic))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridhouse",
        description="Household gridworld: semantic mapping, exploration and planning benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scenes", help="generate scene (and task) JSON files")
    _add_common(p)
    p.add_argument("--count", "--episodes", dest="count", type=int, default=10,
                   help="number of scenes to generate")
    p.add_argument("--grid-size", type=int, default=37)
    p.add_argument("--with-tasks", action="store_true")
    p.set_defaults(func=cmd_gen_scenes)

    p = sub.add_parser("run", help="run a batch of episodes")
    _add_common(p)
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--policy", type=str, default="instruction_guided",
                   choices=["instruction_guided", "random", "frontier_only",
                            "partial_language", "no_explored_area"])
    p.add_argument("--noise", type=_parse_noise, default=NoiseModel(),
                   help="pfn,pfp,jitter[,decay]")
    p.add_argument("--oracle", type=str, default="none",
                   choices=["none", "gt_navigation", "gt_all"])
    p.add_argument("--perturb", type=str, default="none",
                   choices=["none", "displacement", "horizon"])
    p.add_argument("--ablation", type=str, default="none",
                   choices=list(SINGLE_ABLATIONS) + list(ABLATION_TABLES))
    p.add_argument("--grid-size", type=int, default=37)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="run a named ablation table")
    _add_common(p)
    p.add_argument("table", choices=list(ABLATION_TABLES))
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--policy", type=str, default="instruction_guided")
    p.add_argument("--noise", type=_parse_noise, default=NoiseModel())
    p.add_argument("--oracle", type=str, default="none")
    p.add_argument("--perturb", type=str, default="none")
    p.add_argument("--ablation", type=str, default="none")
    p.add_argument("--grid-size", type=int, default=37)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("replay", help="rebuild map snapshots from a trace file")
    _add_common(p)
    p.add_argument("--trace", type=str, required=True)
    p.add_argument("--every", type=int, default=25, help="snapshot interval in steps")
    p.add_argument("--png", action="store_true", help="also render a PNG of the final map")
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as e:  # noqa: BLE001 - single exit point for CLI diagnostics
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
