"""Command-line entry points: single runs, experiment grids, benchmarks."""
from __future__ import annotations

import argparse
import json
import math
import sys

from .sim import RunConfig, run_episode, run_experiment


def _load_config(path: str) -> dict:
    with open(path) as handle:
        return json.load(handle)


def _cmd_run(args) -> int:
    data = _load_config(args.config) if args.config else {}
    if args.seed is not None:
        data["seed"] = args.seed
    config = RunConfig.from_dict(data)
    metrics = run_episode(config, dump_path=args.dump_trajectories)
    out = {
        "seed": config.seed,
        "success": metrics.success,
        "collision": metrics.collision,
        "deadlock": metrics.deadlock,
        "static_collision": metrics.static_collision,
        "dynamic_collision": metrics.dynamic_collision,
        "navigation_duration": (None if math.isnan(metrics.navigation_duration)
                                else metrics.navigation_duration),
        "planning_fail_count": metrics.planning_fail_count,
        "planning_total_count": metrics.planning_total_count,
        "mean_planning_duration_ms": (
            1000.0 * sum(metrics.planning_durations)
            / len(metrics.planning_durations)
            if metrics.planning_durations else None),
    }
    json.dump(out, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def _cmd_experiment(args) -> int:
    data = _load_config(args.config)
    grid = data["configs"] if isinstance(data, dict) and "configs" in data \
        else data
    configs = [RunConfig.from_dict(entry) for entry in grid]
    aggregates = run_experiment(configs, args.runs, args.out,
                                workers=args.workers)
    json.dump(aggregates, sys.stdout, indent=2,
              default=lambda v: None if isinstance(v, float)
              and math.isnan(v) else v)
    sys.stdout.write("\n")
    return 0


def _cmd_predict_bench(args) -> int:
    """Round-trip behavior prediction on synthetic traces and report accuracy."""
    import numpy as np

    from .prediction import HistoryBuffer, fit_all
    from .world_model import (BehaviorModel, ConstantVelocity, GoalAttractive,
                              Repulsive, Rotating, eval_movement)

    rng = np.random.default_rng(args.seed)
    kinds = (GoalAttractive, ConstantVelocity, Rotating)
    n, dt = 50, 0.1
    p_ego = np.array([200.0, 0.0, 0.0])
    correct = 0
    for trial in range(args.trials):
        kind = trial % 3
        speed = float(rng.uniform(0.5, 1.2))
        start = rng.uniform(-3, 3, 3)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        if kind == 0:
            # goal inside the window's travel range: a goal-attractive
            # obstacle moves in a straight line until arrival, so a trace
            # that never reaches its goal is indistinguishable from
            # constant velocity
            goal = start + direction * rng.uniform(0.1, 0.25) * speed * n * dt
            movement = GoalAttractive(goal, speed)
        elif kind == 1:
            movement = ConstantVelocity(direction * speed)
        else:
            movement = Rotating(rng.uniform(-4, 4, 3), speed)
        model = BehaviorModel(movement, Repulsive(float(rng.uniform(0.1, 0.5))))
        history = HistoryBuffer(capacity=n)
        q = start.copy()
        for _ in range(n):
            v = eval_movement(model.movement, q)
            d = q - p_ego
            dist = float(np.linalg.norm(d))
            v = v + d / dist * (model.interaction.strength / (dist * dist))
            observed = v + rng.normal(0.0, args.noise, 3) if args.noise else v
            history.push(q, observed, p_ego, np.zeros(3))
            q = q + v * dt
        fits = fit_all(history)
        if fits:
            best = max(fits, key=lambda mp: mp[1])[0]
            if isinstance(best.movement, kinds[kind]):
                correct += 1
    print(f"identified {correct}/{args.trials} "
          f"({correct / args.trials:.1%}) at noise std {args.noise}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="probnav", description="probabilistic navigation simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one navigation run")
    p_run.add_argument("--config", help="JSON run configuration")
    p_run.add_argument("--seed", type=int, help="override the config seed")
    p_run.add_argument("--dump-trajectories",
                       help="write planned trajectories as JSON lines")
    p_run.set_defaults(func=_cmd_run)

    p_exp = sub.add_parser("experiment", help="run a grid of configurations")
    p_exp.add_argument("--config", required=True,
                       help="JSON file with a list of run configurations")
    p_exp.add_argument("--runs", type=int, default=50,
                       help="runs per configuration")
    p_exp.add_argument("--workers", type=int, default=1)
    p_exp.add_argument("--out", required=True, help="output CSV path")
    p_exp.set_defaults(func=_cmd_experiment)

    p_bench = sub.add_parser("predict-bench",
                             help="behavior-model identification benchmark")
    p_bench.add_argument("--trials", type=int, default=150)
    p_bench.add_argument("--noise", type=float, default=0.0,
                         help="observation noise std")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.set_defaults(func=_cmd_predict_bench)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
