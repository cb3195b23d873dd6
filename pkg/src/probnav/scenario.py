"""Scenario serialization: a complete world description as JSON.

A scenario holds everything needed to reproduce one simulation run: the
probabilistic static grid, the dynamic obstacles with their true behavior
models, the robot shape and endpoints, and the RNG seed. Round-trips
losslessly through ``save``/``load``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Box
from .world_model import (
    BehaviorModel,
    ConstantVelocity,
    DynamicObstacle,
    GoalAttractive,
    Repulsive,
    Rotating,
    StaticObstacleStore,
)


@dataclass
class Scenario:
    seed: int
    static: StaticObstacleStore
    robot_shape: Box
    robot_start: np.ndarray
    robot_goal: np.ndarray
    obstacles: list[DynamicObstacle] = field(default_factory=list)
    true_models: list[BehaviorModel] = field(default_factory=list)

    def __post_init__(self):
        self.robot_start = np.asarray(self.robot_start, dtype=float)
        self.robot_goal = np.asarray(self.robot_goal, dtype=float)
        if len(self.true_models) != len(self.obstacles):
            raise ValueError("need one true model per obstacle")


def _movement_to_dict(m) -> dict:
    if isinstance(m, GoalAttractive):
        return {"type": "goal_attractive", "goal": list(m.goal),
                "desired_speed": m.desired_speed}
    if isinstance(m, ConstantVelocity):
        return {"type": "constant_velocity", "velocity": list(m.velocity)}
    if isinstance(m, Rotating):
        return {"type": "rotating", "center": list(m.center),
                "desired_speed": m.desired_speed}
    raise TypeError(f"unknown movement model {m!r}")


def _movement_from_dict(d) -> GoalAttractive | ConstantVelocity | Rotating:
    kind = d["type"]
    if kind == "goal_attractive":
        return GoalAttractive(np.array(d["goal"]), d["desired_speed"])
    if kind == "constant_velocity":
        return ConstantVelocity(np.array(d["velocity"]))
    if kind == "rotating":
        return Rotating(np.array(d["center"]), d["desired_speed"])
    raise ValueError(f"unknown movement type {kind!r}")


def _model_to_dict(model: BehaviorModel) -> dict:
    return {"movement": _movement_to_dict(model.movement),
            "interaction": {"type": "repulsive",
                            "strength": model.interaction.strength}}


def _model_from_dict(d) -> BehaviorModel:
    return BehaviorModel(_movement_from_dict(d["movement"]),
                         Repulsive(d["interaction"]["strength"]))


def to_dict(scenario: Scenario) -> dict:
    return {
        "seed": scenario.seed,
        "cell_size": scenario.static.cell_size,
        "static_cells": [[*idx, p] for idx, p in sorted(scenario.static.cells.items())],
        "robot": {
            "shape_min": list(scenario.robot_shape.min_corner),
            "shape_max": list(scenario.robot_shape.max_corner),
            "start": list(scenario.robot_start),
            "goal": list(scenario.robot_goal),
        },
        "dynamic_obstacles": [
            {
                "position": list(obs.position),
                "shape_min": list(obs.shape_at_origin.min_corner),
                "shape_max": list(obs.shape_at_origin.max_corner),
                "decision_period": obs.decision_period,
                "true_model": _model_to_dict(true),
                "models": [[_model_to_dict(m), p] for m, p in obs.models],
            }
            for obs, true in zip(scenario.obstacles, scenario.true_models)
        ],
    }


def from_dict(data: dict) -> Scenario:
    static = StaticObstacleStore(data["cell_size"])
    for i, j, k, p in data["static_cells"]:
        static.set_cell((i, j, k), p)
    robot = data["robot"]
    obstacles = []
    true_models = []
    for od in data["dynamic_obstacles"]:
        obstacles.append(DynamicObstacle(
            position=np.array(od["position"]),
            shape_at_origin=Box(np.array(od["shape_min"]), np.array(od["shape_max"])),
            models=[(_model_from_dict(m), p) for m, p in od["models"]],
            decision_period=od["decision_period"],
        ))
        true_models.append(_model_from_dict(od["true_model"]))
    return Scenario(
        seed=data["seed"],
        static=static,
        robot_shape=Box(np.array(robot["shape_min"]), np.array(robot["shape_max"])),
        robot_start=np.array(robot["start"]),
        robot_goal=np.array(robot["goal"]),
        obstacles=obstacles,
        true_models=true_models,
    )


def save(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_dict(scenario), indent=2) + "\n")


def load(path: str | Path) -> Scenario:
    return from_dict(json.loads(Path(path).read_text()))
