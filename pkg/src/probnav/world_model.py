"""Probabilistic static-obstacle store and dynamic obstacles with behaviors.

Static obstacles are grid cells with existence probabilities. Dynamic
obstacles carry a distribution over behavior models; each model pairs a
movement rule (goal-attractive, constant-velocity, or rotating) with a
repulsive interaction against the ego robot. The simulator owns one true
model per obstacle and advances positions with velocities that are
recomputed only at the obstacle's decision epochs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import Box, ConvexPolytope, intersects


# movement models

@dataclass(frozen=True)
class GoalAttractive:
    goal: np.ndarray
    desired_speed: float

    def __post_init__(self):
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=float))


@dataclass(frozen=True)
class ConstantVelocity:
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))


@dataclass(frozen=True)
class Rotating:
    center: np.ndarray
    desired_speed: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))


@dataclass(frozen=True)
class Repulsive:
    strength: float


@dataclass(frozen=True)
class BehaviorModel:
    movement: GoalAttractive | ConstantVelocity | Rotating
    interaction: Repulsive


_DEGENERATE = 1e-12


def eval_movement(movement, p_obstacle: np.ndarray) -> np.ndarray:
    """Desired velocity of the movement rule at the obstacle's position.

    Singular configurations (at the goal, at the rotation center) yield a
    zero velocity rather than an error.
    """
    if isinstance(movement, ConstantVelocity):
        return movement.velocity.copy()
    if isinstance(movement, GoalAttractive):
        d = movement.goal - p_obstacle
        n = float(np.linalg.norm(d))
        if n < _DEGENERATE:
            return np.zeros(3)
        return d / n * movement.desired_speed
    if isinstance(movement, Rotating):
        radius = p_obstacle - movement.center
        # tangent convention: z x radius, or x x radius when radius || z
        tangent = np.cross([0.0, 0.0, 1.0], radius)
        if np.linalg.norm(tangent) < _DEGENERATE:
            tangent = np.cross([1.0, 0.0, 0.0], radius)
        n = float(np.linalg.norm(tangent))
        if n < _DEGENERATE:
            return np.zeros(3)
        return tangent / n * movement.desired_speed
    raise TypeError(f"unknown movement model {movement!r}")


def eval_interaction(interaction: Repulsive, p_obstacle: np.ndarray,
                     v_desired: np.ndarray, p_ego: np.ndarray,
                     v_ego: np.ndarray) -> np.ndarray:
    """Actual velocity: desired velocity plus inverse-square ego repulsion."""
    d = p_obstacle - p_ego
    n = float(np.linalg.norm(d))
    if n < _DEGENERATE:
        return v_desired.copy()
    return v_desired + d / n * (interaction.strength / (n * n))


def eval_behavior(model: BehaviorModel, p_obstacle: np.ndarray,
                  p_ego: np.ndarray, v_ego: np.ndarray) -> np.ndarray:
    return eval_interaction(model.interaction, p_obstacle,
                            eval_movement(model.movement, p_obstacle),
                            p_ego, v_ego)


@dataclass
class DynamicObstacle:
    """A moving box with a probability distribution over behavior models.

    ``models`` holds (model, probability) pairs with probabilities summing
    to at most 1; the residual mass stands for unmodeled behavior. The
    velocity is held between decision epochs.
    """

    position: np.ndarray
    shape_at_origin: Box
    models: list[tuple[BehaviorModel, float]]
    decision_period: float = 0.2
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    time_to_decision: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        total = sum(p for _, p in self.models)
        if total > 1.0 + 1e-9 or any(p < 0 for _, p in self.models):
            raise ValueError("model probabilities must be nonnegative, sum <= 1")

    def shape_at(self, position: np.ndarray | None = None) -> Box:
        p = self.position if position is None else np.asarray(position, dtype=float)
        return Box(self.shape_at_origin.min_corner + p,
                   self.shape_at_origin.max_corner + p)


def step_obstacle(obstacle: DynamicObstacle, true_model: BehaviorModel,
                  p_ego: np.ndarray, v_ego: np.ndarray, dt: float) -> np.ndarray:
    """Advance the obstacle by dt under its true behavior model.

    The velocity is refreshed only when the decision timer expires; between
    epochs the obstacle keeps its last chosen velocity.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if obstacle.time_to_decision <= 0.0:
        obstacle.velocity = eval_behavior(true_model, obstacle.position,
                                          p_ego, v_ego)
        obstacle.time_to_decision += obstacle.decision_period
    obstacle.position = obstacle.position + obstacle.velocity * dt
    obstacle.time_to_decision -= dt
    return obstacle.position


class StaticObstacleStore:
    """Hash-grid of cells with existence probabilities in (0, 1]."""

    def __init__(self, cell_size: float = 0.5):
        if cell_size <= 0:
            raise ValueError("cell_size must be positive")
        self.cell_size = float(cell_size)
        self.cells: dict[tuple[int, int, int], float] = {}

    def set_cell(self, index: tuple[int, int, int], probability: float) -> None:
        if not 0.0 < probability <= 1.0:
            raise ValueError("probability must be in (0, 1]")
        self.cells[tuple(int(i) for i in index)] = float(probability)

    def remove_cell(self, index: tuple[int, int, int]) -> None:
        self.cells.pop(tuple(int(i) for i in index), None)

    def cell_index(self, point: np.ndarray) -> tuple[int, int, int]:
        return tuple(int(i) for i in np.floor(np.asarray(point) / self.cell_size))

    def cell_box(self, index: tuple[int, int, int]) -> Box:
        lo = np.asarray(index, dtype=float) * self.cell_size
        return Box(lo, lo + self.cell_size)

    def candidate_cells(self, lo: np.ndarray, hi: np.ndarray):
        i0 = np.floor(lo / self.cell_size).astype(int)
        i1 = np.floor(hi / self.cell_size).astype(int)
        span = np.prod(i1 - i0 + 1)
        if span > len(self.cells):
            for idx in self.cells:
                if np.all(np.asarray(idx) >= i0) and np.all(np.asarray(idx) <= i1):
                    yield idx
            return
        for ix in range(i0[0], i1[0] + 1):
            for iy in range(i0[1], i1[1] + 1):
                for iz in range(i0[2], i1[2] + 1):
                    idx = (ix, iy, iz)
                    if idx in self.cells:
                        yield idx

    def query_region(self, region: ConvexPolytope) -> list[tuple[Box, float]]:
        """Occupied cells whose box intersects the convex region (closed sets)."""
        lo = region.vertices.min(axis=0) - 1e-9
        hi = region.vertices.max(axis=0) + 1e-9
        out = []
        for idx in self.candidate_cells(lo, hi):
            box = self.cell_box(idx)
            if intersects(region, ConvexPolytope(box.corners())):
                out.append((box, self.cells[idx]))
        return out

    def query_sweep(self, robot_shape_at_origin: Box, start: np.ndarray,
                    end: np.ndarray) -> list[tuple[tuple[int, int, int], float]]:
        """Occupied cells touched by a box swept along a segment.

        Equivalent to query_region over the swept hull but runs the exact
        segment-versus-inflated-cell kernel per candidate cell.
        """
        rmin = robot_shape_at_origin.min_corner
        rmax = robot_shape_at_origin.max_corner
        lo = np.minimum(start, end) + rmin - 1e-9
        hi = np.maximum(start, end) + rmax + 1e-9
        out = []
        for idx in self.candidate_cells(lo, hi):
            box = self.cell_box(idx)
            if kernels.seg_aabb_intersects(
                    start[0], start[1], start[2], end[0], end[1], end[2],
                    box.min_corner[0] - rmax[0], box.min_corner[1] - rmax[1],
                    box.min_corner[2] - rmax[2],
                    box.max_corner[0] - rmin[0], box.max_corner[1] - rmin[1],
                    box.max_corner[2] - rmin[2]):
                out.append((idx, self.cells[idx]))
        return out
