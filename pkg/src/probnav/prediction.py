"""Online behavior-model estimation from ego/obstacle motion histories.

Each predictor fits one movement family plus the repulsive interaction from
a synchronized history of obstacle and ego positions and velocities, then
reports the mean velocity-prediction error of the fitted model. The errors
of the competing families are turned into a probability distribution with a
base-b softmax (smaller error means higher probability).
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import convex_opt
from .world_model import (
    BehaviorModel,
    ConstantVelocity,
    GoalAttractive,
    Repulsive,
    Rotating,
    eval_behavior,
)

DEFAULT_WINDOW = 20
DEFAULT_SOFTMAX_BASE = 0.5


class HistoryBuffer:
    """Sliding window of synchronized obstacle/ego states."""

    def __init__(self, capacity: int = DEFAULT_WINDOW):
        self._obstacle_p = deque(maxlen=capacity)
        self._obstacle_v = deque(maxlen=capacity)
        self._ego_p = deque(maxlen=capacity)
        self._ego_v = deque(maxlen=capacity)

    def push(self, p_obstacle, v_obstacle, p_ego, v_ego) -> None:
        self._obstacle_p.append(np.asarray(p_obstacle, dtype=float))
        self._obstacle_v.append(np.asarray(v_obstacle, dtype=float))
        self._ego_p.append(np.asarray(p_ego, dtype=float))
        self._ego_v.append(np.asarray(v_ego, dtype=float))

    def __len__(self) -> int:
        return len(self._obstacle_p)

    def arrays(self):
        return (np.array(self._obstacle_p), np.array(self._obstacle_v),
                np.array(self._ego_p), np.array(self._ego_v))


@dataclass(frozen=True)
class FittedModel:
    model: BehaviorModel
    mean_error: float


def _repulsion_directions(p_obstacle: np.ndarray, p_ego: np.ndarray) -> np.ndarray:
    """Per-sample vector multiplying the repulsion strength f."""
    d = p_obstacle - p_ego
    n = np.linalg.norm(d, axis=1)
    out = np.zeros_like(d)
    mask = n > 1e-12
    out[mask] = d[mask] / (n[mask] ** 3)[:, None]
    return out


def _mean_error(model: BehaviorModel, p_obstacle, v_obstacle, p_ego, v_ego) -> float:
    # vectorized eval_behavior over the whole window (hot path: called per
    # fitted family per replan)
    movement = model.movement
    if isinstance(movement, ConstantVelocity):
        predicted = np.broadcast_to(movement.velocity, p_obstacle.shape).copy()
    elif isinstance(movement, GoalAttractive):
        d = movement.goal[None, :] - p_obstacle
        n = np.linalg.norm(d, axis=1)
        predicted = np.zeros_like(d)
        mask = n > 1e-12
        predicted[mask] = d[mask] / n[mask][:, None] * movement.desired_speed
    elif isinstance(movement, Rotating):
        radii = p_obstacle - movement.center[None, :]
        tangents = np.cross(np.array([0.0, 0.0, 1.0])[None, :], radii)
        weak = np.linalg.norm(tangents, axis=1) < 1e-12
        if np.any(weak):
            tangents[weak] = np.cross(np.array([1.0, 0.0, 0.0])[None, :],
                                      radii[weak])
        n = np.linalg.norm(tangents, axis=1)
        predicted = np.zeros_like(tangents)
        mask = n > 1e-12
        predicted[mask] = tangents[mask] / n[mask][:, None] \
            * movement.desired_speed
    else:
        predicted = np.array([eval_behavior(model, p, pe, ve)
                              for p, pe, ve in zip(p_obstacle, p_ego, v_ego)])
        return float(np.mean(np.linalg.norm(predicted - v_obstacle, axis=1)))
    predicted = predicted + _repulsion_directions(p_obstacle, p_ego) \
        * model.interaction.strength
    return float(np.mean(np.linalg.norm(predicted - v_obstacle, axis=1)))


def _fit_speed_strength(directions: np.ndarray, repulsion: np.ndarray,
                        v_obstacle: np.ndarray) -> tuple[float, float]:
    """Least squares over (desired_speed, strength) for v = dir*s + rep*f.

    Unconstrained on purpose: negative values are allowed and meaningful
    (motion away from a goal, attraction toward the ego).
    """
    A = np.column_stack([directions.ravel(), repulsion.ravel()])
    coeffs, *_ = np.linalg.lstsq(A, v_obstacle.ravel(), rcond=None)
    return float(coeffs[0]), float(coeffs[1])


def fit_goal_attractive(history: HistoryBuffer) -> FittedModel | None:
    """Two-stage fit: goal by the ray-intersection QP, then speed/strength.

    Stage 1 minimizes the average squared distance from the goal to the
    forward rays {p_i + t v_i : t >= 0}; variables are the goal and the ray
    parameters jointly.
    """
    if len(history) < 2:
        return None
    p_obstacle, v_obstacle, p_ego, v_ego = history.arrays()
    n = len(history)
    # variables [g (3), t_1..t_n]; residual_i = p_i + t_i v_i - g
    dim = 3 + n
    Q = np.zeros((dim, dim))
    q = np.zeros(dim)
    for i in range(n):
        A_i = np.zeros((3, dim))
        A_i[:, :3] = -np.eye(3)
        A_i[:, 3 + i] = v_obstacle[i]
        Q += (2.0 / n) * A_i.T @ A_i
        q += (2.0 / n) * A_i.T @ p_obstacle[i]
    # the QP is degenerate when the rays are near-parallel (any goal on the
    # common ray is optimal); a tiny regularizer centered far ahead along
    # the mean motion direction selects the "beyond the data" solution
    # without measurably moving a unique optimum
    mean_v = v_obstacle.mean(axis=0)
    speed = float(np.linalg.norm(mean_v))
    anchor = p_obstacle.mean(axis=0) + (mean_v / speed * 50.0 if speed > 1e-9
                                        else 0.0)
    reg = 1e-8
    Q += 2.0 * reg * np.eye(dim)
    q[:3] -= 2.0 * reg * anchor
    inequalities = [(-np.eye(dim)[3 + i], 0.0) for i in range(n)]
    result = convex_opt.solve_qp(convex_opt.QuadraticProgram(
        Q, q, linear_inequalities=inequalities))
    if not result.ok:
        return None
    goal = result.solution[:3]

    d = goal[None, :] - p_obstacle
    norms = np.linalg.norm(d, axis=1)
    directions = np.zeros_like(d)
    mask = norms > 1e-12
    directions[mask] = d[mask] / norms[mask][:, None]
    repulsion = _repulsion_directions(p_obstacle, p_ego)
    speed, strength = _fit_speed_strength(directions, repulsion, v_obstacle)
    model = BehaviorModel(GoalAttractive(goal, speed), Repulsive(strength))
    return FittedModel(model, _mean_error(model, p_obstacle, v_obstacle,
                                          p_ego, v_ego))


def fit_constant_velocity(history: HistoryBuffer) -> FittedModel | None:
    """Single joint least-squares fit over (velocity, strength)."""
    if len(history) < 2:
        return None
    p_obstacle, v_obstacle, p_ego, v_ego = history.arrays()
    n = len(history)
    repulsion = _repulsion_directions(p_obstacle, p_ego)
    # variables [v (3), f]; prediction_i = v + repulsion_i * f
    A = np.zeros((3 * n, 4))
    for i in range(n):
        A[3 * i:3 * i + 3, :3] = np.eye(3)
        A[3 * i:3 * i + 3, 3] = repulsion[i]
    coeffs, *_ = np.linalg.lstsq(A, v_obstacle.ravel(), rcond=None)
    model = BehaviorModel(ConstantVelocity(coeffs[:3]), Repulsive(float(coeffs[3])))
    return FittedModel(model, _mean_error(model, p_obstacle, v_obstacle,
                                          p_ego, v_ego))


def fit_rotating(history: HistoryBuffer) -> FittedModel | None:
    """Center by the perpendicularity LP, then speed/strength least squares.

    The center minimizes the average absolute dot product between observed
    velocities and center-to-sample vectors, solved in epigraph form.
    """
    if len(history) < 2:
        return None
    p_obstacle, v_obstacle, p_ego, v_ego = history.arrays()
    # |v_i . (p_i - c)| = |(-v_i) . c + v_i . p_i|
    rows = -v_obstacle
    offsets = np.einsum("ij,ij->i", v_obstacle, p_obstacle)
    objective, inequalities = convex_opt.abs_epigraph(rows, offsets, 3)
    result = convex_opt.solve_lp(convex_opt.LinearProgram(
        objective, linear_inequalities=inequalities))
    if not result.ok:
        return None
    center = result.solution[:3]

    radii = p_obstacle - center[None, :]
    tangents = np.cross(np.array([0.0, 0.0, 1.0])[None, :], radii)
    weak = np.linalg.norm(tangents, axis=1) < 1e-12
    if np.any(weak):
        tangents[weak] = np.cross(np.array([1.0, 0.0, 0.0])[None, :], radii[weak])
    norms = np.linalg.norm(tangents, axis=1)
    directions = np.zeros_like(tangents)
    mask = norms > 1e-12
    directions[mask] = tangents[mask] / norms[mask][:, None]
    repulsion = _repulsion_directions(p_obstacle, p_ego)
    speed, strength = _fit_speed_strength(directions, repulsion, v_obstacle)
    model = BehaviorModel(Rotating(center, speed), Repulsive(strength))
    return FittedModel(model, _mean_error(model, p_obstacle, v_obstacle,
                                          p_ego, v_ego))


def assign_probabilities(fits: list[FittedModel],
                         base: float = DEFAULT_SOFTMAX_BASE) -> list[float]:
    """Base-b softmax over mean errors; lower error gets higher probability."""
    if not fits:
        raise ValueError("need at least one fitted model")
    if not 0.0 < base < 1.0:
        raise ValueError("softmax base must be in (0, 1)")
    errors = np.array([f.mean_error for f in fits])
    weights = np.power(base, errors - errors.min())
    return list(weights / weights.sum())


def fit_all(history: HistoryBuffer,
            base: float = DEFAULT_SOFTMAX_BASE) -> list[tuple[BehaviorModel, float]]:
    """Fit every family and weight the successes; failures are excluded."""
    fits = [f for f in (fit_goal_attractive(history),
                        fit_constant_velocity(history),
                        fit_rotating(history)) if f is not None]
    if not fits:
        return []
    probs = assign_probabilities(fits, base)
    return [(f.model, p) for f, p in zip(fits, probs)]
