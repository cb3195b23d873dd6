"""Sensing-imperfection mocks for simulation.

Static-map mocks perturb the planner's belief copy of the occupancy store;
the simulator keeps the unmodified truth for collision checking. Dynamic
sensing adds one joint Gaussian draw to position and velocity and
independent Gaussian noise to each shape axis length.
"""
from __future__ import annotations

import numpy as np

from .geometry import Box
from .world_model import DynamicObstacle, StaticObstacleStore

_NEIGHBORS = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0),
              (0, 0, 1), (0, 0, -1))


def increase_uncertainty(store: StaticObstacleStore,
                         rng: np.random.Generator) -> StaticObstacleStore:
    """Move every cell's existence probability toward 0.5.

    p <= 0.5 is resampled uniformly in [p, 0.5]; p > 0.5 in [0.5, p].
    Iterates cells in sorted order so results depend only on the rng state.
    """
    for idx in sorted(store.cells):
        p = store.cells[idx]
        if p <= 0.5:
            p = float(rng.uniform(p, 0.5))
        else:
            p = float(rng.uniform(0.5, p))
        # the store forbids p = 0; an exact zero draw is measure-zero but
        # guard anyway
        store.cells[idx] = max(p, 1e-12)
    return store


def leak_obstacles(store: StaticObstacleStore, p_leak: float,
                   rng: np.random.Generator) -> StaticObstacleStore:
    """Leak each cell into a random face neighbor with probability p_leak*p.

    A leaked cell keeps its own probability; the chosen neighbor gains
    p_leak*p, clamped to 1. Leak decisions use the pre-mock probabilities.
    """
    if not 0.0 <= p_leak <= 1.0:
        raise ValueError("p_leak must be in [0, 1]")
    original = sorted(store.cells.items())
    for idx, p in original:
        if rng.uniform() >= p_leak * p:
            continue
        d = _NEIGHBORS[int(rng.integers(len(_NEIGHBORS)))]
        neighbor = (idx[0] + d[0], idx[1] + d[1], idx[2] + d[2])
        gained = min(store.cells.get(neighbor, 0.0) + p_leak * p, 1.0)
        store.cells[neighbor] = gained
    return store


def delete_obstacles(store: StaticObstacleStore,
                     rng: np.random.Generator) -> StaticObstacleStore:
    """Remove each cell with its non-existence probability 1 - p."""
    for idx in sorted(store.cells):
        if rng.uniform() < 1.0 - store.cells[idx]:
            del store.cells[idx]
    return store


def sense_dynamic(obstacle: DynamicObstacle, covariance: np.ndarray | None,
                  shape_noise_std: float, rng: np.random.Generator
                  ) -> tuple[np.ndarray, np.ndarray, Box]:
    """Noisy (position, velocity, shape) observation of a dynamic obstacle.

    Position and velocity noise come from one joint 2d-dimensional Gaussian
    draw with the given covariance; each shape axis length is perturbed by
    independent N(0, shape_noise_std), clamped to stay a valid box.
    """
    position = obstacle.position.copy()
    velocity = obstacle.velocity.copy()
    if covariance is not None:
        covariance = np.asarray(covariance, dtype=float)
        if covariance.shape != (6, 6):
            raise ValueError("covariance must be 6x6")
        # default (svd) sampling tolerates semidefinite covariances
        noise = rng.multivariate_normal(np.zeros(6), covariance)
        position += noise[:3]
        velocity += noise[3:]
    shape = obstacle.shape_at_origin
    if shape_noise_std > 0.0:
        sizes = shape.max_corner - shape.min_corner
        center = 0.5 * (shape.min_corner + shape.max_corner)
        sizes = np.maximum(sizes + rng.normal(0.0, shape_noise_std, 3), 1e-6)
        shape = Box(center - sizes / 2.0, center + sizes / 2.0)
    return position, velocity, shape
