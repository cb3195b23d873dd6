"""Convex collision shapes, sweeps, and separating-hyperplane construction.

Shapes are axis-aligned boxes and convex hulls of box-corner sets. The safety
constraints of the smoothing stage come from the chain
``svm_separate -> snap_to_obstacle -> shift_for_robot``: a max-margin
hyperplane between the robot's swept region and an obstacle, translated onto
the obstacle surface, then pulled back by the robot's own extent so it can
constrain the robot's reference position directly.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import convex_opt
from .kernels import box_support


class SeparationError(RuntimeError):
    """Separating-hyperplane construction failed (inputs not disjoint)."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by two corners, min_corner <= max_corner."""

    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min_corner", np.asarray(self.min_corner, dtype=float))
        object.__setattr__(self, "max_corner", np.asarray(self.max_corner, dtype=float))
        if np.any(self.min_corner > self.max_corner):
            raise ValueError("min_corner must be <= max_corner componentwise")

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min_corner + self.max_corner)

    @property
    def size(self) -> np.ndarray:
        return self.max_corner - self.min_corner

    def corners(self) -> np.ndarray:
        """All 2^d corner points, shape (2^d, d)."""
        choices = [(lo, hi) for lo, hi in zip(self.min_corner, self.max_corner)]
        return np.array(list(itertools.product(*choices)))

    def support(self, normal: np.ndarray) -> float:
        """max over the box of normal . x."""
        return box_support(normal[0], normal[1], normal[2],
                           self.min_corner, self.max_corner)

    def contains(self, point: np.ndarray, tol: float = 0.0) -> bool:
        return bool(np.all(point >= self.min_corner - tol)
                    and np.all(point <= self.max_corner + tol))

    def intersects_box(self, other: "Box", tol: float = 0.0) -> bool:
        return bool(np.all(self.min_corner <= other.max_corner + tol)
                    and np.all(other.min_corner <= self.max_corner + tol))


@dataclass(frozen=True)
class ConvexPolytope:
    """Convex hull of a finite vertex set, shape (n, d)."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if v.shape[0] == 0:
            raise ValueError("polytope needs at least one vertex")
        object.__setattr__(self, "vertices", v)

    def support(self, normal: np.ndarray) -> float:
        return float(np.max(self.vertices @ normal))


@dataclass(frozen=True)
class Hyperplane:
    """Half-space {x : normal . x <= offset}; the safe side for the robot."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("normal must be a unit vector")

    def satisfied_by(self, point: np.ndarray, tol: float = 0.0) -> bool:
        return float(self.normal @ point) <= self.offset + tol


def minkowski_place(shape_at_origin: Box, position: np.ndarray) -> Box:
    """Translate a shape given at the origin to a reference position."""
    p = np.asarray(position, dtype=float)
    return Box(shape_at_origin.min_corner + p, shape_at_origin.max_corner + p)


def sweep(shape: Box, start: np.ndarray, end: np.ndarray) -> ConvexPolytope:
    """Convex hull of a box swept along a straight segment."""
    a = minkowski_place(shape, start).corners()
    b = minkowski_place(shape, end).corners()
    pts = np.unique(np.vstack([a, b]), axis=0)
    return ConvexPolytope(pts)


def intersects(a: ConvexPolytope, b: ConvexPolytope) -> bool:
    """Closed-set hull intersection via LP feasibility of a common point.

    Variables are convex weights on each vertex set; the hulls meet iff the
    two convex combinations can coincide.
    """
    va, vb = a.vertices, b.vertices
    na, nb = va.shape[0], vb.shape[0]
    d = va.shape[1]
    n = na + nb
    equalities = []
    for k in range(d):
        row = np.concatenate([va[:, k], -vb[:, k]])
        equalities.append((row, 0.0))
    ra = np.concatenate([np.ones(na), np.zeros(nb)])
    rb = np.concatenate([np.zeros(na), np.ones(nb)])
    equalities.append((ra, 1.0))
    equalities.append((rb, 1.0))
    inequalities = [(-np.eye(n)[i], 0.0) for i in range(n)]
    lp = convex_opt.LinearProgram(np.zeros(n), equalities, inequalities)
    result = convex_opt.solve_lp(lp)
    return result.status is convex_opt.SolveStatus.OPTIMAL


def svm_separate(robot_sweep: ConvexPolytope, obstacle: ConvexPolytope) -> Hyperplane:
    """Max-margin hyperplane with the robot sweep on the safe side.

    Hard-margin SVM over the two vertex sets:
    min 1/2 ||w||^2 s.t. w.a - b >= 1 (robot), w.v - b <= -1 (obstacle).
    """
    ra, ov = robot_sweep.vertices, obstacle.vertices
    d = ra.shape[1]
    # variables [w (d), b]
    Q = np.zeros((d + 1, d + 1))
    Q[:d, :d] = np.eye(d)
    inequalities: list[tuple[np.ndarray, float]] = []
    for v in ra:
        row = np.concatenate([-v, [1.0]])
        inequalities.append((row, -1.0))
    for v in ov:
        row = np.concatenate([v, [-1.0]])
        inequalities.append((row, -1.0))
    qp = convex_opt.QuadraticProgram(Q, np.zeros(d + 1),
                                     linear_inequalities=inequalities)
    result = convex_opt.solve_qp(qp)
    if not result.ok:
        raise SeparationError(f"SVM separation failed: {result.status.value}")
    w = result.solution[:d]
    b = float(result.solution[d])
    norm = float(np.linalg.norm(w))
    if norm < 1e-12:
        raise SeparationError("SVM separation failed: degenerate margin")
    return Hyperplane(-w / norm, -b / norm)


def snap_to_obstacle(plane: Hyperplane, obstacle: ConvexPolytope) -> Hyperplane:
    """Translate the plane along its normal until it touches the obstacle."""
    offset = float(np.min(obstacle.vertices @ plane.normal))
    return Hyperplane(plane.normal, offset)


def shift_for_robot(plane: Hyperplane, robot_shape_at_origin: Box) -> Hyperplane:
    """Pull the plane back by the robot's extent along the normal.

    A reference position p satisfying the shifted plane keeps the whole
    robot body R(p) on the safe side of the unshifted plane.
    """
    return Hyperplane(plane.normal,
                      plane.offset - robot_shape_at_origin.support(plane.normal))
