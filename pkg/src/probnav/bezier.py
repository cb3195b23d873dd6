"""Bezier pieces and piecewise trajectories.

Pieces are polynomial curves in Bernstein form. The representation matters
for the trajectory QP: curve points are convex combinations of the control
points (so a half-space containing the control points contains the curve),
derivatives are linear in the control points, and squared-derivative
energies are exact quadratic forms via Bernstein product integrals.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np


@lru_cache(maxsize=None)
def _binomials(degree: int) -> np.ndarray:
    out = np.array([comb(degree, k) for k in range(degree + 1)], dtype=float)
    out.setflags(write=False)
    return out


def bernstein_row(degree: int, u: float) -> np.ndarray:
    """Values of the degree-n Bernstein basis at u in [0, 1]."""
    i = np.arange(degree + 1)
    return _binomials(degree) * np.power(u, i) * np.power(1.0 - u, degree - i)


@lru_cache(maxsize=1024)
def _difference_operator(degree: int, order: int,
                         duration: float) -> np.ndarray:
    if order < 0 or order > degree:
        raise ValueError("derivative order out of range")
    D = np.eye(degree + 1)
    n = degree
    for _ in range(order):
        step = np.zeros((n, n + 1))
        idx = np.arange(n)
        step[idx, idx] = -n / duration
        step[idx, idx + 1] = n / duration
        D = step @ D
        n -= 1
    D.setflags(write=False)
    return D


def difference_operator(degree: int, order: int, duration: float) -> np.ndarray:
    """Matrix mapping control points to order-k derivative control points.

    The derivative of a degree-n Bezier piece of duration T is the
    degree-(n-1) piece with control points n/T (P_{i+1} - P_i); iterated
    ``order`` times. Shape (degree - order + 1, degree + 1).
    """
    return _difference_operator(degree, order, float(duration)).copy()


def derivative_weights(degree: int, order: int, u: float,
                       duration: float) -> np.ndarray:
    """Row w with f^(order)(u T) = w . control_points (per dimension)."""
    D = _difference_operator(degree, order, float(duration))
    return bernstein_row(degree - order, u) @ D


def bernstein_gram(degree: int, duration: float) -> np.ndarray:
    """Integrals of Bernstein basis products over the piece.

    G_ij = integral_0^T B_i^n(t/T) B_j^n(t/T) dt
         = T binom(n,i) binom(n,j) / ((2n+1) binom(2n,i+j)).
    """
    n = degree
    G = np.empty((n + 1, n + 1))
    for i in range(n + 1):
        for j in range(n + 1):
            G[i, j] = (duration * comb(n, i) * comb(n, j)
                       / ((2 * n + 1) * comb(2 * n, i + j)))
    return G


def energy_matrix(degree: int, order: int, duration: float) -> np.ndarray:
    """PSD matrix M with integral ||f^(order)||^2 = sum_dims p_d' M p_d."""
    D = difference_operator(degree, order, duration)
    return D.T @ bernstein_gram(degree - order, duration) @ D


@dataclass(frozen=True)
class BezierPiece:
    """Degree-n curve over [0, duration] with control points (n+1, d)."""

    control_points: np.ndarray
    duration: float

    def __post_init__(self):
        object.__setattr__(self, "control_points",
                           np.atleast_2d(np.asarray(self.control_points,
                                                    dtype=float)))
        if self.duration <= 0:
            raise ValueError("duration must be positive")

    @property
    def degree(self) -> int:
        return self.control_points.shape[0] - 1

    def evaluate(self, t: float, order: int = 0) -> np.ndarray:
        u = min(max(t / self.duration, 0.0), 1.0)
        if order > self.degree:
            return np.zeros(self.control_points.shape[1])
        w = derivative_weights(self.degree, order, u, self.duration)
        return w @ self.control_points


@dataclass(frozen=True)
class PiecewiseTrajectory:
    """Consecutive Bezier pieces; evaluation clamps outside [0, duration].

    Beyond the end the trajectory holds the final position with zero
    derivatives, matching how an executing robot parks at the plan's end.
    """

    pieces: tuple[BezierPiece, ...]
    start_time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        if not self.pieces:
            raise ValueError("trajectory needs at least one piece")

    @property
    def duration(self) -> float:
        return sum(p.duration for p in self.pieces)

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration

    def _locate(self, t: float) -> tuple[BezierPiece, float, bool]:
        rel = t - self.start_time
        if rel <= 0.0:
            return self.pieces[0], 0.0, rel < 0.0
        for piece in self.pieces:
            if rel <= piece.duration:
                return piece, rel, False
            rel -= piece.duration
        return self.pieces[-1], self.pieces[-1].duration, True

    def position(self, t: float) -> np.ndarray:
        piece, rel, _ = self._locate(t)
        return piece.evaluate(rel, 0)

    def derivative(self, t: float, order: int) -> np.ndarray:
        piece, rel, clamped = self._locate(t)
        if clamped:
            return np.zeros(piece.control_points.shape[1])
        return piece.evaluate(rel, order)
