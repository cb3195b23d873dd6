"""Four-stage trajectory planner.

Each replanning iteration runs:

1. goal selection: a timepoint on the desired trajectory near one planning
   horizon ahead where the robot fits without touching any credible static
   obstacle;
2. discrete search: multi-objective A* over FORWARD/ROTATE/REACHGOAL motion
   primitives, tracking which static cells the path has run through and
   which dynamic-obstacle behavior hypotheses it has invalidated, so the
   path cost carries exact collision-probability terms;
3. trajectory optimization: one Bezier piece per search segment, fitted by
   a QP whose hyperplane constraints keep each piece inside the free region
   its segment was checked against;
4. validity check: continuous-time derivative-limit verification.

A failure at any stage aborts the iteration; the caller keeps executing the
previously accepted trajectory.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import convex_opt, cost_search, kernels
from .bezier import (
    BezierPiece,
    PiecewiseTrajectory,
    derivative_weights,
    energy_matrix,
)
from .cost_search import CostVector, astar
from .geometry import (
    Box,
    ConvexPolytope,
    SeparationError,
    minkowski_place,
    shift_for_robot,
    snap_to_obstacle,
    svm_separate,
    sweep,
)
from .world_model import (
    ConstantVelocity,
    DynamicObstacle,
    GoalAttractive,
    StaticObstacleStore,
)


@dataclass
class RobotSpec:
    """Robot shape, dynamic limits, and all planner parameters."""

    shape_at_origin: Box
    continuity_degree: int = 2
    derivative_limits: tuple[float, ...] = (10.0, 15.0)
    search_max_speed: float = 5.0
    forward_actions: tuple[tuple[float, float], ...] = (
        (2.0, 0.5), (3.5, 0.5), (4.5, 0.5))
    min_search_horizon: float = 2.0
    horizon_multiplier: float = 1.5
    desired_horizon: float = 2.5
    min_obstacle_probability: float = 0.1
    search_time_limit: float | None = 0.075
    search_expansion_limit: int | None = None
    piece_degree: int = 13
    sample_interval: float = 0.099
    energy_weights: dict[int, float] = field(
        default_factory=lambda: {1: 2.8, 2: 4.2, 4: 0.2})
    position_weights: tuple[float, ...] = (10.0, 20.0, 30.0, 40.0)
    velocity_weights: tuple[float, ...] = (10.0, 20.0, 30.0, 40.0)
    goal_step_fraction: float = 0.01
    constraint_culling_margin: float = 1.0

    def weight_for(self, weights: tuple[float, ...], piece: int) -> float:
        return weights[min(piece, len(weights) - 1)]


@dataclass(frozen=True)
class EgoState:
    """Derivatives s_0..s_c of the robot's current motion state."""

    derivatives: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "derivatives",
                           tuple(np.asarray(d, dtype=float)
                                 for d in self.derivatives))

    @property
    def position(self) -> np.ndarray:
        return self.derivatives[0]

    @property
    def velocity(self) -> np.ndarray:
        return self.derivatives[1] if len(self.derivatives) > 1 else np.zeros(3)

    @staticmethod
    def at_rest(position, degree: int = 2) -> "EgoState":
        return EgoState((np.asarray(position, dtype=float),)
                        + tuple(np.zeros(3) for _ in range(degree)))


@dataclass(frozen=True)
class DesiredTrajectory:
    """Piecewise-linear reference path; evaluation clamps to the endpoints."""

    points: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points",
                           np.atleast_2d(np.asarray(self.points, dtype=float)))
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        if len(self.points) != len(self.times):
            raise ValueError("points and times must have equal length")
        if np.any(np.diff(self.times) < 0):
            raise ValueError("times must be non-decreasing")

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def position(self, t: float) -> np.ndarray:
        t = min(max(t, float(self.times[0])), self.duration)
        return np.array([np.interp(t, self.times, self.points[:, d])
                         for d in range(self.points.shape[1])])

    @staticmethod
    def straight_line(start, end, speed: float) -> "DesiredTrajectory":
        start = np.asarray(start, dtype=float)
        end = np.asarray(end, dtype=float)
        duration = float(np.linalg.norm(end - start)) / speed
        return DesiredTrajectory(np.vstack([start, end]),
                                 np.array([0.0, max(duration, 1e-9)]))


def select_goal(desired: DesiredTrajectory, store: StaticObstacleStore,
                ego: EgoState, now: float,
                spec: RobotSpec) -> tuple[np.ndarray, float]:
    """Safe goal timepoint nearest to one planning horizon ahead.

    Scans alternately forward and backward from now + horizon in steps of
    a fraction of the horizon, clamped to the desired trajectory's span. A
    point is safe when the robot placed there misses every static cell with
    existence probability at or above the credibility threshold. Falls back
    to a stop-in-place goal when nothing is safe.
    """
    target = now + spec.desired_horizon
    step = spec.goal_step_fraction * spec.desired_horizon
    total = desired.duration

    def is_safe(t: float) -> bool:
        p = desired.position(t)
        hits = store.query_sweep(spec.shape_at_origin, p, p)
        return all(prob < spec.min_obstacle_probability for _, prob in hits)

    k = 0
    seen = set()
    while True:
        candidates = [target + k * step, target - k * step] if k else [target]
        made_progress = False
        for t in candidates:
            t = min(max(t, 0.0), total)
            key = round(t / step) if step > 0 else 0
            if key in seen:
                continue
            seen.add(key)
            made_progress = True
            if is_safe(t):
                return desired.position(t), t
        if not made_progress and k > 0:
            break
        k += 1
    return ego.position.copy(), now


# 26 grid directions in 3D
_DIRECTIONS = tuple(d for d in itertools.product((-1, 0, 1), repeat=3)
                    if d != (0, 0, 0))


def _alignment_rotation(velocity: np.ndarray) -> np.ndarray:
    """Rotation taking the +x axis to the velocity direction.

    Identity for near-zero speed; a half-turn about z when the velocity
    points along -x.
    """
    speed = float(np.linalg.norm(velocity))
    if speed < 1e-6:
        return np.eye(3)
    u = velocity / speed
    e = np.array([1.0, 0.0, 0.0])
    axis = np.cross(e, u)
    s = float(np.linalg.norm(axis))
    c = float(e @ u)
    if s < 1e-12:
        if c > 0:
            return np.eye(3)
        return np.diag([-1.0, -1.0, 1.0])
    axis = axis / s
    K = np.array([[0, -axis[2], axis[1]],
                  [axis[2], 0, -axis[0]],
                  [-axis[1], axis[0], 0]])
    return np.eye(3) + s * K + (1 - c) * (K @ K)


@dataclass(frozen=True)
class SearchState:
    position: tuple[float, float, float]
    direction: tuple[int, int, int]
    t: float
    o_set: frozenset
    # per obstacle: surviving (model index, model position) pairs
    d_sets: tuple[tuple[tuple[int, tuple[float, float, float]], ...], ...]
    # per obstacle: surviving model indices only (duplicate-detection key)
    d_key: tuple[tuple[int, ...], ...]
    p_nc_static: float
    p_nc_dynamic: float
    goal_reached: bool = False

    @property
    def p_static(self) -> float:
        return 1.0 - self.p_nc_static

    @property
    def p_dynamic(self) -> float:
        return 1.0 - self.p_nc_dynamic


@dataclass(frozen=True)
class SearchPlan:
    states: tuple[SearchState, ...]
    cost: CostVector
    expansions: int
    complete: bool
    horizon: float


class _SearchProblem:
    """Expansion, cost, heuristic, and duplicate keys for the A* stage.

    The per-expansion work is all plain float arithmetic: each FORWARD or
    REACHGOAL edge propagates every surviving behavior hypothesis of every
    obstacle, so array allocation in this loop dominates the planning budget.
    """

    def __init__(self, goal, horizon, ego, store, obstacles, spec):
        self.goal = np.asarray(goal, dtype=float)
        self.horizon = horizon
        self.store = store
        self.obstacles = obstacles
        self.spec = spec
        self.rotation = _alignment_rotation(ego.velocity)
        self.half_cell = store.cell_size / 2.0
        self._goal = (float(goal[0]), float(goal[1]), float(goal[2]))
        self._dir_cache: dict[tuple[int, int, int],
                              tuple[float, float, float]] = {}
        rmin = spec.shape_at_origin.min_corner
        rmax = spec.shape_at_origin.max_corner
        self._rmin = (float(rmin[0]), float(rmin[1]), float(rmin[2]))
        self._rmax = (float(rmax[0]), float(rmax[1]), float(rmax[2]))
        # per obstacle: (shape min, shape max, scalar model parameters)
        self._obstacle_info = []
        for obstacle in obstacles:
            omin = obstacle.shape_at_origin.min_corner
            omax = obstacle.shape_at_origin.max_corner
            rows = []
            for model, prob in obstacle.models:
                m = model.movement
                if isinstance(m, ConstantVelocity):
                    rows.append((0, (float(m.velocity[0]),
                                     float(m.velocity[1]),
                                     float(m.velocity[2])), 0.0,
                                 float(model.interaction.strength), prob))
                elif isinstance(m, GoalAttractive):
                    rows.append((1, (float(m.goal[0]), float(m.goal[1]),
                                     float(m.goal[2])),
                                 float(m.desired_speed),
                                 float(model.interaction.strength), prob))
                else:
                    rows.append((2, (float(m.center[0]), float(m.center[1]),
                                     float(m.center[2])),
                                 float(m.desired_speed),
                                 float(model.interaction.strength), prob))
            self._obstacle_info.append(
                ((float(omin[0]), float(omin[1]), float(omin[2])),
                 (float(omax[0]), float(omax[1]), float(omax[2])),
                 tuple(rows)))

    def direction_vector(
            self, delta: tuple[int, int, int]) -> tuple[float, float, float]:
        u = self._dir_cache.get(delta)
        if u is None:
            d = np.asarray(delta, dtype=float)
            v = self.rotation @ (d / np.linalg.norm(d))
            u = (float(v[0]), float(v[1]), float(v[2]))
            self._dir_cache[delta] = u
        return u

    def start_state(self, ego: EgoState) -> SearchState:
        p0 = ego.position
        hits = self.store.query_sweep(self.spec.shape_at_origin, p0, p0)
        p_nc_static = 1.0
        for _, prob in hits:
            p_nc_static *= (1.0 - prob)
        o_set = frozenset(idx for idx, _ in hits)

        robot = minkowski_place(self.spec.shape_at_origin, p0)
        d_sets = []
        p_nc_dynamic = 1.0
        for obstacle in self.obstacles:
            total = sum(p for _, p in obstacle.models)
            colliding = robot.intersects_box(obstacle.shape_at())
            if colliding:
                survivors = ()
                surviving_mass = 0.0
            else:
                survivors = tuple((j, tuple(obstacle.position))
                                  for j in range(len(obstacle.models)))
                surviving_mass = total
            d_sets.append(survivors)
            if total > 0:
                p_nc_dynamic *= surviving_mass / total
        d_sets = tuple(d_sets)
        d_key = tuple(tuple(j for j, _ in row) for row in d_sets)
        return SearchState(tuple(p0), (1, 0, 0), 0.0, o_set, d_sets, d_key,
                           p_nc_static, p_nc_dynamic)

    def _advance(self, state: SearchState,
                 p_new: tuple[float, float, float], duration: float,
                 goal_reached: bool) -> SearchState:
        ax, ay, az = state.position
        bx, by, bz = p_new
        rminx, rminy, rminz = self._rmin
        rmaxx, rmaxy, rmaxz = self._rmax
        seg = kernels.seg_aabb_intersects

        # static cells newly swept by the robot box along the segment
        cs = self.store.cell_size
        cells = self.store.cells
        i0x = math.floor((min(ax, bx) + rminx - 1e-9) / cs)
        i0y = math.floor((min(ay, by) + rminy - 1e-9) / cs)
        i0z = math.floor((min(az, bz) + rminz - 1e-9) / cs)
        i1x = math.floor((max(ax, bx) + rmaxx + 1e-9) / cs)
        i1y = math.floor((max(ay, by) + rmaxy + 1e-9) / cs)
        i1z = math.floor((max(az, bz) + rmaxz + 1e-9) / cs)
        if (i1x - i0x + 1) * (i1y - i0y + 1) * (i1z - i0z + 1) > len(cells):
            candidates = [idx for idx in cells
                          if i0x <= idx[0] <= i1x and i0y <= idx[1] <= i1y
                          and i0z <= idx[2] <= i1z]
        else:
            candidates = [idx for idx in (
                (ix, iy, iz)
                for ix in range(i0x, i1x + 1)
                for iy in range(i0y, i1y + 1)
                for iz in range(i0z, i1z + 1)) if idx in cells]
        p_nc_static = state.p_nc_static
        o_set = state.o_set
        new_ids = []
        for idx in candidates:
            if idx in o_set:
                continue
            cx = idx[0] * cs
            cy = idx[1] * cs
            cz = idx[2] * cs
            if seg(ax, ay, az, bx, by, bz,
                   cx - rmaxx, cy - rmaxy, cz - rmaxz,
                   cx + cs - rminx, cy + cs - rminy, cz + cs - rminz):
                p_nc_static *= (1.0 - cells[idx])
                new_ids.append(idx)
        if new_ids:
            o_set = o_set.union(new_ids)

        rmin = self._rmin
        rmax = self._rmax
        p_old = state.position
        pair = kernels.sweep_pair_intersects
        d_sets = []
        d_key = []
        p_nc_dynamic = state.p_nc_dynamic
        for info, survivors in zip(self._obstacle_info, state.d_sets):
            if not survivors:
                d_sets.append(())
                d_key.append(())
                continue
            omin, omax, rows = info
            before = 0.0
            after = 0.0
            kept = []
            for j, q in survivors:
                kind, param, speed, strength, prob = rows[j]
                before += prob
                qx, qy, qz = q
                if kind == 0:
                    vx, vy, vz = param
                elif kind == 1:
                    dx = param[0] - qx
                    dy = param[1] - qy
                    dz = param[2] - qz
                    n = math.sqrt(dx * dx + dy * dy + dz * dz)
                    if n < 1e-12:
                        vx = vy = vz = 0.0
                    else:
                        sc = speed / n
                        vx = dx * sc
                        vy = dy * sc
                        vz = dz * sc
                else:
                    rx = qx - param[0]
                    ry = qy - param[1]
                    rz = qz - param[2]
                    # tangent convention: z x radius, or x x radius
                    tx = -ry
                    ty = rx
                    tz = 0.0
                    n = math.sqrt(tx * tx + ty * ty)
                    if n < 1e-12:
                        tx = 0.0
                        ty = -rz
                        tz = ry
                        n = math.sqrt(ty * ty + tz * tz)
                    if n < 1e-12:
                        vx = vy = vz = 0.0
                    else:
                        sc = speed / n
                        vx = tx * sc
                        vy = ty * sc
                        vz = tz * sc
                if strength != 0.0:
                    dx = qx - ax
                    dy = qy - ay
                    dz = qz - az
                    n = math.sqrt(dx * dx + dy * dy + dz * dz)
                    if n >= 1e-12:
                        sc = strength / (n * n * n)
                        vx += dx * sc
                        vy += dy * sc
                        vz += dz * sc
                q_new = (qx + vx * duration, qy + vy * duration,
                         qz + vz * duration)
                if not pair(rmin, rmax, p_old, p_new, omin, omax, q, q_new):
                    after += prob
                    kept.append((j, q_new))
            d_sets.append(tuple(kept))
            d_key.append(tuple(j for j, _ in kept))
            if before > 0.0:
                p_nc_dynamic *= after / before
        return SearchState(p_new, state.direction,
                           state.t + duration, o_set, tuple(d_sets),
                           tuple(d_key), p_nc_static, p_nc_dynamic,
                           goal_reached)

    def _edge_cost(self, state: SearchState,
                   successor: SearchState) -> CostVector:
        dt = successor.t - state.t
        j_static = 0.5 * (state.p_static + successor.p_static) * dt
        j_dynamic = 0.5 * (state.p_dynamic + successor.p_dynamic) * dt
        a = state.position
        b = successor.position
        j_distance = math.sqrt((b[0] - a[0]) ** 2 + (b[1] - a[1]) ** 2
                               + (b[2] - a[2]) ** 2)
        return CostVector(j_static, j_dynamic, j_distance, dt, 0.0)

    _ROTATE_COST = CostVector(0.0, 0.0, 0.0, 0.0, 1.0)

    def expand(self, state: SearchState):
        if state.goal_reached:
            return
        px, py, pz = state.position
        ux, uy, uz = self.direction_vector(state.direction)
        for speed, duration in self.spec.forward_actions:
            step = speed * duration
            succ = self._advance(state, (px + ux * step, py + uy * step,
                                         pz + uz * step), duration, False)
            yield succ, self._edge_cost(state, succ)
        for delta in _DIRECTIONS:
            if delta == state.direction:
                continue
            succ = SearchState(state.position, delta, state.t, state.o_set,
                               state.d_sets, state.d_key, state.p_nc_static,
                               state.p_nc_dynamic)
            yield succ, self._ROTATE_COST
        gx, gy, gz = self._goal
        distance = math.sqrt((gx - px) ** 2 + (gy - py) ** 2 + (gz - pz) ** 2)
        duration = max(self.horizon - state.t,
                       distance / self.spec.search_max_speed)
        # floor keeps the final trajectory piece well-posed
        duration = max(duration, self.spec.sample_interval)
        succ = self._advance(state, self._goal, duration, True)
        yield succ, self._edge_cost(state, succ)

    def heuristic(self, state: SearchState) -> CostVector:
        if state.goal_reached:
            return CostVector.zero()
        px, py, pz = state.position
        gx, gy, gz = self._goal
        h_distance = math.sqrt((gx - px) ** 2 + (gy - py) ** 2
                               + (gz - pz) ** 2)
        h_duration = max(self.horizon - state.t,
                         h_distance / self.spec.search_max_speed)
        # relative downscale keeps the heuristic admissible under floating
        # point: when it is mathematically tight, rounding in a different
        # operation order can otherwise push it one ulp above the true
        # remaining cost and break optimality in exact-tie instances
        slack = 1.0 - 1e-12
        return CostVector((1.0 - state.p_nc_static) * h_duration * slack,
                          (1.0 - state.p_nc_dynamic) * h_duration * slack,
                          h_distance * slack, h_duration * slack, 0.0)

    def state_key(self, state: SearchState):
        p = state.position
        hc = self.half_cell
        return (round(p[0] / hc), round(p[1] / hc), round(p[2] / hc),
                state.direction, round(state.t * 1000.0),
                state.o_set, state.d_key, state.goal_reached)


def plan_search(goal, goal_time: float, ego: EgoState,
                store: StaticObstacleStore,
                obstacles: list[DynamicObstacle], spec: RobotSpec,
                now: float = 0.0) -> SearchPlan | None:
    """Discrete search stage; returns the best goal-terminated state path.

    State times are relative to now. The planning horizon is the largest of
    the minimum horizon, the time until the selected goal timepoint, and a
    multiple of the straight-line travel time at maximum search speed.
    """
    goal = np.asarray(goal, dtype=float)
    horizon = max(spec.min_search_horizon, goal_time - now,
                  spec.horizon_multiplier
                  * float(np.linalg.norm(ego.position - goal))
                  / spec.search_max_speed)
    problem = _SearchProblem(goal, horizon, ego, store, obstacles, spec)
    start = problem.start_state(ego)
    result = astar(start, lambda s: s.goal_reached, problem.expand,
                   problem.heuristic, state_key=problem.state_key,
                   expansion_limit=spec.search_expansion_limit,
                   time_limit=spec.search_time_limit)
    if result is None:
        return None
    return SearchPlan(tuple(result.path), result.cost, result.expansions,
                      result.complete, horizon)


def strip_rotations(states: tuple[SearchState, ...]) -> tuple[SearchState, ...]:
    """Drop ROTATE states (zero elapsed time) keeping the last of each run."""
    out = [states[0]]
    for state in states[1:]:
        if state.t == out[-1].t:
            out[-1] = state
        else:
            out.append(state)
    return tuple(out)


class TrajectoryOptimizationError(RuntimeError):
    pass


def _piece_hyperplanes(states, index, store, obstacles, spec):
    """Safety constraints for piece ``index`` (states[index] -> [index+1])."""
    a = np.asarray(states[index].position)
    b = np.asarray(states[index + 1].position)
    robot_sweep = sweep(spec.shape_at_origin, a, b)
    margin = spec.constraint_culling_margin
    lo = (np.minimum(a, b) + spec.shape_at_origin.min_corner) - margin
    hi = (np.maximum(a, b) + spec.shape_at_origin.max_corner) + margin

    planes = []
    excluded = states[index + 1].o_set
    for idx in store.candidate_cells(lo, hi):
        if idx in excluded:
            continue
        poly = ConvexPolytope(store.cell_box(idx).corners())
        plane = shift_for_robot(snap_to_obstacle(
            svm_separate(robot_sweep, poly), poly), spec.shape_at_origin)
        planes.append(plane)

    prev_survivors = {(k, j): q for k, row in enumerate(states[index].d_sets)
                      for j, q in row}
    for k, obstacle in enumerate(obstacles):
        for j, q_next in states[index + 1].d_sets[k]:
            q_prev = prev_survivors.get((k, j))
            if q_prev is None:
                continue
            sweep_box_lo = (np.minimum(q_prev, q_next)
                            + obstacle.shape_at_origin.min_corner)
            sweep_box_hi = (np.maximum(q_prev, q_next)
                            + obstacle.shape_at_origin.max_corner)
            if np.any(sweep_box_hi < lo) or np.any(sweep_box_lo > hi):
                continue
            poly = sweep(obstacle.shape_at_origin, np.asarray(q_prev),
                         np.asarray(q_next))
            plane = shift_for_robot(snap_to_obstacle(
                svm_separate(robot_sweep, poly), poly), spec.shape_at_origin)
            planes.append(plane)
    return planes


def optimize_trajectory(states: tuple[SearchState, ...], ego: EgoState,
                        store: StaticObstacleStore,
                        obstacles: list[DynamicObstacle], spec: RobotSpec,
                        start_time: float = 0.0) -> PiecewiseTrajectory:
    """Fit one Bezier piece per search segment under safety constraints.

    Raises TrajectoryOptimizationError when constraint generation or the QP
    fails; the caller treats that as a planning failure.
    """
    if len(states) < 2:
        raise TrajectoryOptimizationError("need at least two states")
    n_pieces = len(states) - 1
    h = spec.piece_degree
    n_ctrl = h + 1
    c = spec.continuity_degree
    per_piece = 3 * n_ctrl
    n_var = n_pieces * per_piece
    durations = [states[i + 1].t - states[i].t for i in range(n_pieces)]

    def var(piece, dim, ctrl):
        return piece * per_piece + dim * n_ctrl + ctrl

    P = sp.lil_matrix((n_var, n_var))
    q = np.zeros(n_var)
    for i, T in enumerate(durations):
        block = np.zeros((n_ctrl, n_ctrl))
        for order, weight in spec.energy_weights.items():
            if weight > 0 and order <= h:
                block += weight * energy_matrix(h, order, T)
        # endpoint position matching: f_i(T_i) is the last control point
        theta = spec.weight_for(spec.position_weights, i)
        block[h, h] += theta
        # start velocity matching: f_i'(0) = h/T (P_1 - P_0)
        beta = spec.weight_for(spec.velocity_weights, i)
        dv = np.zeros(n_ctrl)
        dv[0] = -h / T
        dv[1] = h / T
        block += beta * np.outer(dv, dv)
        block += 1e-8 * np.eye(n_ctrl)

        target = np.asarray(states[i + 1].position)
        v_target = (target - np.asarray(states[i].position)) / T
        for dim in range(3):
            base = var(i, dim, 0)
            P[base:base + n_ctrl, base:base + n_ctrl] = block
            q[base + h] += -theta * target[dim]
            q[base:base + n_ctrl] += -beta * v_target[dim] * dv

    eq_rows, eq_cols, eq_vals, eq_b = [], [], [], []

    def add_eq(entries, rhs):
        row = len(eq_b)
        for col, val in entries:
            eq_rows.append(row)
            eq_cols.append(col)
            eq_vals.append(val)
        eq_b.append(rhs)

    # initial state continuity up to degree c
    for order in range(c + 1):
        w = derivative_weights(h, order, 0.0, durations[0])
        target = (ego.derivatives[order] if order < len(ego.derivatives)
                  else np.zeros(3))
        for dim in range(3):
            add_eq([(var(0, dim, k), w[k]) for k in range(n_ctrl)
                    if w[k] != 0.0], float(target[dim]))
    # joint continuity
    for i in range(n_pieces - 1):
        for order in range(c + 1):
            w_end = derivative_weights(h, order, 1.0, durations[i])
            w_start = derivative_weights(h, order, 0.0, durations[i + 1])
            for dim in range(3):
                entries = [(var(i, dim, k), w_end[k]) for k in range(n_ctrl)
                           if w_end[k] != 0.0]
                entries += [(var(i + 1, dim, k), -w_start[k])
                            for k in range(n_ctrl) if w_start[k] != 0.0]
                add_eq(entries, 0.0)

    in_rows, in_cols, in_vals, in_b = [], [], [], []

    def add_ineq(entries, rhs):
        row = len(in_b)
        for col, val in entries:
            in_rows.append(row)
            in_cols.append(col)
            in_vals.append(val)
        in_b.append(rhs)

    # safety hyperplanes: every control point of the piece on the safe side
    try:
        for i in range(n_pieces):
            for plane in _piece_hyperplanes(states, i, store, obstacles, spec):
                for k in range(n_ctrl):
                    add_ineq([(var(i, dim, k), plane.normal[dim])
                              for dim in range(3)], plane.offset)
    except SeparationError as exc:
        raise TrajectoryOptimizationError(str(exc)) from exc

    # sampled per-dimension derivative limits
    limit_orders = [(k + 1, g) for k, g in enumerate(spec.derivative_limits)]
    bound_scale = 1.0 / np.sqrt(3.0)
    total = sum(durations)
    sample_times = [j * spec.sample_interval
                    for j in range(int(total / spec.sample_interval) + 1)]
    sample_times.extend(np.cumsum(durations))
    piece_starts = np.concatenate([[0.0], np.cumsum(durations)])
    for t in sample_times:
        t = min(t, total)
        i = min(int(np.searchsorted(piece_starts[1:], t, side="left")),
                n_pieces - 1)
        u = (t - piece_starts[i]) / durations[i]
        for order, gamma in limit_orders:
            if order > h:
                continue
            w = derivative_weights(h, order, u, durations[i])
            bound = gamma * bound_scale
            for dim in range(3):
                entries = [(var(i, dim, k), w[k]) for k in range(n_ctrl)
                           if w[k] != 0.0]
                add_ineq(entries, bound)
                add_ineq([(col, -val) for col, val in entries], bound)

    A_eq = sp.csc_matrix((eq_vals, (eq_rows, eq_cols)),
                         shape=(len(eq_b), n_var))
    A_in = sp.csc_matrix((in_vals, (in_rows, in_cols)),
                         shape=(len(in_b), n_var))
    result = convex_opt.solve_qp_sparse(
        sp.triu(P.tocsc(), format="csc"), q, A_eq, np.asarray(eq_b),
        A_in, np.asarray(in_b))
    if not result.ok:
        raise TrajectoryOptimizationError(
            f"trajectory QP failed: {result.status.value}")

    pieces = []
    for i, T in enumerate(durations):
        pts = np.empty((n_ctrl, 3))
        for dim in range(3):
            base = var(i, dim, 0)
            pts[:, dim] = result.solution[base:base + n_ctrl]
        pieces.append(BezierPiece(pts, T))
    return PiecewiseTrajectory(tuple(pieces), start_time=start_time)


def validity_check(trajectory: PiecewiseTrajectory, spec: RobotSpec) -> bool:
    """Continuous-time derivative-limit verification.

    Dense sampling at a tenth of the constraint sampling interval, with a
    golden-section refinement around the sampled maximum of each derivative
    magnitude.
    """
    from scipy.optimize import minimize_scalar

    from .bezier import difference_operator

    for piece in trajectory.pieces:
        n_samples = max(int(piece.duration / (spec.sample_interval / 10.0)), 2)
        ts = np.linspace(0.0, piece.duration, n_samples + 1)
        u = (ts / piece.duration)[:, None]
        for order, gamma in enumerate(spec.derivative_limits, start=1):
            deriv_pts = difference_operator(
                piece.degree, order, piece.duration) @ piece.control_points
            deg = piece.degree - order
            i = np.arange(deg + 1)
            basis = (np.array([math.comb(deg, k) for k in i])
                     * u ** i * (1.0 - u) ** (deg - i))
            mags = np.sqrt(((basis @ deriv_pts) ** 2).sum(axis=1))
            worst = int(np.argmax(mags))
            lo = ts[max(worst - 1, 0)]
            hi = ts[min(worst + 1, len(ts) - 1)]
            refined = minimize_scalar(
                lambda t: -float(np.linalg.norm(piece.evaluate(t, order))),
                bounds=(lo, hi), method="bounded",
                options={"xatol": 1e-10})
            peak = max(mags[worst], -float(refined.fun))
            # small slack so an exactly-at-limit trajectory is not rejected
            # for floating-point noise
            if peak > gamma + 1e-9 * max(1.0, gamma):
                return False
    return True


@dataclass(frozen=True)
class PlanOutcome:
    trajectory: PiecewiseTrajectory | None
    failure_stage: str | None = None
    reason: str = ""
    goal: np.ndarray | None = None
    search: SearchPlan | None = None

    @property
    def ok(self) -> bool:
        return self.trajectory is not None


def plan(desired: DesiredTrajectory, store: StaticObstacleStore,
         obstacles: list[DynamicObstacle], ego: EgoState, now: float,
         spec: RobotSpec) -> PlanOutcome:
    """Run the full four-stage pipeline for one replanning iteration."""
    goal, goal_time = select_goal(desired, store, ego, now, spec)
    search = plan_search(goal, goal_time, ego, store, obstacles, spec, now=now)
    if search is None:
        return PlanOutcome(None, "search", "no goal-terminated path found",
                           goal=goal)
    states = strip_rotations(search.states)
    try:
        trajectory = optimize_trajectory(states, ego, store, obstacles, spec,
                                         start_time=now)
    except TrajectoryOptimizationError as exc:
        return PlanOutcome(None, "optimization", str(exc), goal=goal,
                           search=search)
    if not validity_check(trajectory, spec):
        return PlanOutcome(None, "validity", "derivative limits violated",
                           goal=goal, search=search)
    return PlanOutcome(trajectory, goal=goal, search=search)
