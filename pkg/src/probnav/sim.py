"""Perfect-execution receding-horizon simulation and experiment runner.

Reproduces the randomized evaluation protocol: a cylindrical tree forest of
configurable density, dynamic obstacles with randomized behavior models, a
robot starting on a circle around the forest navigating to the antipodal
point, receding-horizon replanning with behavior prediction from sensed
obstacle histories, and per-run metrics aggregated over seeds into CSV.

Determinism contract: everything that influences simulation results is
driven by named RNG streams derived from the run seed, and the planner uses
a deterministic expansion budget rather than a wall-clock limit. Measured
planning wall-clock durations are reported separately and never fed back
into the simulation.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Box
from .mocks import (
    delete_obstacles,
    increase_uncertainty,
    leak_obstacles,
    sense_dynamic,
)
from .planner import DesiredTrajectory, EgoState, RobotSpec, plan
from .prediction import HistoryBuffer, fit_all
from .world_model import (
    BehaviorModel,
    ConstantVelocity,
    DynamicObstacle,
    GoalAttractive,
    Repulsive,
    Rotating,
    StaticObstacleStore,
    step_obstacle,
)

FOREST_RADIUS = 15.0
TREE_HEIGHT = 6.0
TREE_RADIUS = 0.5
CELL_SIZE = 0.5
START_CIRCLE_RADIUS = 21.5
START_HEIGHT = 2.5
SPAWN_MIN = np.array([-12.0, -12.0, -2.0])
SPAWN_MAX = np.array([12.0, 12.0, 6.0])
SIM_STEP = 0.01
DEADLOCK_CAP_MULTIPLIER = 4.0
# deterministic search budget replacing the wall-clock limit in simulation
DEFAULT_EXPANSION_LIMIT = 150


@dataclass
class RunConfig:
    """One simulated navigation run's randomization and planner settings."""

    density: float = 0.0
    num_dynamic: int = 0
    strategy: str = "with_prior"
    speed_range: tuple[float, float] = (0.5, 1.0)
    repulsion_range: tuple[float, float] = (0.2, 0.5)
    replan_period_range: tuple[float, float] = (0.2, 0.4)
    sensing_noise_cov: tuple | None = None
    shape_noise_std: float = 0.0
    static_mocks: tuple = ()
    goal_tolerance: float = 0.5
    seed: int = 0
    spec_overrides: dict = field(default_factory=dict)

    def validate(self) -> None:
        if not 0.0 <= self.density <= 1.0:
            raise ValueError("density must be in [0, 1]")
        if self.num_dynamic < 0:
            raise ValueError("num_dynamic must be nonnegative")
        if self.strategy not in ("with_prior", "without_prior"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        for name in ("speed_range", "repulsion_range", "replan_period_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} must be ordered")
        if self.sensing_noise_cov is not None:
            cov = np.asarray(self.sensing_noise_cov, dtype=float)
            if cov.shape != (6, 6):
                raise ValueError("sensing_noise_cov must be 6x6")
            if np.linalg.eigvalsh(0.5 * (cov + cov.T)).min() < -1e-9:
                raise ValueError("sensing_noise_cov must be PSD")
        for op in self.static_mocks:
            if op.get("op") not in ("increase_uncertainty", "leak_obstacles",
                                    "delete_obstacles"):
                raise ValueError(f"unknown static mock {op!r}")

    def to_dict(self) -> dict:
        out = {
            "density": self.density,
            "num_dynamic": self.num_dynamic,
            "strategy": self.strategy,
            "speed_range": list(self.speed_range),
            "repulsion_range": list(self.repulsion_range),
            "replan_period_range": list(self.replan_period_range),
            "shape_noise_std": self.shape_noise_std,
            "static_mocks": [dict(op) for op in self.static_mocks],
            "goal_tolerance": self.goal_tolerance,
            "seed": self.seed,
            "spec_overrides": dict(self.spec_overrides),
        }
        if self.sensing_noise_cov is not None:
            out["sensing_noise_cov"] = np.asarray(
                self.sensing_noise_cov, dtype=float).tolist()
        return out

    @staticmethod
    def from_dict(data: dict) -> "RunConfig":
        kw = dict(data)
        for name in ("speed_range", "repulsion_range", "replan_period_range"):
            if name in kw:
                kw[name] = tuple(kw[name])
        if kw.get("sensing_noise_cov") is not None:
            kw["sensing_noise_cov"] = tuple(
                tuple(row) for row in kw["sensing_noise_cov"])
        if "static_mocks" in kw:
            kw["static_mocks"] = tuple(dict(op) for op in kw["static_mocks"])
        config = RunConfig(**kw)
        config.validate()
        return config


@dataclass
class RunMetrics:
    success: bool
    collision: bool
    deadlock: bool
    static_collision: bool
    dynamic_collision: bool
    navigation_duration: float  # nan unless the goal was reached
    planning_fail_count: int
    planning_total_count: int
    planning_durations: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.success and (self.collision or self.deadlock):
            raise ValueError("success excludes collision and deadlock")
        if self.collision != (self.static_collision or self.dynamic_collision):
            raise ValueError("collision must match its breakdown")


def _streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(5)
    names = ("forest", "obstacles", "robot", "mocks", "noise")
    return {name: np.random.default_rng(child)
            for name, child in zip(names, children)}


def generate_forest(density: float,
                    rng: np.random.Generator) -> StaticObstacleStore:
    """Random tree forest: 1 m square columns, full height, probability 1.

    Cells are occupied until the ratio of occupied cells within the
    cylinder reaches the target density.
    """
    store = StaticObstacleStore(CELL_SIZE)
    if density <= 0.0:
        return store
    n_z = int(round(TREE_HEIGHT / CELL_SIZE))
    reach = int(math.ceil(FOREST_RADIUS / CELL_SIZE))
    columns = []
    for i in range(-reach, reach):
        for j in range(-reach, reach):
            cx = (i + 0.5) * CELL_SIZE
            cy = (j + 0.5) * CELL_SIZE
            if cx * cx + cy * cy <= FOREST_RADIUS ** 2:
                columns.append((i, j))
    column_set = set(columns)
    total = len(columns) * n_z
    occupied: set[tuple[int, int]] = set()
    target = density * total
    while len(occupied) * n_z < target and len(occupied) < len(columns):
        pick = columns[int(rng.integers(len(columns)))]
        # 2x2 column footprint approximates the 0.5 m tree radius
        for di in (0, 1):
            for dj in (0, 1):
                col = (pick[0] + di, pick[1] + dj)
                if col in column_set and col not in occupied:
                    occupied.add(col)
                    for k in range(n_z):
                        store.set_cell((col[0], col[1], k), 1.0)
    return store


def apply_static_mocks(store: StaticObstacleStore, mocks,
                       rng: np.random.Generator) -> StaticObstacleStore:
    for op in mocks:
        if op["op"] == "increase_uncertainty":
            increase_uncertainty(store, rng)
        elif op["op"] == "leak_obstacles":
            leak_obstacles(store, float(op["p_leak"]), rng)
        elif op["op"] == "delete_obstacles":
            delete_obstacles(store, rng)
        else:
            raise ValueError(f"unknown static mock {op!r}")
    return store


def random_obstacle(rng: np.random.Generator, speed_range, repulsion_range
                    ) -> tuple[DynamicObstacle, BehaviorModel]:
    """One randomized dynamic obstacle and its true behavior model."""
    sizes = rng.uniform(1.0, 4.0, 3)
    position = rng.uniform(SPAWN_MIN, SPAWN_MAX)
    desired_speed = float(rng.uniform(*speed_range))
    strength = float(rng.uniform(*repulsion_range))
    kind = int(rng.integers(3))
    if kind == 0:
        movement = GoalAttractive(rng.uniform(SPAWN_MIN, SPAWN_MAX),
                                  desired_speed)
    elif kind == 1:
        direction = rng.normal(size=3)
        norm = np.linalg.norm(direction)
        direction = direction / norm if norm > 1e-12 else np.array([1., 0, 0])
        movement = ConstantVelocity(direction * desired_speed)
    else:
        movement = Rotating(rng.uniform(-0.5, 0.5, 3), desired_speed)
    true_model = BehaviorModel(movement, Repulsive(strength))
    obstacle = DynamicObstacle(position, Box(-sizes / 2.0, sizes / 2.0), [],
                               decision_period=float(rng.uniform(0.1, 0.5)))
    return obstacle, true_model


# desired-trajectory strategies

def _grid_neighbors():
    out = []
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            for dk in (-1, 0, 1):
                if (di, dj, dk) != (0, 0, 0):
                    out.append((di, dj, dk, math.sqrt(di * di + dj * dj
                                                      + dk * dk)))
    return tuple(out)


_GRID_NEIGHBORS = _grid_neighbors()


def _grid_shortest_path(store: StaticObstacleStore, start, goal,
                        min_probability: float) -> list[np.ndarray] | None:
    """A* over cell centers avoiding credible cells, dilated by one cell.

    The one-cell dilation keeps the robot body (half-extent below half a
    cell) clear of occupied cells even on diagonal moves.
    """
    import heapq

    blocked = set()
    for (i, j, k), p in store.cells.items():
        if p < min_probability:
            continue
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                for dk in (-1, 0, 1):
                    blocked.add((i + di, j + dj, k + dk))

    bound_xy = int(math.ceil((START_CIRCLE_RADIUS + 2.0) / CELL_SIZE))
    k_max = int((TREE_HEIGHT + 2.5) / CELL_SIZE)

    def cell_of(point):
        return (int(math.floor(point[0] / CELL_SIZE)),
                int(math.floor(point[1] / CELL_SIZE)),
                int(math.floor(point[2] / CELL_SIZE)))

    def center(cell):
        return np.array([(cell[0] + 0.5) * CELL_SIZE,
                         (cell[1] + 0.5) * CELL_SIZE,
                         (cell[2] + 0.5) * CELL_SIZE])

    start_cell = cell_of(start)
    goal_cell = cell_of(goal)
    if start_cell in blocked or goal_cell in blocked:
        return None
    gxyz = center(goal_cell)

    def h(cell):
        c = center(cell)
        return math.sqrt((c[0] - gxyz[0]) ** 2 + (c[1] - gxyz[1]) ** 2
                         + (c[2] - gxyz[2]) ** 2) / CELL_SIZE

    best = {start_cell: 0.0}
    parent = {start_cell: None}
    heap = [(h(start_cell), 0, start_cell)]
    counter = 1
    while heap:
        f, _, cell = heapq.heappop(heap)
        g = best[cell]
        if f > g + h(cell) + 1e-9:
            continue
        if cell == goal_cell:
            path = []
            while cell is not None:
                path.append(center(cell))
                cell = parent[cell]
            path.reverse()
            return [np.asarray(start, dtype=float)] + path[1:-1] \
                + [np.asarray(goal, dtype=float)]
        i, j, k = cell
        for di, dj, dk, step in _GRID_NEIGHBORS:
            nxt = (i + di, j + dj, k + dk)
            if nxt in blocked or abs(nxt[0]) > bound_xy \
                    or abs(nxt[1]) > bound_xy or not 0 <= nxt[2] <= k_max:
                continue
            ng = g + step
            if ng < best.get(nxt, math.inf) - 1e-12:
                best[nxt] = ng
                parent[nxt] = cell
                heapq.heappush(heap, (ng + h(nxt), counter, nxt))
                counter += 1
    return None


def _segment_free(store: StaticObstacleStore, shape: Box, a, b,
                  min_probability: float) -> bool:
    return all(p < min_probability
               for _, p in store.query_sweep(shape, np.asarray(a, dtype=float),
                                             np.asarray(b, dtype=float)))


def _shortcut(points, store, shape, min_probability):
    out = [points[0]]
    i = 0
    while i < len(points) - 1:
        j = len(points) - 1
        while j > i + 1 and not _segment_free(store, shape, points[i],
                                              points[j], min_probability):
            j -= 1
        out.append(points[j])
        i = j
    return out


def desired_trajectory(strategy: str, store: StaticObstacleStore,
                       robot_shape: Box, start, goal, cruise_speed: float,
                       min_probability: float) -> DesiredTrajectory:
    """Reference trajectory for one run, traversed at the cruise speed.

    ``with_prior`` plans a static-obstacle-avoiding shortest path on the
    belief map (grid A* plus shortcutting); ``without_prior`` connects start
    and goal directly. Both fall back to the straight line when no grid
    path exists.
    """
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    points = None
    if strategy == "with_prior" and store.cells:
        path = _grid_shortest_path(store, start, goal, min_probability)
        if path is not None:
            points = _shortcut(path, store, robot_shape, min_probability)
    if points is None:
        points = [start, goal]
    points = np.asarray(points)
    lengths = np.linalg.norm(np.diff(points, axis=0), axis=1)
    times = np.concatenate([[0.0], np.cumsum(lengths)]) / cruise_speed
    return DesiredTrajectory(points, times)


# collision helpers (scalar: run every 10 ms step)

def _robot_hits_static(store: StaticObstacleStore, shape: Box, p) -> bool:
    cs = store.cell_size
    lo_x = math.floor((p[0] + shape.min_corner[0]) / cs)
    hi_x = math.floor((p[0] + shape.max_corner[0]) / cs)
    lo_y = math.floor((p[1] + shape.min_corner[1]) / cs)
    hi_y = math.floor((p[1] + shape.max_corner[1]) / cs)
    lo_z = math.floor((p[2] + shape.min_corner[2]) / cs)
    hi_z = math.floor((p[2] + shape.max_corner[2]) / cs)
    cells = store.cells
    for i in range(lo_x, hi_x + 1):
        for j in range(lo_y, hi_y + 1):
            for k in range(lo_z, hi_z + 1):
                if (i, j, k) in cells:
                    return True
    return False


def _boxes_overlap(amin, amax, bmin, bmax) -> bool:
    return (amin[0] <= bmax[0] and bmin[0] <= amax[0]
            and amin[1] <= bmax[1] and bmin[1] <= amax[1]
            and amin[2] <= bmax[2] and bmin[2] <= amax[2])


def run_episode(config: RunConfig, dump_path: str | None = None) -> RunMetrics:
    """Simulate one navigation run and return its metrics."""
    config.validate()
    rngs = _streams(config.seed)

    truth = generate_forest(config.density, rngs["forest"])
    belief = StaticObstacleStore(truth.cell_size)
    belief.cells = dict(truth.cells)
    apply_static_mocks(belief, config.static_mocks, rngs["mocks"])

    robot_rng = rngs["robot"]
    sizes = robot_rng.uniform(0.2, 0.3, 3)
    robot_shape = Box(-sizes / 2.0, sizes / 2.0)
    angle = float(robot_rng.uniform(0.0, 2.0 * math.pi))
    start = np.array([START_CIRCLE_RADIUS * math.cos(angle),
                      START_CIRCLE_RADIUS * math.sin(angle), START_HEIGHT])
    goal = np.array([-start[0], -start[1], START_HEIGHT])
    replan_period = float(robot_rng.uniform(*config.replan_period_range))

    spec = RobotSpec(shape_at_origin=robot_shape, search_time_limit=None,
                     search_expansion_limit=DEFAULT_EXPANSION_LIMIT,
                     **config.spec_overrides)

    obstacle_rng = rngs["obstacles"]
    obstacles = []
    true_models = []
    for _ in range(config.num_dynamic):
        obstacle, model = random_obstacle(obstacle_rng, config.speed_range,
                                          config.repulsion_range)
        obstacles.append(obstacle)
        true_models.append(model)

    # the robot must never start in collision
    assert not _robot_hits_static(truth, robot_shape, start)
    for obstacle in obstacles:
        shape = obstacle.shape_at()
        assert not _boxes_overlap(start + robot_shape.min_corner,
                                  start + robot_shape.max_corner,
                                  shape.min_corner, shape.max_corner)

    cruise = spec.search_max_speed / 3.0
    desired = desired_trajectory(config.strategy, belief, robot_shape, start,
                                 goal, cruise, spec.min_obstacle_probability)

    cap = DEADLOCK_CAP_MULTIPLIER \
        * (float(np.linalg.norm(goal - start)) / cruise)

    noise_rng = rngs["noise"]
    cov = (np.asarray(config.sensing_noise_cov, dtype=float)
           if config.sensing_noise_cov is not None else None)
    noisy = cov is not None or config.shape_noise_std > 0.0
    histories = [HistoryBuffer() for _ in obstacles]
    sensed_position = [o.position.copy() for o in obstacles]
    sensed_shape = [o.shape_at_origin for o in obstacles]

    trajectory = None
    next_replan = 0.0
    planning_durations: list[float] = []
    fail_count = 0
    static_hit = False
    dynamic_hit = False
    reached = False
    navigation_duration = math.nan
    dump = open(dump_path, "w") if dump_path else None

    try:
        t = 0.0
        while t <= cap + 1e-9:
            if trajectory is not None:
                p_robot = trajectory.position(t)
                v_robot = trajectory.derivative(t, 1)
            else:
                p_robot = start
                v_robot = np.zeros(3)

            if t + 1e-9 >= next_replan:
                derivatives = [p_robot, v_robot]
                for order in range(2, spec.continuity_degree + 1):
                    derivatives.append(trajectory.derivative(t, order)
                                       if trajectory is not None
                                       else np.zeros(3))
                ego = EgoState(tuple(derivatives))
                planner_obstacles = []
                for k, obstacle in enumerate(obstacles):
                    models = (fit_all(histories[k])
                              if len(histories[k]) >= 2 else [])
                    planner_obstacles.append(DynamicObstacle(
                        sensed_position[k], sensed_shape[k], models,
                        decision_period=obstacle.decision_period))
                begin = time.perf_counter()
                outcome = plan(desired, belief, planner_obstacles, ego, t,
                               spec)
                planning_durations.append(time.perf_counter() - begin)
                if outcome.ok:
                    trajectory = outcome.trajectory
                    if dump is not None:
                        record = {
                            "t": round(t, 6),
                            "pieces": [{
                                "duration": piece.duration,
                                "control_points":
                                    piece.control_points.tolist(),
                            } for piece in trajectory.pieces],
                        }
                        dump.write(json.dumps(record) + "\n")
                else:
                    fail_count += 1
                next_replan = t + replan_period

            # advance ground truth by one step, then check collisions at
            # the new time
            for obstacle, model in zip(obstacles, true_models):
                step_obstacle(obstacle, model, p_robot, v_robot, SIM_STEP)
            t += SIM_STEP
            if trajectory is not None:
                p_robot = trajectory.position(t)
                v_robot = trajectory.derivative(t, 1)

            if not static_hit and truth.cells \
                    and _robot_hits_static(truth, robot_shape, p_robot):
                static_hit = True
            rmin = p_robot + robot_shape.min_corner
            rmax = p_robot + robot_shape.max_corner
            for k, obstacle in enumerate(obstacles):
                omin = obstacle.position + obstacle.shape_at_origin.min_corner
                omax = obstacle.position + obstacle.shape_at_origin.max_corner
                if not dynamic_hit and _boxes_overlap(rmin, rmax, omin, omax):
                    dynamic_hit = True
                if noisy:
                    pos, vel, shape = sense_dynamic(
                        obstacle, cov, config.shape_noise_std, noise_rng)
                else:
                    pos, vel = obstacle.position.copy(), \
                        obstacle.velocity.copy()
                    shape = obstacle.shape_at_origin
                sensed_position[k] = pos
                sensed_shape[k] = shape
                histories[k].push(pos, vel, p_robot, v_robot)

            if float(np.linalg.norm(p_robot - goal)) <= config.goal_tolerance:
                reached = True
                navigation_duration = t
                break
    finally:
        if dump is not None:
            dump.close()

    collision = static_hit or dynamic_hit
    return RunMetrics(
        success=reached and not collision,
        collision=collision,
        deadlock=not reached,
        static_collision=static_hit,
        dynamic_collision=dynamic_hit,
        navigation_duration=navigation_duration,
        planning_fail_count=fail_count,
        planning_total_count=len(planning_durations),
        planning_durations=planning_durations,
    )


# experiment runner

_CSV_FIELDS = ("config", "density", "num_dynamic", "strategy", "seed",
               "success", "collision", "deadlock", "static_collision",
               "dynamic_collision", "navigation_duration",
               "planning_fail_count", "planning_total_count")


def _format_duration(value: float) -> str:
    return "" if math.isnan(value) else f"{value:.6f}"


def _episode_task(args):
    index, config = args
    return index, config, run_episode(config)


def run_experiment(configs, num_runs: int, out_path: str,
                   workers: int = 1, timings_path: str | None = None):
    """Run every config num_runs times (seeds seed..seed+num_runs-1).

    Writes a CSV with one row per run plus one aggregate row per config.
    The CSV contains only deterministic fields; wall-clock planning
    durations go to ``timings_path`` (default: out_path + '.timings').
    Returns the per-config aggregate dictionaries.
    """
    tasks = []
    for c_index, config in enumerate(configs):
        config.validate()
        for run in range(num_runs):
            tasks.append((c_index, replace(config, seed=config.seed + run)))

    if workers > 1:
        import multiprocessing

        with multiprocessing.Pool(workers) as pool:
            results = pool.map(_episode_task, tasks)
    else:
        results = [_episode_task(task) for task in tasks]
    results.sort(key=lambda item: (item[0], item[1].seed))

    aggregates = []
    timing_rows = []
    with open(out_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(_CSV_FIELDS)
        for c_index, config in enumerate(configs):
            rows = [(cfg, m) for idx, cfg, m in results if idx == c_index]
            for cfg, m in rows:
                writer.writerow([
                    c_index, f"{config.density:g}", config.num_dynamic,
                    config.strategy, cfg.seed,
                    int(m.success), int(m.collision), int(m.deadlock),
                    int(m.static_collision), int(m.dynamic_collision),
                    _format_duration(m.navigation_duration),
                    m.planning_fail_count, m.planning_total_count,
                ])
                mean_ms = (1000.0 * float(np.mean(m.planning_durations))
                           if m.planning_durations else math.nan)
                timing_rows.append([c_index, cfg.seed,
                                    _format_duration(mean_ms)])
            n = len(rows)
            metrics = [m for _, m in rows]
            clean = [m.navigation_duration for m in metrics if m.success]
            total_plans = sum(m.planning_total_count for m in metrics)
            aggregate = {
                "config": c_index,
                "density": config.density,
                "num_dynamic": config.num_dynamic,
                "strategy": config.strategy,
                "runs": n,
                "success_rate": sum(m.success for m in metrics) / n,
                "collision_rate": sum(m.collision for m in metrics) / n,
                "deadlock_rate": sum(m.deadlock for m in metrics) / n,
                "static_collision_rate":
                    sum(m.static_collision for m in metrics) / n,
                "dynamic_collision_rate":
                    sum(m.dynamic_collision for m in metrics) / n,
                "mean_navigation_duration":
                    float(np.mean(clean)) if clean else math.nan,
                "planning_fail_rate":
                    (sum(m.planning_fail_count for m in metrics)
                     / total_plans) if total_plans else math.nan,
            }
            aggregates.append(aggregate)
            writer.writerow([
                c_index, f"{config.density:g}", config.num_dynamic,
                config.strategy, "aggregate",
                f"{aggregate['success_rate']:.6f}",
                f"{aggregate['collision_rate']:.6f}",
                f"{aggregate['deadlock_rate']:.6f}",
                f"{aggregate['static_collision_rate']:.6f}",
                f"{aggregate['dynamic_collision_rate']:.6f}",
                _format_duration(aggregate["mean_navigation_duration"]),
                f"{aggregate['planning_fail_rate']:.6f}"
                if total_plans else "",
                total_plans,
            ])

    if timings_path is None:
        timings_path = out_path + ".timings"
    with open(timings_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["config", "seed", "mean_planning_duration_ms"])
        writer.writerows(timing_rows)
    return aggregates
