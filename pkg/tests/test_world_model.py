import numpy as np
import pytest

from probnav.geometry import Box, ConvexPolytope, intersects, sweep
from probnav.world_model import (
    BehaviorModel,
    ConstantVelocity,
    DynamicObstacle,
    GoalAttractive,
    Repulsive,
    Rotating,
    StaticObstacleStore,
    eval_behavior,
    eval_interaction,
    eval_movement,
    step_obstacle,
)


def test_goal_attractive_velocity():
    v = eval_movement(GoalAttractive([1.0, 0, 0], 2.0), np.zeros(3))
    np.testing.assert_allclose(v, [2, 0, 0])


def test_goal_attractive_speed_is_desired_speed():
    rng = np.random.default_rng(0)
    for _ in range(20):
        g = rng.uniform(-5, 5, 3)
        p = rng.uniform(-5, 5, 3)
        s = rng.uniform(0.1, 3)
        v = eval_movement(GoalAttractive(g, s), p)
        assert np.linalg.norm(v) == pytest.approx(s)


def test_goal_attractive_at_goal_is_zero():
    p = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(eval_movement(GoalAttractive(p, 2.0), p), 0.0)


def test_constant_velocity_everywhere():
    m = ConstantVelocity([0.0, 1.0, 0.0])
    np.testing.assert_allclose(eval_movement(m, np.zeros(3)), [0, 1, 0])
    np.testing.assert_allclose(eval_movement(m, np.array([9.0, -3, 2])), [0, 1, 0])


def test_rotating_velocity_perpendicular_to_radius():
    rng = np.random.default_rng(1)
    for _ in range(20):
        c = rng.uniform(-3, 3, 3)
        p = c + rng.uniform(-2, 2, 3)
        if np.linalg.norm(p - c) < 0.1:
            continue
        s = rng.uniform(0.1, 2)
        v = eval_movement(Rotating(c, s), p)
        assert np.linalg.norm(v) == pytest.approx(s)
        assert float(v @ (p - c)) == pytest.approx(0.0, abs=1e-9)


def test_rotating_vertical_radius_fallback():
    v = eval_movement(Rotating(np.zeros(3), 1.0), np.array([0.0, 0.0, 2.0]))
    assert np.linalg.norm(v) == pytest.approx(1.0)
    assert v @ np.array([0.0, 0.0, 1.0]) == pytest.approx(0.0)


def test_rotating_at_center_is_zero():
    np.testing.assert_allclose(eval_movement(Rotating(np.zeros(3), 1.0),
                                             np.zeros(3)), 0.0)


def test_interaction_zero_strength_is_identity():
    rng = np.random.default_rng(2)
    for _ in range(20):
        vd = rng.normal(size=3)
        out = eval_interaction(Repulsive(0.0), rng.normal(size=3), vd,
                               rng.normal(size=3), rng.normal(size=3))
        np.testing.assert_allclose(out, vd)


def test_interaction_unit_distance():
    out = eval_interaction(Repulsive(1.0), np.array([1.0, 0, 0]), np.zeros(3),
                           np.zeros(3), np.zeros(3))
    np.testing.assert_allclose(out, [1, 0, 0])


def test_interaction_inverse_square_falloff():
    out = eval_interaction(Repulsive(1.0), np.array([2.0, 0, 0]), np.zeros(3),
                           np.zeros(3), np.zeros(3))
    np.testing.assert_allclose(out, [0.25, 0, 0])


def test_interaction_coincident_positions():
    p = np.array([1.0, 1.0, 1.0])
    vd = np.array([0.5, 0, 0])
    out = eval_interaction(Repulsive(3.0), p, vd, p, np.zeros(3))
    np.testing.assert_allclose(out, vd)


def _obstacle(model_pairs, position=(0, 0, 0), period=0.2):
    shape = Box([-0.5, -0.5, -0.5], [0.5, 0.5, 0.5])
    return DynamicObstacle(np.array(position, dtype=float), shape,
                           model_pairs, decision_period=period)


CONST_X = BehaviorModel(ConstantVelocity([1.0, 0, 0]), Repulsive(0.0))


def test_step_constant_velocity():
    obs = _obstacle([(CONST_X, 1.0)])
    step_obstacle(obs, CONST_X, np.zeros(3), np.zeros(3), 0.5)
    np.testing.assert_allclose(obs.position, [0.5, 0, 0])


def test_velocity_held_between_decisions():
    model = BehaviorModel(GoalAttractive([10.0, 0, 0], 1.0), Repulsive(0.0))
    obs = _obstacle([(model, 1.0)], period=0.3)
    step_obstacle(obs, model, np.zeros(3), np.zeros(3), 0.1)
    v_first = obs.velocity.copy()
    # move the ego right next to the obstacle; held velocity must not react
    step_obstacle(obs, model, obs.position + 0.01, np.zeros(3), 0.1)
    np.testing.assert_allclose(obs.velocity, v_first)


def test_goal_attractive_stays_on_line_without_repulsion():
    model = BehaviorModel(GoalAttractive([5.0, 0, 0], 1.0), Repulsive(0.0))
    obs = _obstacle([(model, 1.0)], period=0.1)
    for _ in range(50):
        step_obstacle(obs, model, np.array([100.0, 0, 0]), np.zeros(3), 0.01)
    assert obs.position[0] == pytest.approx(0.5, abs=1e-9)
    assert abs(obs.position[1]) < 1e-12 and abs(obs.position[2]) < 1e-12


def test_repulsion_keeps_obstacle_farther_from_ego():
    base = BehaviorModel(GoalAttractive([10.0, 0, 0], 1.0), Repulsive(0.0))
    repel = BehaviorModel(GoalAttractive([10.0, 0, 0], 1.0), Repulsive(2.0))
    ego = np.array([2.0, 0.0, 0.0])
    a = _obstacle([(base, 1.0)], period=0.05)
    b = _obstacle([(repel, 1.0)], period=0.05)
    for _ in range(40):
        step_obstacle(a, base, ego, np.zeros(3), 0.01)
        step_obstacle(b, repel, ego, np.zeros(3), 0.01)
    assert np.linalg.norm(b.position - ego) >= np.linalg.norm(a.position - ego)


def test_rotating_distance_drift_bound():
    c = np.array([1.0, 1.0, 0.0])
    model = BehaviorModel(Rotating(c, 1.0), Repulsive(0.0))
    obs = _obstacle([(model, 1.0)], position=(2.0, 1.0, 0.0), period=0.01)
    dt = 0.01
    for _ in range(200):
        r_before = np.linalg.norm(obs.position - c)
        step_obstacle(obs, model, np.array([50.0, 0, 0]), np.zeros(3), dt)
        r_after = np.linalg.norm(obs.position - c)
        assert abs(r_after - r_before) <= 1.0 ** 2 * dt ** 2 / r_before + 1e-12


def test_model_probability_mass_validated():
    with pytest.raises(ValueError):
        _obstacle([(CONST_X, 0.7), (CONST_X, 0.6)])


def test_empty_store_query():
    store = StaticObstacleStore(0.5)
    region = ConvexPolytope(Box(np.zeros(3), np.ones(3)).corners())
    assert store.query_region(region) == []


def test_single_cell_query():
    store = StaticObstacleStore(0.5)
    store.set_cell((0, 0, 0), 0.9)
    region = ConvexPolytope(Box(np.zeros(3), 0.5 * np.ones(3)).corners())
    result = store.query_region(region)
    assert len(result) == 1
    box, p = result[0]
    assert p == 0.9
    np.testing.assert_allclose(box.min_corner, 0.0)
    np.testing.assert_allclose(box.max_corner, 0.5)


def test_query_region_matches_full_scan():
    rng = np.random.default_rng(5)
    store = StaticObstacleStore(0.5)
    for _ in range(60):
        idx = tuple(int(i) for i in rng.integers(-6, 6, 3))
        store.set_cell(idx, float(rng.uniform(0.1, 1.0)))
    for _ in range(15):
        a = rng.uniform(-3, 3, 3)
        b = rng.uniform(-3, 3, 3)
        region = sweep(Box([-0.3] * 3, [0.3] * 3), a, b)
        got = {tuple(store.cell_index(box.center)) for box, _ in
               store.query_region(region)}
        expected = set()
        for idx in store.cells:
            cell = ConvexPolytope(store.cell_box(idx).corners())
            if intersects(region, cell):
                expected.add(idx)
        assert got == expected


def test_query_sweep_matches_query_region():
    rng = np.random.default_rng(8)
    store = StaticObstacleStore(0.5)
    for _ in range(80):
        idx = tuple(int(i) for i in rng.integers(-6, 6, 3))
        store.set_cell(idx, float(rng.uniform(0.1, 1.0)))
    robot = Box([-0.25, -0.2, -0.3], [0.25, 0.2, 0.3])
    mismatches = 0
    for _ in range(30):
        a = rng.uniform(-3, 3, 3)
        b = rng.uniform(-3, 3, 3)
        got = {idx for idx, _ in store.query_sweep(robot, a, b)}
        expected = {tuple(store.cell_index(box.center)) for box, _ in
                    store.query_region(sweep(robot, a, b))}
        if got != expected:
            mismatches += 1
    # grazing contacts may differ within solver tolerance of the LP oracle
    assert mismatches <= 1


def test_probability_bounds_enforced():
    store = StaticObstacleStore()
    with pytest.raises(ValueError):
        store.set_cell((0, 0, 0), 0.0)
    with pytest.raises(ValueError):
        store.set_cell((0, 0, 0), 1.5)
