import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aris_empc.empc import (HorizonProblem, horizon_objective, penalized_objective, project_ball,
                            run_receding_horizon, solve_horizon)
from aris_empc.errors import InfeasibleError
from aris_empc.flight import State, baseline_constant_acceleration, check_constraints, evaluate_trajectory
from aris_empc.scenario import SolverSettings


@pytest.fixture(scope="module")
def small_run(small_config):
    return run_receding_horizon(small_config)


def _problem(config, horizon=2, remaining=None):
    return HorizonProblem(State.initial(config), remaining or config.num_steps, horizon, config, config.users())


@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=1, max_size=8),
       st.floats(0.1, 50.0))
def test_project_ball(rows, radius):
    a = np.array(rows)
    p = project_ball(a, radius)
    norms = np.hypot(p[:, 0], p[:, 1])
    assert np.all(norms <= radius * (1 + 1e-12))
    inside = np.hypot(a[:, 0], a[:, 1]) <= radius
    assert np.array_equal(p[inside], a[inside])
    # Projection keeps direction.
    out = ~inside
    assert np.allclose(p[out] * np.hypot(a[out, 0], a[out, 1])[:, None],
                       a[out] * radius, rtol=1e-12, atol=1e-9)
    assert np.allclose(project_ball(p, radius), p)


def test_loose_tolerance_returns_warm_start(small_config):
    problem = _problem(small_config)
    warm = np.array([[0.1, -0.2], [0.3, 0.0]])
    loose = SolverSettings(grad_tol=1e30, eps_pos=1e9, max_iters=50)
    a, log = solve_horizon(problem, loose, warm)
    assert len(log) == 1
    assert np.array_equal(a, warm)


def test_zero_iterations_returns_warm_start(small_config):
    problem = _problem(small_config)
    warm = np.array([[0.5, 0.5], [0.0, -1.0]])
    a, log = solve_horizon(problem, SolverSettings(max_iters=0), warm)
    assert len(log) == 0
    assert np.array_equal(a, warm)


def test_solution_improves_on_warm_start(small_config):
    problem = _problem(small_config)
    warm = np.zeros((2, 2))
    a, _ = solve_horizon(problem, small_config.solver, warm)
    assert penalized_objective(problem, a) >= penalized_objective(problem, warm)


def test_iteration_log_monotone(small_run):
    _, logs = small_run
    for log in logs:
        assert np.all(np.diff(log.best_objective) >= 0)
        outer = np.asarray(log.outer)
        pen = np.asarray(log.penalized)
        for r in np.unique(outer):
            seg = pen[outer == r]
            assert np.all(np.diff(seg) >= 0)


def test_small_run_feasible_and_better_than_baseline(small_config, small_run):
    traj, logs = small_run
    assert len(logs) == small_config.num_steps
    assert traj.terminal_error <= small_config.solver.eps_pos
    assert check_constraints(traj.velocities, traj.positions, traj.controls, small_config) == []
    base = evaluate_trajectory(baseline_constant_acceleration(small_config), small_config.users(), small_config)
    assert traj.ee > base.ee


def test_small_run_deterministic(small_config, small_run):
    traj, _ = small_run
    again, _ = run_receding_horizon(small_config)
    assert again.controls.tobytes() == traj.controls.tobytes()
    assert again.ee == traj.ee


def test_zero_iterations_replays_plan(small_config):
    plan = baseline_constant_acceleration(small_config)
    cfg = small_config.replace(solver=SolverSettings(max_iters=0))
    traj, logs = run_receding_horizon(cfg, initial_plan=plan)
    assert np.array_equal(traj.controls, plan)
    base = evaluate_trajectory(plan, cfg.users(), cfg)
    assert traj.ee == base.ee


def test_full_horizon_is_single_solve(small_config):
    cfg = small_config.replace(horizon=small_config.num_steps)
    traj, logs = run_receding_horizon(cfg)
    assert len(logs) == 1
    assert len(traj.controls) == cfg.num_steps
    assert traj.terminal_error <= cfg.solver.eps_pos


def test_unreachable_arrival_raises(small_config):
    # Two steps left with the target 400 m off the coasting line cannot be met at a_max = 10.
    cfg = small_config.replace(target_pos=(900.0, 680.0))
    problem = HorizonProblem(State.initial(cfg), 2, 2, cfg, cfg.users())
    with pytest.raises(InfeasibleError) as info:
        solve_horizon(problem, SolverSettings(max_iters=60))
    assert info.value.residuals["terminal"] > cfg.solver.eps_pos


def test_closed_loop_failure_reports_step(small_config):
    cfg = small_config.replace(a_max=0.5, solver=SolverSettings(max_iters=40))
    with pytest.raises(InfeasibleError) as info:
        run_receding_horizon(cfg)
    assert info.value.step is not None


def test_horizon_objective_positive(small_config):
    problem = _problem(small_config)
    assert horizon_objective(problem, np.zeros((2, 2))) > 0
