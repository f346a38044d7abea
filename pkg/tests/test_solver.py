import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ikform import autodiff as ad
from ikform.analytic_ik import SingularConfigurationError, ik_map_for
from ikform.formulation import Constraint, CostSpec, IKProblem, NLProgram, build_new, build_old, new_initial_guess
from ikform.geometry import Pose2
from ikform.kinematics import PlanarChain, planar_fk
from ikform.solver import STATUSES, SolverOptions, check_gradients, solve


def program(n, cost, rows=(), lb=-10.0, ub=10.0):
    return NLProgram(n, lb, ub, cost, list(rows))


def test_bound_active_inequality():
    prog = program(1, lambda x: (x[0] - 1.0) ** 2, [Constraint("g", lambda x: x, np.array([2.0]), np.array([np.inf]))])
    res = solve(prog, np.array([5.0]))
    assert res.status == "solved"
    assert res.x_star[0] == pytest.approx(2.0, abs=1e-7)
    assert res.cost == pytest.approx(1.0, abs=1e-6)


def test_symmetric_projection():
    prog = program(2, lambda x: ad.dot(x, x), [Constraint("h", lambda x: x[:1] + x[1:], np.ones(1), np.ones(1), True)])
    res = solve(prog, np.array([3.0, -1.0]))
    assert res.status == "solved"
    assert_allclose(res.x_star, [0.5, 0.5], atol=1e-6)
    assert res.cost == pytest.approx(0.5, abs=1e-6)
    assert res.max_constraint_violation <= 1e-8


def test_nonlinear_equality_circle():
    # closest point of the unit circle to (2, 0)
    prog = program(2, lambda x: (x[0] - 2.0) ** 2 + x[1] ** 2,
                   [Constraint("h", lambda x: ad.stack([x[0] * x[0] + x[1] * x[1]]), np.ones(1), np.ones(1))])
    res = solve(prog, np.array([0.0, 0.5]))
    assert res.status == "solved"
    assert_allclose(res.x_star, [1.0, 0.0], atol=1e-5)


def test_box_bounds_respected():
    prog = program(2, lambda x: (x[0] + 3.0) ** 2 + (x[1] - 3.0) ** 2, lb=-1.0, ub=1.0)
    res = solve(prog, np.zeros(2))
    assert_allclose(res.x_star, [-1.0, 1.0])
    assert res.status == "solved"


def test_infeasible_program_is_not_solved():
    rows = [Constraint("lo", lambda x: x, np.array([2.0]), np.array([np.inf])),
            Constraint("hi", lambda x: x, np.array([-np.inf]), np.array([1.0]))]
    res = solve(program(1, lambda x: 0.0 * x[0], rows), np.array([0.0]))
    assert res.status == "infeasible-stalled"
    assert res.max_constraint_violation > 0.1


def test_nan_at_start_is_evaluation_failure():
    prog = program(1, lambda x: ad.sqrt(x[0] - 5.0))
    res = solve(prog, np.array([0.0]))
    assert res.status == "evaluation-failure"


def test_nan_region_is_avoided_by_line_search():
    # log is undefined left of 0: the minimizer must stay right of it
    prog = program(1, lambda x: x[0] - ad.log(x[0]) * 0.5 if ad.value(x[0]) > 0 else x[0] * math.nan, lb=-5, ub=5)
    res = solve(prog, np.array([3.0]))
    assert res.status == "solved"
    assert res.x_star[0] == pytest.approx(0.5, abs=1e-5)


def test_determinism():
    ch = PlanarChain(6)
    pr = IKProblem(ch, Pose2(0.3, 0.2, 0.4), cost=CostSpec())
    prog = build_old(pr)
    x0 = np.linspace(-1, 1, 6)
    a, b = solve(prog, x0), solve(prog, x0)
    assert a.x_star.tobytes() == b.x_star.tobytes()
    assert a.inner_iterations_total == b.inner_iterations_total


def test_timeout_status():
    ch = PlanarChain(16)
    pr = IKProblem(ch, Pose2(0.3, 0.2, 0.4), cost=CostSpec())
    res = solve(build_old(pr), np.full(16, 2.0), SolverOptions(timeout=1e-4))
    assert res.status == "timeout"
    assert res.status in STATUSES


def test_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(feasibility_tol=0.0)
    with pytest.raises(ValueError):
        SolverOptions(max_outer=0)
    with pytest.raises(ValueError):
        SolverOptions(timeout=-1.0)
    with pytest.raises(ValueError):
        solve(program(2, lambda x: ad.dot(x, x)), np.array([1.0, np.nan]))


def test_check_gradients_quadratic():
    prog = program(3, lambda x: ad.dot(x, x) * 0.5 + x[0] * x[1],
                   [Constraint("c", lambda x: x * x, np.zeros(3), np.ones(3))])
    assert check_gradients(prog, np.array([0.3, -0.7, 1.1])) < 1e-8


def planar_trials(n, count, seed):
    ch = PlanarChain(n)
    ik = ik_map_for(ch)
    rng = np.random.default_rng(seed)
    for _ in range(count):
        q_t = rng.uniform(-math.pi, math.pi, n)
        pr = IKProblem(ch, planar_fk(ch, q_t), cost=CostSpec())
        while True:
            q0 = rng.uniform(-2 * math.pi, 2 * math.pi, n)
            try:
                x0, branch = new_initial_guess(q0, ik)
                break
            except SingularConfigurationError:
                continue
        yield pr, q0, x0, branch


def test_planar_old_formulation_success_rate():
    solved = 0
    for pr, q0, _, _ in planar_trials(4, 100, 11):
        res = solve(build_old(pr), q0)
        p = planar_fk(pr.chain, res.x_star)
        err = max(abs(p.x - pr.target.x), abs(p.y - pr.target.y),
                  abs(math.remainder(p.theta - pr.target.theta, 2 * math.pi)))
        solved += res.status == "solved" and err <= 1e-8
    assert solved >= 90


def test_solved_new_formulation_linear_rows_tight():
    for pr, _, x0, branch in planar_trials(5, 10, 3):
        prog = build_new(pr, branch)
        res = solve(prog, x0)
        if res.status == "solved":
            ev = prog.evaluate(res.x_star, derivatives=False)
            assert prog.violation(ev.c, prog.linear) <= 1e-10
