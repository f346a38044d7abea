import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ikform.analytic_ik import Branch, ik_map_for
from ikform.constraints import BoxObstacle, CollisionSphere, Scene
from ikform.formulation import (PROBE_MARGIN, Constraint, CostSpec, IKProblem, NLProgram, build_new, build_old,
                                load_problem, match_initial_guess, new_initial_guess, problem_from_dict)
from ikform.geometry import Pose2, Pose3
from ikform.kinematics import PlanarChain, forward_kinematics, planar_fk, scaled_arm

Q_SRS = np.array([0.3, -0.8, 0.2, 1.2, -0.4, 0.9, 0.1])


def srs_problem(**kw):
    ch = scaled_arm(0)
    return IKProblem(ch, forward_kinematics(ch, Q_SRS).numeric(), **kw)


def test_old_program_zero_residual_at_generating_configuration():
    prog = build_old(srs_problem(cost=CostSpec()))
    ev = prog.evaluate(Q_SRS)
    assert prog.violation(ev.c) < 1e-12
    assert ev.f == pytest.approx(Q_SRS @ Q_SRS)
    assert prog.row_names[:3] == ["position[0]", "position[1]", "position[2]"]
    assert not prog.linear.any()


def test_new_program_layout_and_linear_rows():
    pr = srs_problem(cost=CostSpec())
    ik = ik_map_for(pr.chain)
    x0, branch = new_initial_guess(Q_SRS, ik)
    prog = build_new(pr, branch)
    assert prog.num_vars == 7
    assert prog.var_names[:6] == ["px", "py", "pz", "roll", "pitch", "yaw"]
    assert prog.linear[:6].all() and not prog.linear[6:].any()
    assert_allclose(prog.to_joints(x0), Q_SRS, atol=1e-10)
    ev = prog.evaluate(x0)
    assert prog.violation(ev.c) < 1e-12
    # linear rows have a constant identity Jacobian block
    assert_allclose(ev.jac[:6, :6], np.eye(6))
    ev2 = prog.evaluate(x0 + 0.01)
    assert_allclose(ev2.jac[:6], ev.jac[:6])


def test_new_program_probe_rows_have_margin():
    pr = srs_problem()
    prog = build_new(pr, Branch((1, 1, 1)))
    probe_rows = [i for i, n in enumerate(prog.row_names) if n.startswith("reachability")]
    assert len(probe_rows) == 6
    assert_allclose(prog.lower[probe_rows], PROBE_MARGIN)
    assert prog.feasibility_only


def test_prefix_joints_keep_limits_as_bounds():
    ch = scaled_arm(4)
    pr = IKProblem(ch, forward_kinematics(ch, np.zeros(11)).numeric())
    prog = build_new(pr, Branch((1, 1, 1)))
    assert_allclose(prog.lb[6:10], -math.pi)
    assert_allclose(prog.ub[6:10], math.pi)
    assert np.isinf(prog.lb[10])


def test_target_modes():
    ch = PlanarChain(5)
    target = Pose2(0.3, 0.2, 0.1)
    pos = build_new(IKProblem(ch, target, target_mode="position-only"), Branch((1,)))
    assert [c.name for c in pos.constraints][0] == "position" and pos.constraints[0].size == 2
    box = IKProblem(ch, target, target_mode="box-relaxed", p_lb=[0.2, 0.1], p_ub=[0.4, 0.3])
    prog = build_new(box, Branch((1,)))
    assert [c.name for c in prog.constraints][:2] == ["position_box", "orientation"]
    old = build_old(box)
    assert "position_box" in [c.name for c in old.constraints]


def test_problem_validation():
    with pytest.raises(ValueError):
        IKProblem(PlanarChain(4), Pose3.identity())
    with pytest.raises(ValueError):
        IKProblem(PlanarChain(4), Pose2(0, 0, 0), target_mode="box-relaxed")
    with pytest.raises(ValueError):
        IKProblem(PlanarChain(4), Pose2(0, 0, 0), target_mode="sideways")
    with pytest.raises(ValueError):
        build_new(IKProblem(PlanarChain(4), Pose2(0, 0, 0)), Branch((1, 1, 1)))


def test_collision_and_extra_rows_included():
    scene = Scene((CollisionSphere(3, [0, 0, 0], 0.05),), (BoxObstacle([0.5, 0.5, 0.5], [0.1, 0.1, 0.1]),))
    pr = srs_problem(scene=scene, extra_inequalities=[lambda q: q[:1] - 3.0], extra_equalities=[lambda q: q[1:2] * 0.0])
    for prog in (build_old(pr), build_new(pr, Branch((1, 1, 1)))):
        names = [c.name for c in prog.constraints]
        assert {"collision", "g0", "h0"} <= set(names)


def test_evaluation_failure_becomes_nan():
    def prepare(x):
        raise ZeroDivisionError

    prog = NLProgram(2, -1, 1, lambda ctx: 0.0, [Constraint("c", lambda ctx: ctx, np.zeros(2), np.zeros(2))], prepare)
    ev = prog.evaluate(np.zeros(2))
    assert not ev.finite
    assert math.isinf(prog.violation(ev.c))


def test_match_initial_guess_planar():
    ik = ik_map_for(PlanarChain(6))
    q0 = np.array([0.2, -0.4, 0.6, 0.9, -1.1, 0.3])
    pose, psi, branch = match_initial_guess(q0, ik)
    assert_allclose(psi, q0[:3])
    assert_allclose(ik.solve(pose, psi, branch).q_value, q0, atol=1e-10)


def test_problem_json_with_file_references(tmp_path):
    (tmp_path / "arm.json").write_text(json.dumps({"type": "scaled_arm", "n": 2}))
    (tmp_path / "scene.json").write_text(json.dumps({"spheres": [], "boxes": []}))
    spec = {"chain": "arm.json", "scene": "scene.json", "target": {"position": [0.1, 0.2, 0.5], "rpy": [0, 0, 0]},
            "cost": {"q_nom": [0.0] * 9}}
    (tmp_path / "p.json").write_text(json.dumps(spec))
    pr = load_problem(tmp_path / "p.json")
    assert pr.n_joints == 9 and pr.cost is not None and pr.scene is not None
    pr2 = problem_from_dict({"chain": {"type": "planar", "n": 4}, "target": {"x": 0.1, "y": 0, "theta": 0},
                             "cost": None})
    assert pr2.cost is None and pr2.planar


def test_planar_target_heading_is_wrapped():
    pr = IKProblem(PlanarChain(4), Pose2(0.1, 0.1, 2 * math.pi + 0.5))
    assert pr.target_vector()[2] == pytest.approx(0.5)
    q = np.array([0.4, 0.3, 0.2, 2 * math.pi - 0.4])
    pr = IKProblem(PlanarChain(4), planar_fk(PlanarChain(4), q))
    assert build_old(pr).max_violation(q) < 1e-12
