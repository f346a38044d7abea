import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from ikform import autodiff as ad
from ikform.analytic_ik import (Branch, SingularConfigurationError, SRSArm, all_branches, arccos_probes,
                                ik_map_for, planar3r_ik, probe_reachability, srs7_ik)
from ikform.geometry import Pose2, Pose3, pose_distance
from ikform.kinematics import PlanarChain, forward_kinematics, planar_fk, scaled_arm


def test_branch_parse_and_enumeration():
    assert str(Branch.parse("+-+")) == "+-+"
    assert len(all_branches(3)) == 8
    assert len(set(map(str, all_branches(3)))) == 8
    with pytest.raises(ValueError):
        Branch((0, 1))


def test_arccos_probes_pair():
    assert_allclose(arccos_probes(0.25), [0.75, 1.25])


def test_planar3r_closed_form():
    # straight arm along x: wrist at 2l, middle joint zero
    res = planar3r_ik(Pose2(0, 0, 0), Pose2(0.3, 0.0, 0.0), 0.1, Branch((1,)))
    assert_allclose(res.q_value, 0.0, atol=1e-5)
    assert res.probe_values[0] == pytest.approx(0.0, abs=1e-12)


def test_planar3r_right_angle():
    # wrist at (l, l): |w|^2 = 2 l^2, probe = 1 - 2/4
    l = 0.5
    res = planar3r_ik(Pose2(0, 0, 0), Pose2(l, 2 * l, math.pi / 2), l, Branch((1,)))
    assert res.probe_values[0] == pytest.approx(0.5)
    assert abs(res.q_value[1]) == pytest.approx(math.pi / 2)
    assert not res.clipped


def test_planar_unreachable_is_clipped():
    ch = PlanarChain(4)
    ik = ik_map_for(ch)
    res = ik.solve(Pose2(2.0, 0.0, 0.0), np.array([0.0]), Branch((1,)))
    assert res.clipped
    assert res.probe_values[0] < 0


@pytest.mark.parametrize("n", [3, 4, 6, 10])
def test_planar_match_roundtrip(n, rng):
    ik = ik_map_for(PlanarChain(n))
    done = 0
    while done < 50:
        q = rng.uniform(-math.pi, math.pi, n)
        try:
            pose, psi, branch = ik.match(q)
        except SingularConfigurationError:
            continue
        out = ik.solve(pose, psi, branch).q_value
        assert np.max(np.abs(ad.wrap_angle(out - q))) < 1e-8
        done += 1


@pytest.mark.parametrize("n", [0, 2, 4])
def test_scaled_arm_match_roundtrip(n, rng):
    ik = ik_map_for(scaled_arm(n))
    done = 0
    while done < 30:
        q = rng.uniform(-math.pi, math.pi, n + 7)
        try:
            pose, psi, branch = ik.match(q)
        except SingularConfigurationError:
            continue
        out = ik.solve(pose, psi, branch).q_value
        assert np.max(np.abs(ad.wrap_angle(out - q))) < 1e-8
        done += 1


@given(st.floats(0.0, 2 * math.pi), st.sampled_from([str(b) for b in all_branches(3)]))
@settings(max_examples=40, deadline=None)
def test_self_motion_keeps_pose(psi, branch):
    ch = scaled_arm(0)
    target = forward_kinematics(ch, np.array([0.4, 0.7, -0.2, 1.1, 0.3, -0.6, 0.9])).numeric()
    res = srs7_ik(ch.base, target, psi, Branch.parse(branch), SRSArm.from_chain(ch))
    if np.min(res.probe_values) >= 1e-9:
        assert pose_distance(forward_kinematics(ch, res.q_value), target) < 1e-9


def test_srs_unreachable_target_clips():
    ch = scaled_arm(0)
    target = Pose3(np.array([0.0, 0.0, 3.0]), np.eye(3))
    res = srs7_ik(ch.base, target, 0.0, Branch((1, 1, 1)), SRSArm.from_chain(ch))
    assert res.clipped
    assert res.probe_values[0] < 0


def test_srs_arm_rejects_non_srs_chain():
    with pytest.raises(ValueError):
        SRSArm.from_chain(PlanarChain(7).to_chain())


def test_ik_map_derivative_matches_central_difference():
    ik = ik_map_for(scaled_arm(2))
    q0 = np.array([0.3, -0.5, 0.4, 0.8, -0.3, 1.2, 0.5, -0.7, 0.2])
    pose, psi, branch = ik.match(q0)
    x0 = np.concatenate([ik.pose_to_vars(pose), psi])

    def q_of(x):
        return ik.solve(ik.pose_from_vars(x[:6]), x[6:], branch).q

    _, J = ad.jacobian(q_of, x0)
    fd = ad.central_difference(lambda x: ad.value(q_of(x)), x0)
    assert_allclose(J, fd, atol=1e-6)


def test_probe_reachability_matches_solve():
    ik = ik_map_for(PlanarChain(5))
    pose = Pose2(0.4, 0.1, 0.3)
    psi = np.array([0.2, -0.1])
    assert_allclose(probe_reachability(ik, pose, psi, Branch((1,))), ik.solve(pose, psi, Branch((1,))).probe_values)


def test_planar_pose_vars_wrap_heading():
    ik = ik_map_for(PlanarChain(4))
    v = ik.pose_to_vars(Pose2(0.1, 0.2, 3 * math.pi))
    assert -math.pi < v[2] <= math.pi
    q = np.array([0.5, 1.0, 2.0, 3.0])
    pose, psi, branch = ik.match(q)
    assert_allclose(planar_fk(ik.chain, q).x, pose.x)
