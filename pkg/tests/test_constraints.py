import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from ikform import autodiff as ad
from ikform.constraints import (BoxObstacle, CollisionSphere, Scene, SupportPoints, all_triangle_slacks,
                                containment_margin, edge_slacks, hull_distance, in_hull, joint_centering_cost,
                                log_barrier, min_distance_residuals, sphere_box_sdf, sphere_centers,
                                sphere_sphere_distance, stability_equality_residuals, stability_margin,
                                triangle_slack)
from ikform.kinematics import PlanarChain, scaled_arm

coord = st.floats(-2.0, 2.0, allow_nan=False)
point = st.tuples(coord, coord)

UNIT_BOX = BoxObstacle([0.0, 0.0, 0.0], [1.0, 1.0, 1.0])


def test_sphere_box_sdf_outside_face():
    assert sphere_box_sdf(np.array([2.0, 0.0, 0.0]), 0.5, UNIT_BOX) == pytest.approx(0.5)


def test_sphere_box_sdf_inside():
    assert sphere_box_sdf(np.array([0.0, 0.0, 0.0]), 0.5, UNIT_BOX) == pytest.approx(-1.5)


def test_sphere_box_sdf_corner():
    # corner distance sqrt(3) from (2,2,2) to (1,1,1), minus radius 0.1
    assert sphere_box_sdf(np.array([2.0, 2.0, 2.0]), 0.1, UNIT_BOX) == pytest.approx(math.sqrt(3) - 0.1)


def test_sphere_box_sdf_gradient():
    c = ad.Dual.variables([2.0, 0.5, 0.0])
    assert_allclose(ad.partials(sphere_box_sdf(c, 0.1, UNIT_BOX), 3), [1.0, 0.0, 0.0])


def test_sphere_sphere_distance():
    assert sphere_sphere_distance(np.zeros(3), 0.5, np.array([3.0, 4.0, 0.0]), 1.0) == pytest.approx(3.5)


def test_box_validation():
    with pytest.raises(ValueError):
        BoxObstacle([0, 0, 0], [1.0, -1.0, 1.0])
    with pytest.raises(ValueError):
        CollisionSphere(0, [0, 0, 0], 0.0)


def test_min_distance_rows_and_pairs():
    ch = scaled_arm(0)
    spheres = [CollisionSphere(i, [0, 0, 0], 0.02) for i in (1, 2, 4)]
    boxes = [BoxObstacle([0.5, 0.5, 0.5], [0.1, 0.1, 0.1])]
    rows = min_distance_residuals(ch, np.zeros(7), spheres, boxes, 1e-3)
    # three sphere-box rows plus pairs (1,4) and (2,4)
    assert len(rows) == 5
    centers = sphere_centers(ch, np.zeros(7), spheres)
    expected = sphere_box_sdf(centers[0], 0.02, boxes[0]) - 1e-3
    assert rows[0] == pytest.approx(expected)


def test_sphere_centers_planar_chain():
    ch = PlanarChain(4)
    c = sphere_centers(ch, np.zeros(4), [CollisionSphere(3, [0, 0, 0], 0.1)])
    assert_allclose(c[0], [1.0, 0.0, 0.0], atol=1e-12)


def test_scene_dict_roundtrip():
    scene = Scene((CollisionSphere(2, [0, 0, 0.1], 0.05),), (UNIT_BOX,), 0.01)
    back = Scene.from_dict(scene.to_dict())
    assert back.to_dict() == scene.to_dict()


def test_joint_centering_cost_forms():
    q = np.array([1.0, 2.0])
    assert joint_centering_cost(q) == pytest.approx(5.0)
    assert joint_centering_cost(q, [2.0, 0.5]) == pytest.approx(4.0)
    assert joint_centering_cost(q, [[1.0, 1.0], [1.0, 1.0]], q_nom=[1.0, 1.0]) == pytest.approx(1.0)


def test_log_barrier_values():
    assert log_barrier(math.e, 2.0) == pytest.approx(-2.0)
    # clipped argument: -log(1e-6)
    assert log_barrier(-1.0, 1.0) == pytest.approx(6 * math.log(10))
    with pytest.raises(ValueError):
        log_barrier(1.0, 0.0)


def test_triangle_slack_incenter():
    # right isosceles triangle with legs 1: inradius (2 - sqrt2)/2
    v1, v2, v3 = [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]
    r = (2 - math.sqrt(2)) / 2
    assert triangle_slack([r, r], v1, v2, v3) == pytest.approx(r)
    assert triangle_slack([r, r], v1, v3, v2) < 0


def test_degenerate_triangle_rejected():
    with pytest.raises(ValueError):
        triangle_slack([0, 0], [0, 0], [1, 1], [2, 2])


def barycentric_inside(p, a, b, c):
    T = np.column_stack([np.subtract(b, a), np.subtract(c, a)])
    l1, l2 = np.linalg.solve(T, np.subtract(p, a))
    return min(l1, l2, 1 - l1 - l2)


@given(point, point, point, point)
@settings(max_examples=200, deadline=None)
def test_containment_margin_matches_barycentric(p, a, b, c):
    area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    assume(abs(area2) > 1e-3)
    m = containment_margin(p, a, b, c)
    lam = barycentric_inside(p, a, b, c)
    assume(abs(lam) > 1e-7)
    assert (m >= 0) == (lam >= 0)


@given(point, point, point, point)
@settings(max_examples=200, deadline=None)
def test_winding_negation(p, a, b, c):
    area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    assume(abs(area2) > 1e-3)
    s = edge_slacks(p, a, b, c)
    r = edge_slacks(p, b, a, c)
    # reversing the winding reverses every edge: s12 <-> -r21 and so on
    assert s[0] == pytest.approx(-r[0], abs=1e-12)
    assert s[1] == pytest.approx(-r[2], abs=1e-12)
    assert s[2] == pytest.approx(-r[1], abs=1e-12)


def square():
    return SupportPoints(np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]))


def test_stability_margin_signs():
    sq = square()
    # the centre lies on both diagonals, so every triangle puts it on an edge
    assert stability_margin([0.0, 0.0], sq, beta=None) == pytest.approx(0.0, abs=1e-15)
    assert stability_margin([0.3, 0.1], sq, beta=None) > 0
    assert stability_margin([2.0, 0.0], sq, beta=None) < 0
    assert stability_margin([0.3, 0.1], sq) > 0
    assert stability_margin([1.5, 0.0], sq) < 0


@given(point)
@settings(max_examples=100, deadline=None)
def test_smoothed_margin_bounded_by_hard_max(p):
    sq = square()
    hard = stability_margin(p, sq, beta=None)
    soft = stability_margin(p, sq, beta=200.0)
    n = len(all_triangle_slacks(p, sq))
    assert soft <= hard + 1e-12
    assert soft >= hard - math.log(n) / 200.0 - 1e-12


@given(point)
@settings(max_examples=100, deadline=None)
def test_hard_margin_sign_matches_hull_oracle(p):
    sq = square()
    d = hull_distance(p, sq.points)
    assume(abs(d) > 1e-9)
    assert (stability_margin(p, sq, beta=None) >= 0) == (d > 0)
    assert in_hull(p, sq.points) == (d > 0)


def test_equality_residuals_vanish_on_convex_combination():
    sq = square()
    lam = np.array([0.1, 0.2, 0.3, 0.4])
    p = lam @ sq.points
    assert_allclose(stability_equality_residuals(p, sq, lam), 0.0, atol=1e-15)
    with pytest.raises(ValueError):
        stability_equality_residuals(p, sq, lam[:3])


def test_support_needs_three_points():
    with pytest.raises(ValueError):
        SupportPoints(np.zeros((2, 2)))


def test_margin_gradient_matches_central_difference():
    sq = square()
    p = np.array([0.3, -0.2])
    _, J = ad.jacobian(lambda z: stability_margin(z, sq), p)
    fd = ad.central_difference(lambda z: stability_margin(z, sq), p)
    assert_allclose(J, fd, atol=1e-6)
