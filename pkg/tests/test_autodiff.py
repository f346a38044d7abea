import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from ikform import autodiff as ad

finite = st.floats(-3.0, 3.0, allow_nan=False)


def test_variables_seed_identity():
    x = ad.Dual.variables([1.0, 2.0, 3.0])
    assert_allclose(ad.partials(x, 3), np.eye(3))


def test_product_rule():
    val, J = ad.jacobian(lambda x: x[0] * x[1] + ad.sin(x[0]), [2.0, 5.0])
    assert val == pytest.approx(10.0 + math.sin(2.0))
    assert_allclose(J, [5.0 + math.cos(2.0), 2.0])


@given(finite, finite)
@settings(max_examples=50, deadline=None)
def test_atan2_matches_central_difference(y, x):
    # skip the origin and the branch cut on the negative x axis
    if math.hypot(x, y) < 1e-2 or (x < 0 and abs(y) < 1e-3):
        return
    f = lambda v: ad.atan2(v[0], v[1])
    _, J = ad.jacobian(f, [y, x])
    fd = ad.central_difference(lambda v: np.arctan2(v[0], v[1]), np.array([y, x]))
    assert_allclose(J, fd, atol=1e-6)


@given(st.lists(finite, min_size=3, max_size=3))
@settings(max_examples=50, deadline=None)
def test_norm_exp_chain(v):
    f = lambda x: ad.exp(ad.norm(x) * 0.5)
    _, J = ad.jacobian(f, v)
    fd = ad.central_difference(lambda x: np.exp(0.5 * np.linalg.norm(x)), np.array(v))
    if np.linalg.norm(v) > 1e-3:
        assert_allclose(J, fd, rtol=1e-6, atol=1e-7)


def test_clipped_arccos_never_fails_and_has_zero_slope_outside():
    out = ad.clipped_arccos(ad.Dual.variables([1.5]))
    assert np.isfinite(ad.value(out)).all()
    assert_allclose(ad.partials(out, 1), 0.0)
    inside = ad.clipped_arccos(ad.Dual.variables([0.5]))
    assert_allclose(ad.partials(inside, 1), [[-1 / math.sqrt(0.75)]])


def test_clipped_arccos_rejects_bad_eps():
    with pytest.raises(ValueError):
        ad.clipped_arccos(0.2, eps=0.0)


def test_safe_log_clips_argument():
    assert ad.safe_log(-1.0) == pytest.approx(math.log(ad.LOG_EPS))
    d = ad.safe_log(ad.Dual.variables([-1.0]))
    assert_allclose(ad.partials(d, 1), 0.0)


def test_wrap_angle_range():
    x = np.linspace(-20, 20, 401)
    w = ad.wrap_angle(x)
    assert np.all(w > -math.pi - 1e-15) and np.all(w <= math.pi + 1e-15)
    assert_allclose(np.sin(w), np.sin(x), atol=1e-12)


def test_stack_concatenate_keep_derivatives():
    x = ad.Dual.variables([1.0, 2.0])
    out = ad.concatenate([ad.stack([x[0], x[1] * 2.0]), x * x])
    assert_allclose(ad.partials(out, 2), [[1, 0], [0, 2], [2, 0], [0, 4]])


def test_matmul_against_numpy():
    A = np.arange(6.0).reshape(2, 3)
    x = ad.Dual.variables([1.0, -1.0, 0.5])
    out = ad.matmul(A, x)
    assert_allclose(ad.value(out), A @ [1.0, -1.0, 0.5])
    assert_allclose(ad.partials(out, 3), A)


def test_amax_picks_derivative_of_winner():
    x = ad.Dual.variables([1.0, 3.0, 2.0])
    assert_allclose(ad.partials(ad.amax(x), 3), [0.0, 1.0, 0.0])
