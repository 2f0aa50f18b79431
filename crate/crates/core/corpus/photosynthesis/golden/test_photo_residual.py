import numpy as np
from photo_residual import photo_residual

tol = 1e-6


def test_demand_limited_point():
    assert abs(photo_residual(30.0, 50.0) - (-1.41475042520789)) < tol


def test_compensation_point():
    # both limitation numerators vanish, leaving -rd minus the g0 supply term
    assert abs(photo_residual(4.275, 50.0) - (-2.9536146064643476)) < tol


def test_above_ambient():
    assert abs(photo_residual(60.0, 50.0) - 52.04924352767444) < tol


def test_elementwise():
    got = photo_residual(np.array([30.0, 60.0]), 50.0)
    assert np.allclose(got, [-1.41475042520789, 52.04924352767444], atol=tol)


def test_single_sign_change():
    ci = np.linspace(0.1, 80.0, 2001)
    f = photo_residual(ci, 50.0)
    assert np.count_nonzero(np.diff(np.sign(f)) != 0) == 1
