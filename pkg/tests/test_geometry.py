import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from commloc.geometry import (
    PlanarVec,
    RelativePose,
    from_polar,
    rotate2d,
    rotate2d_batch,
    to_polar,
    wrap_angle,
    wrap_angles,
)

finite_angles = st.floats(-1e3, 1e3, allow_nan=False)


@pytest.mark.parametrize(
    "p, z, rho, beta",
    [
        ((1, 0), 0, 1.0, 0.0),
        ((0, 1), 0, 1.0, math.pi / 2),
        ((1, 1), 1, 1.7320508075688772, math.pi / 4),
        ((0, 0), 0, 0.0, 0.0),
        ((-1, 0), 0, 1.0, math.pi),
    ],
)
def test_to_polar(p, z, rho, beta):
    r, b = to_polar(PlanarVec(*p), z)
    assert r == pytest.approx(rho, abs=1e-12)
    assert b == pytest.approx(beta, abs=1e-12)


@pytest.mark.parametrize(
    "v, angle, expected",
    [
        ((1, 0), 0.0, (1, 0)),
        ((1, 0), math.pi / 2, (0, 1)),
        ((0.5, 0), math.pi / 4, (0.3535534, 0.3535534)),
    ],
)
def test_rotate2d(v, angle, expected):
    out = rotate2d(v, angle)
    assert out.x == pytest.approx(expected[0], abs=1e-7)
    assert out.y == pytest.approx(expected[1], abs=1e-7)


@pytest.mark.parametrize("a, expected", [(0.0, 0.0), (3 * math.pi, math.pi), (-3.5 * math.pi, 0.5 * math.pi), (-math.pi, math.pi)])
def test_wrap_angle(a, expected):
    assert wrap_angle(a) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
def test_wrap_angle_rejects_non_finite(bad):
    with pytest.raises(ValueError):
        wrap_angle(bad)


@given(finite_angles)
def test_wrap_angle_range_and_idempotent(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert wrap_angle(w) == w
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


@given(st.floats(1e-6, 100.0), st.floats(-math.pi, math.pi))
def test_polar_round_trip(rho, beta):
    if beta == -math.pi:
        beta = math.pi
    r, b = to_polar(from_polar(rho, beta))
    assert r == pytest.approx(rho, rel=1e-12, abs=1e-12)
    assert abs(wrap_angle(b - beta)) < 1e-12


@given(st.floats(-50, 50), st.floats(-50, 50), finite_angles)
def test_rotation_inverse(x, y, a):
    back = rotate2d(rotate2d((x, y), a), -a)
    assert back.x == pytest.approx(x, abs=1e-12 * max(1.0, abs(x) + abs(y)))
    assert back.y == pytest.approx(y, abs=1e-12 * max(1.0, abs(x) + abs(y)))


def test_rotation_preserves_norm(rng):
    v = rng.normal(size=(200, 2))
    a = rng.uniform(-10, 10, size=200)
    out = rotate2d_batch(v, a)
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), np.linalg.norm(v, axis=1), rtol=1e-12)


def test_batch_matches_scalar(rng):
    a = rng.uniform(-20, 20, size=500)
    np.testing.assert_allclose(wrap_angles(a), [wrap_angle(v) for v in a], atol=1e-12)
    v = rng.normal(size=(50, 2))
    np.testing.assert_allclose(rotate2d_batch(v, a[:50]), [rotate2d(p, t) for p, t in zip(v, a[:50])], atol=1e-12)


def test_relative_pose_normalizes_and_validates():
    p = RelativePose(rho=1.0, beta=3 * math.pi, z_rel=0.0, psi_rel=-3.5 * math.pi)
    assert p.beta == pytest.approx(math.pi)
    assert p.psi_rel == pytest.approx(0.5 * math.pi)
    with pytest.raises(ValueError):
        RelativePose(rho=-0.1, beta=0, z_rel=0, psi_rel=0)
