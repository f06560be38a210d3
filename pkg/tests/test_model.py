import math

import numpy as np
import pytest

from oracles import pendulum_rhs, rk4
from pslip.model import (
    FLAT,
    ComState,
    ContactPoint,
    PendulumParams,
    PreSlopeViolation,
    Side,
    SingularTransition,
    SlopeGradient,
    bisect_crossing,
    com_flow,
    delta_z_dot,
    galip_velocity,
    guard_check,
    guard_value,
    reset_map,
)

P = PendulumParams()
ORIGIN = ContactPoint(0.0, 0.0, 0.0)


def on_slope(x, y, z, vx, vy, g, contact=ORIGIN, **kw):
    return ComState(x, y, z, vx, vy, g.kx * vx + g.ky * vy, **kw)


# -- types -------------------------------------------------------------------

def test_slope_gradient_rejects_steep():
    with pytest.raises(ValueError):
        SlopeGradient(1.0, 0.0)
    with pytest.raises(ValueError):
        SlopeGradient(0.0, -1.2)


def test_com_state_validates():
    with pytest.raises(ValueError):
        ComState(0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        ComState(0.0, math.nan, 0.8)


def test_params_omega_and_alpha_range():
    assert P.omega == pytest.approx(math.sqrt(9.81 / 0.78))
    assert P.omega == pytest.approx(3.5459, abs=1e-3)
    with pytest.raises(ValueError):
        PendulumParams(alpha=1.5)
    with pytest.raises(ValueError):
        PendulumParams(lateral_cam_sign=0)


def test_side_other():
    assert Side.LEFT.other() is Side.RIGHT
    assert Side.RIGHT.other() is Side.LEFT


# -- G-ALIP velocity ---------------------------------------------------------

def test_galip_alpha_zero_is_lipm():
    s = ComState(0.0, 0.0, 0.78, 0.2, -0.1, 0.0, 5.0, -3.0)
    assert galip_velocity(s, PendulumParams(alpha=0.0)) == (0.2, -0.1)


def test_galip_alpha_one_alip_limit():
    m, z = P.mass, 0.78
    s = ComState(0.0, 0.0, z, 0.0, 0.0, 0.0, 0.0, m * z * 0.3)
    vx, _ = galip_velocity(s, PendulumParams(alpha=1.0))
    assert vx == pytest.approx(0.3, abs=1e-12)


def test_galip_table_mass_example():
    s = ComState(0.0, 0.0, 0.78, 0.2, 0.0, 0.0, 0.0, 7.0044)
    vx, _ = galip_velocity(s, P)
    assert vx == pytest.approx(0.3, abs=1e-4)


def test_galip_lateral_sign_convention():
    s = ComState(0.0, 0.0, 0.78, 0.0, 0.0, 0.0, 2.0, 0.0)
    _, vy_cross = galip_velocity(s, PendulumParams(alpha=1.0))
    _, vy_mirror = galip_velocity(s, PendulumParams(alpha=1.0, lateral_cam_sign=1))
    assert vy_cross == pytest.approx(-2.0 / (P.mass * 0.78))
    assert vy_mirror == pytest.approx(-vy_cross)


def test_galip_height_relative_to_contact():
    s = ComState(0.0, 0.0, 1.28, 0.0, 0.0, 0.0, 0.0, 3.0)
    raised = ContactPoint(0.0, 0.0, 0.5)
    vx, _ = galip_velocity(s, PendulumParams(alpha=1.0), raised)
    assert vx == pytest.approx(3.0 / (P.mass * 0.78))


def test_galip_affine_in_alpha():
    rng = np.random.default_rng(3)
    for _ in range(20):
        s = ComState(0.0, 0.0, rng.uniform(0.6, 1.0), *rng.normal(size=2), 0.0, *rng.normal(size=2) * 5)
        v0 = np.array(galip_velocity(s, PendulumParams(alpha=0.0)))
        v1 = np.array(galip_velocity(s, PendulumParams(alpha=1.0)))
        a = rng.uniform()
        va = np.array(galip_velocity(s, PendulumParams(alpha=a)))
        np.testing.assert_allclose(va, (1 - a) * v0 + a * v1, atol=1e-14)


# -- flow --------------------------------------------------------------------

def test_flow_zero_time_identity():
    s = ComState(0.1, 0.05, 0.8, 0.3, -0.1, 0.02, 1.0, 2.0)
    assert com_flow(s, ORIGIN, P, 0.0) is s


def test_flow_equilibrium_at_contact():
    c = ContactPoint(0.3, -0.1, 0.2)
    s = ComState(0.3, -0.1, 0.98)
    out = com_flow(s, c, P, 0.7)
    assert (out.x, out.y, out.vx, out.vy) == (0.3, -0.1, 0.0, 0.0)


def test_flow_closed_form_example():
    w = P.omega
    s = ComState(0.05, 0.0, 0.78, 0.1)
    out = com_flow(s, ORIGIN, PendulumParams(alpha=0.0), 0.25)
    assert out.x == pytest.approx(0.05 * math.cosh(w * 0.25) + 0.1 / w * math.sinh(w * 0.25), abs=1e-15)
    ref = rk4(pendulum_rhs(w), [0.05, 0.0, 0.1, 0.0, 0.0, 0.0], 0.25, 1e-5)
    assert abs(out.x - ref[0]) < 1e-6


def test_flow_rk4_with_cam_and_slope():
    rng = np.random.default_rng(11)
    w = P.omega
    for _ in range(10):
        c = ContactPoint(*rng.uniform(-1, 1, 2), rng.uniform(0, 1))
        g = SlopeGradient(*rng.uniform(-0.4, 0.4, 2))
        d = rng.uniform(-0.1, 0.1, 2)
        v = rng.uniform(-0.4, 0.4, 2)
        lcom = rng.uniform(-4, 4, 2)
        z = c.sz + 0.78 + g.kx * d[0] + g.ky * d[1]
        s = ComState(c.sx + d[0], c.sy + d[1], z, v[0], v[1], g.kx * v[0] + g.ky * v[1], *lcom)
        out = com_flow(s, c, P, 0.5, g)
        vt = galip_velocity(s, P, c)
        ref = rk4(pendulum_rhs(w), [d[0], d[1], vt[0], vt[1], 0, 0], 0.5, 1e-4)
        assert abs(out.x - c.sx - ref[0]) < 1e-9
        assert abs(out.y - c.sy - ref[1]) < 1e-9
        # height stays on the slope plane and the vertical velocity obeys it
        assert out.z - s.z == pytest.approx(g.kx * (out.x - s.x) + g.ky * (out.y - s.y), abs=1e-14)
        assert out.vz == pytest.approx(g.kx * out.vx + g.ky * out.vy, abs=1e-14)


def test_flow_cam_decay():
    s = ComState(0.0, 0.0, 0.78, lcom_x=1.0, lcom_y=3.0)
    out = com_flow(s, ORIGIN, P, 1.0, cam_decay=5.0)
    assert out.lcom_y == pytest.approx(3.0 * math.exp(-5.0))
    assert out.lcom_x == pytest.approx(math.exp(-5.0))


def test_flow_negative_time():
    with pytest.raises(ValueError):
        com_flow(ComState(0, 0, 0.8), ORIGIN, P, -0.1)


# -- slope transition --------------------------------------------------------

def test_delta_z_dot_examples():
    s = ComState(0.078, 0.0, 0.78, 0.5, 0.0, 0.0)
    dz = delta_z_dot(s, FLAT, SlopeGradient(0.3, 0.0))
    assert dz == pytest.approx(0.15 / 0.97, abs=1e-12)
    assert dz == pytest.approx(0.154639, abs=1e-6)
    assert delta_z_dot(s, SlopeGradient(0.2, 0.1), SlopeGradient(0.2, 0.1)) == 0.0
    still = ComState(0.1, 0.1, 0.78)
    assert delta_z_dot(still, FLAT, SlopeGradient(0.4, -0.3)) == 0.0


def test_delta_z_dot_singular():
    # 1 - k x / z vanishes for x / z = 1 / k
    s = ComState(0.78 / 0.5, 0.0, 0.78, 0.3)
    with pytest.raises(SingularTransition):
        delta_z_dot(s, FLAT, SlopeGradient(0.5, 0.0))


def test_reset_identity_on_equal_gradients():
    g = SlopeGradient(0.2, -0.1)
    s = on_slope(0.03, 0.02, 0.8, 0.4, 0.1, g, lcom_x=1.0)
    assert reset_map(s, g, g, ORIGIN) is s


def test_reset_worked_example():
    g1 = SlopeGradient(0.2, 0.0)
    s = ComState(0.02, 0.0, 0.78, 0.4, 0.0, 0.0)
    dz = delta_z_dot(s, FLAT, g1)
    out = reset_map(s, FLAT, g1, ORIGIN)
    assert out.vz == pytest.approx(dz, abs=1e-15)
    assert out.vx == pytest.approx(0.4 + 0.02 / 0.78 * dz, abs=1e-15)
    m = P.mass
    assert m * (out.z * out.vx - out.x * out.vz) == pytest.approx(m * (s.z * s.vx - s.x * s.vz), rel=1e-12)
    assert out.vz == pytest.approx(g1.kx * out.vx, abs=1e-12)


def test_reset_requires_pre_slope_velocity():
    s = ComState(0.0, 0.0, 0.78, 0.3, 0.0, 0.1)
    with pytest.raises(PreSlopeViolation):
        reset_map(s, FLAT, SlopeGradient(0.2, 0.0), ORIGIN)


def test_reset_conserves_angular_momentum_about_contact():
    rng = np.random.default_rng(5)
    m = P.mass
    for _ in range(500):
        c = ContactPoint(*rng.uniform(-2, 2, 2), rng.uniform(0, 1))
        g0 = SlopeGradient(*rng.uniform(-0.6, 0.6, 2))
        g1 = SlopeGradient(*rng.uniform(-0.6, 0.6, 2))
        z = rng.uniform(0.6, 1.0)
        x, y = rng.uniform(-0.3, 0.3, 2) * z
        vx, vy = rng.uniform(-1, 1, 2)
        s = ComState(c.sx + x, c.sy + y, c.sz + z, vx, vy, g0.kx * vx + g0.ky * vy)
        out = reset_map(s, g0, g1, c)
        # angular momentum about the contact: L = m r x v
        r = np.array([x, y, z])
        l_pre = m * np.cross(r, [s.vx, s.vy, s.vz])
        l_post = m * np.cross(r, [out.vx, out.vy, out.vz])
        np.testing.assert_allclose(l_post[:2], l_pre[:2], rtol=1e-10, atol=1e-12)
        assert out.vz == pytest.approx(g1.kx * out.vx + g1.ky * out.vy, abs=1e-9)
        assert (out.x, out.y, out.z, out.lcom_x, out.lcom_y) == (s.x, s.y, s.z, s.lcom_x, s.lcom_y)


def test_reset_velocity_jump_along_position():
    # the jump is parallel to the contact-to-CoM vector
    g1 = SlopeGradient(0.3, 0.2)
    s = ComState(0.05, -0.04, 0.8, 0.5, 0.2, 0.0)
    out = reset_map(s, FLAT, g1, ORIGIN)
    jump = np.array([out.vx - s.vx, out.vy - s.vy, out.vz - s.vz])
    r = np.array([s.x, s.y, s.z])
    assert np.linalg.norm(np.cross(jump, r)) < 1e-14


# -- guard -------------------------------------------------------------------

def test_guard_flat():
    c = ContactPoint(0.4, 0.1, 0.05)
    assert guard_check(ComState(0.5, 0.0, 0.83), FLAT, 0.78, c)
    assert not guard_check(ComState(0.5, 0.0, 0.84), FLAT, 0.78, c)


def test_guard_on_slope():
    c = ContactPoint(0.0, 0.0, 0.1)
    g = SlopeGradient(0.4, -0.2)
    s = ComState(0.1, 0.05, 0.1 + 0.78 + 0.04 - 0.01)
    assert guard_check(s, g, 0.78, c)
    assert guard_value(s, g, 0.78, c) == pytest.approx(0.0, abs=1e-15)


def test_bisection_matches_flow_crossing():
    # CoM rolling over the contact: x(t) = 0 where the guard k x = 0 flips sign
    w = P.omega
    s = ComState(-0.1, 0.0, 0.78, 0.5, 0.0, 0.0)
    p0 = PendulumParams(alpha=0.0)

    def fn(t):
        return com_flow(s, ORIGIN, p0, t).x

    t_hit = bisect_crossing(fn, 0.0, 1.0, 1e-8)
    # x(t) = x0 cosh + v0/w sinh = 0  =>  tanh(w t) = -x0 w / v0
    exact = math.atanh(0.1 * w / 0.5) / w
    assert abs(t_hit - exact) < 1e-8
