import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vectorthrust.control import (
    AttitudeController,
    ControllerGains,
    PositionController,
    Setpoint,
    attitude_control,
    attitude_error,
    joint_pd,
    position_control,
)
from vectorthrust.geometry import expm_so3, rot_x, rot_z
from vectorthrust.model import N_JOINTS, RobotState

ONLY_P = ControllerGains(pos_p=1.0, pos_i=0.0, pos_d=0.0)


def test_gravity_feed_forward(model):
    f = position_control(model, RobotState(), Setpoint())
    np.testing.assert_allclose(f, [0, 0, 16 * 9.8], atol=1e-12)


def test_pure_x_error(model):
    f = position_control(model, RobotState(), Setpoint(r=[0.3, 0, 0]), ONLY_P)
    np.testing.assert_allclose(f, [16 * 0.3, 0, 16 * 9.8], atol=1e-12)


def test_yawed_body_maps_x_error_to_minus_y(model):
    state = RobotState(R=rot_z(math.pi / 2))
    f = position_control(model, state, Setpoint(r=[0.5, 0, 0]), ONLY_P)
    np.testing.assert_allclose(f, [0, -16 * 0.5, 16 * 9.8], atol=1e-12)


def test_setpoint_finite_difference_feeds_derivative(model):
    ctrl = PositionController(model, ControllerGains(pos_p=0, pos_i=0, pos_d=1.0))
    ctrl(RobotState(), Setpoint(r=[0, 0, 0]), 0.1)
    f = ctrl(RobotState(), Setpoint(r=[0.1, 0, 0]), 0.1)
    assert f[0] == pytest.approx(16 * 1.0)


def test_position_integrator_clamps(model):
    ctrl = PositionController(model)
    sp = Setpoint(r=[1.0, -1.0, 0.0])
    for _ in range(10_000):
        ctrl(RobotState(), sp, 0.025)
    np.testing.assert_allclose(ctrl.integral.value, [0.5, -0.5, 0.0])


def test_attitude_integrator_clamps():
    ctrl = AttitudeController()
    sp = Setpoint(R=rot_x(0.3))
    for _ in range(10_000):
        ctrl(RobotState(), sp, np.eye(3), 0.025)
    np.testing.assert_allclose(np.abs(ctrl.integral.value), [0.2, 0, 0])


def test_attitude_zero_at_setpoint():
    R = rot_z(0.4) @ rot_x(-0.2)
    tau = attitude_control(RobotState(R=R), Setpoint(R=R), np.diag([1, 2, 3]))
    np.testing.assert_allclose(tau, 0, atol=1e-14)


@pytest.mark.parametrize("eps", [1e-3, 0.2, 1.0])
def test_attitude_error_small_yaw(eps):
    np.testing.assert_allclose(attitude_error(np.eye(3), rot_z(eps)), [0, 0, math.sin(eps)], atol=1e-15)


def test_gyroscopic_term():
    I = np.diag([1.0, 2.0, 3.0])
    state = RobotState(omega=[1.0, 0.0, 0.0])
    sp = Setpoint(omega=[1.0, 0.0, 0.0])
    tau = attitude_control(state, sp, I, ControllerGains(att_p=0, att_i=0, att_d=0))
    # w x Iw with w = e_x, Iw = (1,0,0): zero; use a second axis to get a nonzero term
    np.testing.assert_allclose(tau, 0, atol=1e-15)
    state = RobotState(omega=[1.0, 1.0, 0.0])
    tau = attitude_control(state, Setpoint(omega=[1.0, 1.0, 0.0]), I, ControllerGains(att_p=0, att_i=0, att_d=0))
    # (1,1,0) x (1,2,0) = (0, 0, 2 - 1)
    np.testing.assert_allclose(tau, [0, 0, 1.0], atol=1e-15)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_attitude_error_antisymmetric_for_commuting_pair(a, b):
    Ra, Rb = rot_z(a), rot_z(b)
    np.testing.assert_allclose(attitude_error(Ra, Rb), -attitude_error(Rb, Ra), atol=1e-12)


def test_attitude_error_antisymmetric_transported(rng):
    for _ in range(50):
        R = expm_so3(rng.normal(size=3))
        Rd = expm_so3(rng.normal(size=3))
        # e_R(R, Rd) in R's frame equals -(e_R(Rd, R) carried from Rd's frame)
        np.testing.assert_allclose(attitude_error(R, Rd), -(R.T @ Rd) @ attitude_error(Rd, R), atol=1e-12)


@pytest.mark.parametrize(
    "q,qd,qdot,expected",
    [(0.3, 0.3, 0.0, 0.0), (0.0, 0.1, 0.0, 2.0), (0.0, 2.0, 0.0, 7.0), (0.0, -2.0, 0.0, -7.0), (0.0, 0.0, 1.0, -1.0)],
)
def test_joint_pd_examples(q, qd, qdot, expected):
    tau = joint_pd(np.full(N_JOINTS, q), np.full(N_JOINTS, qdot), np.full(N_JOINTS, qd))
    np.testing.assert_allclose(tau, expected, atol=1e-12)


def test_invalid_inputs(model):
    with pytest.raises(ValueError):
        ControllerGains(pos_p=-1)
    with pytest.raises(ValueError):
        ControllerGains(att_i_clamp=0)
    with pytest.raises(ValueError):
        Setpoint(R=np.diag([1.0, 1.0, 2.0]))
    with pytest.raises(ValueError):
        position_control(model, RobotState(), Setpoint(), dt=0.0)
