import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vectorthrust.geometry import expm_so3, hat, rot_x, rot_y, rot_z, vee
from vectorthrust.model import (
    N_JOINTS,
    ModelError,
    RobotModel,
    RobotState,
    composite_inertia,
    form_angles,
    forward_kinematics,
    gravity_wrench,
    jacobians,
    load_robot,
    rotor_direction,
    rotor_forces,
    save_robot,
    total_wrench,
    wrench_matrix,
)

angles = st.floats(-math.pi / 2 + 1e-3, math.pi / 2 - 1e-3)


def test_default_masses_sum_to_16kg(model):
    assert model.total_mass == pytest.approx(16.0)
    assert model.link_length == 0.54
    assert model.thrust_limit == 42.0
    assert model.joint_torque_limit == 7.0
    assert model.joint_angle_limit == pytest.approx(math.pi / 2)
    assert model.joint_speed_limit == 0.2
    assert model.hover_thrust == pytest.approx(19.6)


def test_max_diameter_matches_torso_plus_two_links(model):
    feet = forward_kinematics(model, np.zeros(N_JOINTS)).foot_positions_base
    assert np.linalg.norm(feet[0] - feet[2]) == pytest.approx(2.7)


@pytest.mark.parametrize(
    "field,value",
    [("link_length", 0.0), ("torso_mass", -1.0), ("thrust_limit", float("nan")), ("rotor_offset", 0.9)],
)
def test_invalid_model_rejected(field, value):
    with pytest.raises(ModelError):
        RobotModel(**{field: value})


def test_negative_link_mass_rejected():
    with pytest.raises(ModelError):
        RobotModel(link_masses=(1.0,) * 7 + (-1.0,))


def test_robot_json_roundtrip(tmp_path, model):
    path = tmp_path / "robot.json"
    save_robot(model, path)
    assert load_robot(path) == model


def test_unknown_robot_field_rejected():
    with pytest.raises(ModelError, match="wingspan"):
        RobotModel.from_dict({"wingspan": 3.0})


def test_state_check_flags_limits_and_bad_rotation(model):
    q = np.zeros(N_JOINTS)
    q[5] = 2.0
    assert RobotState(q=q).check(model) == [5]
    with pytest.raises(ModelError):
        RobotState(R=np.diag([1.0, 1.0, 1.1])).check(model)


@pytest.mark.parametrize(
    "phi,theta,expected",
    [(0.0, 0.0, [0, 0, 1]), (0.0, math.pi / 2, [1, 0, 0]), (math.pi / 2, 0.0, [0, -1, 0])],
)
def test_rotor_direction_cases(phi, theta, expected):
    np.testing.assert_allclose(rotor_direction(phi, theta), expected, atol=1e-15)


@given(angles, angles)
def test_rotor_direction_is_rotated_z(phi, theta):
    u = rotor_direction(phi, theta)
    np.testing.assert_allclose(u, rot_x(phi) @ rot_y(theta) @ [0, 0, 1], atol=1e-14)
    assert np.linalg.norm(u) == pytest.approx(1.0)


def test_flat_pose_positions(model):
    kin = forward_kinematics(model, np.zeros(N_JOINTS))
    # hand chain: 0.27 + 0.27 and 0.27 + 2 * 0.54
    np.testing.assert_allclose(kin.rotor_positions_base[0], [0.54, 0, 0], atol=1e-15)
    np.testing.assert_allclose(kin.rotor_positions_base[1], [1.08, 0, 0], atol=1e-15)
    np.testing.assert_allclose(kin.foot_positions_base[0], [1.35, 0, 0], atol=1e-15)
    np.testing.assert_allclose(kin.com_base, 0.0, atol=1e-15)


def test_flat_pose_point_symmetry(model):
    kin = forward_kinematics(model, np.zeros(N_JOINTS))
    p = kin.rotor_positions_base
    rotated = p @ rot_z(math.pi / 2).T
    np.testing.assert_allclose(rotated, np.roll(p, -2, axis=0), atol=1e-14)


def test_form3_has_vertically_overlapped_pairs(model):
    kin = forward_kinematics(model, form_angles(3))
    p = kin.rotor_positions_base
    overlapped = 0
    for leg in range(4):
        a, b = p[2 * leg], p[2 * leg + 1]
        if np.linalg.norm(a[:2] - b[:2]) < 1e-9 and a[2] > b[2]:
            overlapped += 1
    assert overlapped == 4


def test_form_angles():
    q = form_angles(2)
    assert q[1] == pytest.approx(math.radians(30)) and q[3] == pytest.approx(math.radians(60))
    assert q[0] == 0 and q[2] == 0
    with pytest.raises(ValueError):
        form_angles(4)


def test_com_balances_segment_moments(model, rng):
    for _ in range(10):
        q = rng.uniform(-1.5, 1.5, N_JOINTS)
        kin = forward_kinematics(model, q)
        moment = model.segment_masses @ (kin.segment_com_base - kin.com_base)
        np.testing.assert_allclose(moment, 0.0, atol=1e-12)


def _central_diff(model, q, getter, eps=1e-6):
    cols = []
    for j in range(N_JOINTS):
        dq = np.zeros(N_JOINTS)
        dq[j] = eps
        cols.append((getter(forward_kinematics(model, q + dq)) - getter(forward_kinematics(model, q - dq))) / (2 * eps))
    return np.stack(cols, axis=-1)


def test_jacobians_match_finite_differences(model, rng):
    for _ in range(5):
        q = rng.uniform(-1.5, 1.5, N_JOINTS)
        kin = forward_kinematics(model, q)
        fd_r = _central_diff(model, q, lambda k: k.rotor_positions_base)
        fd_s = _central_diff(model, q, lambda k: k.segment_com_base)
        fd_f = _central_diff(model, q, lambda k: k.foot_positions_base)
        np.testing.assert_allclose(kin.rotor_jacobians, fd_r, atol=1e-8)
        np.testing.assert_allclose(kin.segment_jacobians, fd_s, atol=1e-8)
        np.testing.assert_allclose(kin.foot_jacobians, fd_f, atol=1e-8)


def test_jacobian_structural_zeros(model):
    J_r, J_s = jacobians(model, np.zeros(N_JOINTS))
    for i in range(8):
        leg = i // 2
        chain = set(range(4 * leg, 4 * leg + (2 if i % 2 == 0 else 4)))
        for j in range(N_JOINTS):
            if j not in chain:
                assert not J_r[i][:, j].any()
    assert not J_s[0].any()


def test_yaw_column_is_z_cross_lever(model):
    kin = forward_kinematics(model, np.zeros(N_JOINTS))
    hip = np.array([0.27, 0, 0])
    expected = np.cross([0, 0, 1], kin.rotor_positions_base[0] - hip)
    np.testing.assert_allclose(kin.rotor_jacobians[0][:, 0], expected, atol=1e-15)


def test_inertia_flat_pose_by_hand(model):
    I = composite_inertia(model, np.zeros(N_JOINTS))
    # link centers at 0.27 + 0.27 and 0.27 + 0.54 + 0.27 from center on each arm
    r2 = 4 * 1.7 * (0.54**2 + 1.08**2)
    plate = 2.4 * 0.54**2 / 12
    rod = 8 * 1.7 * 0.54**2 / 12
    expected = np.diag([r2 / 2 + plate + rod / 2, r2 / 2 + plate + rod / 2, r2 + 2 * plate + rod])
    np.testing.assert_allclose(I, expected, atol=1e-12)


def test_inertia_properties(model, rng):
    q = rng.uniform(-1.5, 1.5, N_JOINTS)
    I = composite_inertia(model, q)
    np.testing.assert_allclose(I, I.T, atol=1e-14)
    assert np.all(np.linalg.eigvalsh(I) > 0)
    heavy = RobotModel(torso_mass=4.8, link_masses=(3.4,) * 8)
    np.testing.assert_allclose(composite_inertia(heavy, q), 2 * I, rtol=1e-12)
    flat = composite_inertia(model, np.zeros(N_JOINTS))
    assert composite_inertia(model, form_angles(3))[2, 2] < flat[2, 2]


def test_total_wrench_examples(model):
    kin = forward_kinematics(model, np.zeros(N_JOINTS))
    w = total_wrench(model, kin, np.full(8, 19.6), np.zeros(8), np.zeros(8))
    np.testing.assert_allclose(w, [0, 0, 156.8, 0, 0, 0], atol=1e-12)
    np.testing.assert_allclose(total_wrench(model, kin, np.zeros(8), np.zeros(8), np.zeros(8)), 0.0)
    Q = wrench_matrix(np.array([[1.0, 0, 0]]))
    np.testing.assert_allclose(Q @ [0, 0, 1.0], [0, 0, 1, 0, -1, 0])


def test_rotor_forces_use_link_orientation(model):
    q = form_angles(3)
    kin = forward_kinematics(model, q)
    f = rotor_forces(kin, np.ones(8), np.zeros(8), np.zeros(8))
    for i in range(8):
        np.testing.assert_allclose(f[i], kin.link_rotations[i][:, 2], atol=1e-15)


def test_gravity_wrench_about_com_has_no_moment(model, rng):
    kin = forward_kinematics(model, rng.uniform(-1, 1, N_JOINTS))
    w = gravity_wrench(model, kin, kin.com_base)
    np.testing.assert_allclose(w, [0, 0, -156.8, 0, 0, 0], atol=1e-12)


@settings(max_examples=50)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_vee_hat_identity(v):
    np.testing.assert_allclose(vee(hat(np.array(v))), v, atol=1e-12)


def test_expm_is_rotation(rng):
    for _ in range(20):
        R = expm_so3(rng.normal(size=3))
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0)
