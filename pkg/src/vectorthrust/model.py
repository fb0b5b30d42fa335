"""Kinematic and inertial model of the four-legged, eight-rotor skeleton.

Conventions
-----------
* Baselink frame {B}: origin at the torso centre, z up when level.  The CoG
  frame shares the baselink orientation and sits at the composite CoG.
* Leg ``l`` (0..3) is mounted at ``torso_half_width * [cos, sin](l * 90 deg)``.
  Its joints are ``4l`` (yaw), ``4l+1`` (pitch), ``4l+2`` (yaw), ``4l+3``
  (pitch); every link points along its local x axis.  Positive pitch turns the
  link downward (right-handed rotation about the local y axis).
* Rotor ``2l`` sits on the inner link of leg ``l`` and rotor ``2l+1`` on the
  outer link, ``rotor_offset`` from the proximal joint.
* Segment 0 is the torso, segment ``1 + k`` is link ``k`` (same ordering as the
  rotors).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .geometry import hat, rot_y, rot_z

N_LEGS = 4
N_LINKS = 8
N_ROTORS = 8
N_JOINTS = 16
N_SEGMENTS = 1 + N_LINKS

FORMS = {
    1: (0.0, 0.0),
    2: (math.radians(30.0), math.radians(60.0)),
    3: (math.radians(45.0), math.radians(90.0)),
}


class ModelError(ValueError):
    """Invalid robot description."""


@dataclass(frozen=True)
class RobotModel:
    torso_half_width: float = 0.27
    link_length: float = 0.54
    rotor_offset: float = 0.27
    link_com_offset: float = 0.27
    torso_mass: float = 2.4
    link_masses: tuple[float, ...] = (1.7,) * N_LINKS
    thrust_limit: float = 42.0
    joint_torque_limit: float = 7.0
    joint_angle_limit: float = math.pi / 2
    joint_speed_limit: float = 0.2
    vectoring_limit: float = math.pi / 2
    gravity: float = 9.8
    rod_inertia: bool = True

    def __post_init__(self):
        object.__setattr__(self, "link_masses", tuple(float(m) for m in self.link_masses))
        self.validate()

    def validate(self) -> None:
        positive = (
            "torso_half_width",
            "link_length",
            "rotor_offset",
            "torso_mass",
            "thrust_limit",
            "joint_torque_limit",
            "joint_angle_limit",
            "joint_speed_limit",
            "vectoring_limit",
            "gravity",
        )
        for name in positive:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ModelError(f"{name} must be a positive finite number, got {value!r}")
        if len(self.link_masses) != N_LINKS:
            raise ModelError(f"link_masses must have {N_LINKS} entries")
        # zero link mass is allowed for test rigs; negative never
        if any(m < 0 or not math.isfinite(m) for m in self.link_masses):
            raise ModelError("link_masses must be non-negative")
        if not 0 <= self.rotor_offset <= self.link_length:
            raise ModelError("rotor_offset must lie on the link")
        if not 0 <= self.link_com_offset <= self.link_length:
            raise ModelError("link_com_offset must lie on the link")

    @property
    def segment_masses(self) -> np.ndarray:
        return np.array((self.torso_mass, *self.link_masses))

    @property
    def total_mass(self) -> float:
        return float(self.segment_masses.sum())

    @property
    def hover_thrust(self) -> float:
        """Per-rotor thrust of an evenly shared hover."""
        return self.total_mass * self.gravity / N_ROTORS

    def to_dict(self) -> dict:
        d = asdict(self)
        d["link_masses"] = list(self.link_masses)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> RobotModel:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ModelError(f"unknown robot field(s): {', '.join(sorted(unknown))}")
        kwargs = dict(data)
        if "link_masses" in kwargs:
            masses = kwargs["link_masses"]
            if isinstance(masses, (int, float)):
                masses = [masses] * N_LINKS
            kwargs["link_masses"] = tuple(masses)
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ModelError(str(exc)) from exc


def load_robot(path: str | Path) -> RobotModel:
    with open(path) as fh:
        return RobotModel.from_dict(json.load(fh))


def save_robot(model: RobotModel, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=2)


@dataclass
class RobotState:
    """Configuration at one instant.

    ``r`` and ``v`` are the CoG position and velocity in the world frame,
    ``R`` the CoG/baselink orientation and ``omega`` the body angular rate.
    """

    q: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))
    r: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(N_JOINTS)
        self.r = np.asarray(self.r, dtype=float).reshape(3)
        self.R = np.asarray(self.R, dtype=float).reshape(3, 3)
        self.omega = np.asarray(self.omega, dtype=float).reshape(3)
        self.v = np.asarray(self.v, dtype=float).reshape(3)

    def copy(self) -> RobotState:
        return RobotState(self.q.copy(), self.r.copy(), self.R.copy(), self.omega.copy(), self.v.copy())

    def check(self, model: RobotModel) -> list[int]:
        """Raise on a non-rotation ``R``; return joints outside their limit."""
        if np.max(np.abs(self.R.T @ self.R - np.eye(3))) > 1e-9:
            raise ModelError("R is not orthonormal")
        return [int(j) for j in np.flatnonzero(np.abs(self.q) > model.joint_angle_limit + 1e-12)]


def form_angles(form: int) -> np.ndarray:
    """Joint vector of one of the three symmetric flight forms."""
    if form not in FORMS:
        raise ValueError(f"unknown form {form}; expected one of {sorted(FORMS)}")
    pitch1, pitch2 = FORMS[form]
    q = np.zeros(N_JOINTS)
    q[1::4] = pitch1
    q[3::4] = pitch2
    return q


def rotor_direction(phi: float, theta: float) -> np.ndarray:
    """Unit thrust direction in the link frame, ``Rx(phi) Ry(theta) z``."""
    return np.array(
        [np.sin(theta), -np.sin(phi) * np.cos(theta), np.cos(phi) * np.cos(theta)]
    )


@dataclass
class KinematicsResult:
    total_mass: float
    com_base: np.ndarray
    hip_positions: np.ndarray
    elbow_positions: np.ndarray
    foot_positions_base: np.ndarray
    joint_origins: np.ndarray
    joint_axes: np.ndarray
    link_rotations: np.ndarray
    rotor_positions_base: np.ndarray
    segment_com_base: np.ndarray
    rotor_jacobians: np.ndarray
    segment_jacobians: np.ndarray
    foot_jacobians: np.ndarray
    inertia: np.ndarray
    limit_violations: list[int]

    @property
    def rotor_positions(self) -> np.ndarray:
        """Rotor positions in the CoG frame."""
        return self.rotor_positions_base - self.com_base

    @property
    def segment_com(self) -> np.ndarray:
        return self.segment_com_base - self.com_base

    @property
    def foot_positions(self) -> np.ndarray:
        return self.foot_positions_base - self.com_base

    def to_world(self, points_base: np.ndarray, state: RobotState) -> np.ndarray:
        """Map baselink-frame points to the world frame."""
        return state.r + (np.asarray(points_base) - self.com_base) @ state.R.T


def _point_jacobians(points: np.ndarray, mask: np.ndarray, origins: np.ndarray, axes: np.ndarray) -> np.ndarray:
    """Batched ``axis_j x (p - origin_j)`` columns, zeroed where joint j does not move the point."""
    cols = np.cross(axes[None, :, :], points[:, None, :] - origins[None, :, :])
    return np.transpose(cols * mask[:, :, None], (0, 2, 1))


def _chain_masks() -> tuple[np.ndarray, np.ndarray]:
    inner = np.zeros((N_LEGS, N_JOINTS))
    outer = np.zeros((N_LEGS, N_JOINTS))
    for leg in range(N_LEGS):
        inner[leg, 4 * leg:4 * leg + 2] = 1.0
        outer[leg, 4 * leg:4 * leg + 4] = 1.0
    links = np.empty((N_LINKS, N_JOINTS))
    links[0::2], links[1::2] = inner, outer
    return links, outer


_LINK_MASK, _FOOT_MASK = _chain_masks()
_SEG_MASK = np.vstack([np.zeros((1, N_JOINTS)), _LINK_MASK])


def forward_kinematics(model: RobotModel, state_or_q) -> KinematicsResult:
    """Positions, orientations, Jacobians and composite inertia at ``q``.

    Jacobians are of baselink-relative positions (torso held fixed), expressed
    with the CoG-frame orientation; these are the maps that appear in the
    quasi-static joint-torque balance.
    """
    q = state_or_q.q if isinstance(state_or_q, RobotState) else np.asarray(state_or_q, dtype=float)
    if q.shape != (N_JOINTS,):
        raise ModelError(f"q must have {N_JOINTS} entries")
    w, L = model.torso_half_width, model.link_length
    ex = np.array([1.0, 0.0, 0.0])

    origins = np.zeros((N_JOINTS, 3))
    axes = np.zeros((N_JOINTS, 3))
    link_R = np.zeros((N_LINKS, 3, 3))
    rotor_p = np.zeros((N_ROTORS, 3))
    seg_p = np.zeros((N_SEGMENTS, 3))
    hips = np.zeros((N_LEGS, 3))
    elbows = np.zeros((N_LEGS, 3))
    feet = np.zeros((N_LEGS, 3))

    for leg in range(N_LEGS):
        psi = leg * math.pi / 2
        R0 = rot_z(psi)
        hip = w * np.array([math.cos(psi), math.sin(psi), 0.0])
        j0 = 4 * leg
        Ryaw1 = R0 @ rot_z(q[j0])
        R1 = Ryaw1 @ rot_y(q[j0 + 1])
        elbow = hip + L * (R1 @ ex)
        Ryaw2 = R1 @ rot_z(q[j0 + 2])
        R2 = Ryaw2 @ rot_y(q[j0 + 3])
        foot = elbow + L * (R2 @ ex)

        origins[j0:j0 + 2] = hip
        origins[j0 + 2:j0 + 4] = elbow
        axes[j0] = R0[:, 2]
        axes[j0 + 1] = Ryaw1[:, 1]
        axes[j0 + 2] = R1[:, 2]
        axes[j0 + 3] = Ryaw2[:, 1]

        k1, k2 = 2 * leg, 2 * leg + 1
        link_R[k1], link_R[k2] = R1, R2
        rotor_p[k1] = hip + model.rotor_offset * R1[:, 0]
        rotor_p[k2] = elbow + model.rotor_offset * R2[:, 0]
        seg_p[1 + k1] = hip + model.link_com_offset * R1[:, 0]
        seg_p[1 + k2] = elbow + model.link_com_offset * R2[:, 0]
        hips[leg], elbows[leg], feet[leg] = hip, elbow, foot

    masses = model.segment_masses
    m_total = float(masses.sum())
    com = masses @ seg_p / m_total

    J_r = _point_jacobians(rotor_p, _LINK_MASK, origins, axes)
    J_s = _point_jacobians(seg_p, _SEG_MASK, origins, axes)
    J_f = _point_jacobians(feet, _FOOT_MASK, origins, axes)

    inertia = _composite_inertia(model, masses, seg_p - com, link_R)
    violations = [int(j) for j in np.flatnonzero(np.abs(q) > model.joint_angle_limit + 1e-12)]
    return KinematicsResult(
        total_mass=m_total,
        com_base=com,
        hip_positions=hips,
        elbow_positions=elbows,
        foot_positions_base=feet,
        joint_origins=origins,
        joint_axes=axes,
        link_rotations=link_R,
        rotor_positions_base=rotor_p,
        segment_com_base=seg_p,
        rotor_jacobians=J_r,
        segment_jacobians=J_s,
        foot_jacobians=J_f,
        inertia=inertia,
        limit_violations=violations,
    )


def _composite_inertia(model: RobotModel, masses, rel, link_R) -> np.ndarray:
    r2 = np.einsum("ij,ij->i", rel, rel)
    inertia = np.einsum("i,ijk->jk", masses, r2[:, None, None] * np.eye(3) - rel[:, :, None] * rel[:, None, :])
    side = 2.0 * model.torso_half_width
    inertia += model.torso_mass * side**2 / 12.0 * np.diag([1.0, 1.0, 2.0])
    if model.rod_inertia:
        L = model.link_length
        for k in range(N_LINKS):
            a = link_R[k][:, 0]
            inertia += model.link_masses[k] * L**2 / 12.0 * (np.eye(3) - np.outer(a, a))
    return 0.5 * (inertia + inertia.T)


def jacobians(model: RobotModel, state_or_q) -> tuple[np.ndarray, np.ndarray]:
    """Rotor and segment-CoG translational Jacobians, shapes (8,3,16) and (9,3,16)."""
    kin = forward_kinematics(model, state_or_q)
    return kin.rotor_jacobians, kin.segment_jacobians


def composite_inertia(model: RobotModel, state_or_q) -> np.ndarray:
    return forward_kinematics(model, state_or_q).inertia


def rotor_forces(kin: KinematicsResult, lam, phi, theta) -> np.ndarray:
    """Per-rotor 3-D forces in the CoG frame, shape (8, 3)."""
    lam, phi, theta = (np.asarray(x, dtype=float) for x in (lam, phi, theta))
    u_link = np.stack([rotor_direction(a, b) for a, b in zip(phi, theta)])
    return lam[:, None] * np.einsum("kij,kj->ki", kin.link_rotations, u_link)


def wrench_matrix(positions: np.ndarray) -> np.ndarray:
    """Stacked ``[I; [p x]]`` blocks mapping all rotor forces to a wrench, 6 x 3N."""
    n = len(positions)
    Q = np.zeros((6, 3 * n))
    for i, p in enumerate(positions):
        Q[:3, 3 * i:3 * i + 3] = np.eye(3)
        Q[3:, 3 * i:3 * i + 3] = hat(p)
    return Q


def total_wrench(model: RobotModel, state_or_kin, lam, phi, theta) -> np.ndarray:
    """Force/torque of all rotors about the CoG, in the CoG frame."""
    kin = state_or_kin if isinstance(state_or_kin, KinematicsResult) else forward_kinematics(model, state_or_kin)
    f = rotor_forces(kin, lam, phi, theta)
    return wrench_matrix(kin.rotor_positions) @ f.reshape(-1)


def gravity_wrench(model: RobotModel, kin: KinematicsResult, about: np.ndarray, R: np.ndarray | None = None) -> np.ndarray:
    """Wrench of segment weights about point ``about`` (baselink coords).

    ``R`` is the baselink orientation used to express world gravity in {B}.
    """
    g_vec = np.array([0.0, 0.0, -model.gravity])
    if R is not None:
        g_vec = R.T @ g_vec
    forces = model.segment_masses[:, None] * g_vec
    rel = kin.segment_com_base - about
    return np.concatenate([forces.sum(axis=0), np.cross(rel, forces).sum(axis=0)])
