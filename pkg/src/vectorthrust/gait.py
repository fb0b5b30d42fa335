"""Two-step crawl: move all legs together, then carry the torso forward.

Legs are three-joint chains here (the distal yaw stays at zero), so each foot
target has a closed-form IK.  The knee bends upward, keeping the outer link
clear of the ground.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .model import N_JOINTS, N_LEGS, RobotModel, forward_kinematics


class GaitError(ValueError):
    pass


class GaitPhase(enum.Enum):
    LIFT_LEGS = "LiftLegs"
    SWING_LEGS = "SwingLegs"
    LOWER_LEGS = "LowerLegs"
    RESET_LEG_TARGETS = "ResetLegTargets"
    RAISE_TORSO = "RaiseTorso"
    TRANSLATE_TORSO = "TranslateTorso"
    LOWER_TORSO = "LowerTorso"
    RESET_TORSO_TARGETS = "ResetTorsoTargets"

    def next(self) -> GaitPhase:
        order = list(GaitPhase)
        return order[(order.index(self) + 1) % len(order)]

    @property
    def legs_airborne(self) -> bool:
        return self in (GaitPhase.LIFT_LEGS, GaitPhase.SWING_LEGS, GaitPhase.LOWER_LEGS)

    @property
    def torso_airborne(self) -> bool:
        return self in (GaitPhase.RAISE_TORSO, GaitPhase.TRANSLATE_TORSO, GaitPhase.LOWER_TORSO)


@dataclass(frozen=True)
class GaitParams:
    stride: float = 0.2
    torso_lift_height: float = 0.1
    leg_lift_angle: float = math.radians(15.0)
    stance_radius: float = 0.905
    stance_yaw: float = math.radians(45.0)
    min_phase_duration: float = 1.5
    settle_time: float = 1.0
    direction: tuple[float, float] = (1.0, 0.0)

    def __post_init__(self):
        if not self.stride > 0:
            raise GaitError("stride must be positive")
        if not self.torso_lift_height > 0:
            raise GaitError("torso_lift_height must be positive")
        if not self.leg_lift_angle > 0:
            raise GaitError("leg_lift_angle must be positive")
        if not (self.stance_radius > 0 and self.min_phase_duration > 0 and self.settle_time >= 0):
            raise GaitError("stance radius and phase timing must be positive")
        if abs(math.hypot(*self.direction) - 1.0) > 1e-9:
            raise GaitError("direction must be a unit 2-vector")

    @property
    def step(self) -> np.ndarray:
        return self.stride * np.array([self.direction[0], self.direction[1], 0.0])


@dataclass(frozen=True)
class LegAngles:
    yaw: float
    hip_pitch: float
    knee_pitch: float
    near_singular: bool = False

    def __iter__(self):
        return iter((self.yaw, self.hip_pitch, self.knee_pitch))

    def joints(self) -> np.ndarray:
        """The leg's four joint angles, distal yaw at zero."""
        return np.array([self.yaw, self.hip_pitch, 0.0, self.knee_pitch])


def hip_position(model: RobotModel, leg: int) -> np.ndarray:
    a = leg * math.pi / 2
    return model.torso_half_width * np.array([math.cos(a), math.sin(a), 0.0])


def to_hip_frame(model: RobotModel, leg: int, point_base) -> np.ndarray:
    a = leg * math.pi / 2
    d = np.asarray(point_base, dtype=float) - hip_position(model, leg)
    c, s = math.cos(a), math.sin(a)
    return np.array([c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]])


def from_hip_frame(model: RobotModel, leg: int, point_hip) -> np.ndarray:
    a = leg * math.pi / 2
    p = np.asarray(point_hip, dtype=float)
    c, s = math.cos(a), math.sin(a)
    return hip_position(model, leg) + np.array([c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]])


def leg_ik(model: RobotModel, leg: int, target_base, singular_tol: float = 1e-3) -> LegAngles:
    """Yaw, hip pitch and knee pitch placing the foot at ``target_base`` (baselink frame)."""
    L = model.link_length
    x, y, z = to_hip_frame(model, leg, target_base)
    rho = math.hypot(x, y)
    d2 = rho * rho + z * z
    d = math.sqrt(d2)
    if d > 2 * L + 1e-12 or d < 1e-9:
        raise GaitError(f"leg {leg}: target at distance {d:.4f} m is unreachable")
    yaw = math.atan2(y, x) if rho > 1e-12 else 0.0
    c = min(1.0, max(-1.0, (d2 - 2 * L * L) / (2 * L * L)))
    knee = math.acos(c)
    hip = math.atan2(-z, rho) - 0.5 * knee
    return LegAngles(yaw, hip, knee, near_singular=(2 * L - d) < singular_tol)


def foot_from_angles(model: RobotModel, leg: int, angles) -> np.ndarray:
    """Baselink-frame foot position for ``(yaw, hip_pitch, knee_pitch)``."""
    yaw, a, b = angles
    L = model.link_length
    rho = L * math.cos(a) + L * math.cos(a + b)
    h = L * math.sin(a) + L * math.sin(a + b)
    return from_hip_frame(model, leg, [rho * math.cos(yaw), rho * math.sin(yaw), -h])


def nominal_footholds(model: RobotModel, params: GaitParams, height: float = 0.0) -> np.ndarray:
    """Stance foot positions relative to the torso center, ``height`` below it."""
    p = params.stance_radius * np.array([math.cos(params.stance_yaw), math.sin(params.stance_yaw), 0.0])
    p[2] = -height
    return np.array([from_hip_frame(model, leg, p) for leg in range(N_LEGS)])


def _check_limits(model: RobotModel, q, leg: int | None = None) -> None:
    q = np.asarray(q)
    bad = np.flatnonzero(np.abs(q) > model.joint_angle_limit + 1e-9)
    if bad.size:
        j = int(bad[0]) + (4 * leg if leg is not None else 0)
        raise GaitError(f"joint {j} target {float(q[bad[0]]):.4f} rad exceeds the joint limit")


def phase_duration(params: GaitParams, model: RobotModel, q_from, q_to) -> float:
    """Long enough to cover the largest joint move at the speed limit, then settle."""
    move = float(np.max(np.abs(np.asarray(q_to) - np.asarray(q_from)), initial=0.0))
    return max(params.min_phase_duration, move / model.joint_speed_limit + params.settle_time)


def plan_leg_step(model: RobotModel, params: GaitParams, leg: int, current_foot, next_foot) -> list[np.ndarray]:
    """Lift, swing and lower keyframes (four joint angles each) for one leg."""
    start = leg_ik(model, leg, current_foot).joints()
    end = leg_ik(model, leg, next_foot).joints()
    lift = start.copy()
    lift[1] -= params.leg_lift_angle
    swing = end.copy()
    swing[1] = lift[1]
    frames = [lift, swing, end]
    for f in frames:
        _check_limits(model, f, leg)
    return frames


@dataclass
class TorsoPlan:
    keyposes: list[np.ndarray]
    joint_targets: list[np.ndarray]


def plan_torso_step(model: RobotModel, params: GaitParams, torso_position, footholds_world) -> TorsoPlan:
    """Raise, translate and lower the torso with the feet pinned at ``footholds_world``."""
    p0 = np.asarray(torso_position, dtype=float)
    up = np.array([0.0, 0.0, params.torso_lift_height])
    poses = [p0 + up, p0 + up + params.step, p0 + params.step]
    targets = []
    for pose in poses:
        q = np.zeros(N_JOINTS)
        for leg in range(N_LEGS):
            q[4 * leg:4 * leg + 4] = leg_ik(model, leg, np.asarray(footholds_world[leg]) - pose).joints()
        _check_limits(model, q)
        targets.append(q)
    return TorsoPlan(poses, targets)


def touchdown_and_reset(phase: GaitPhase, elapsed: float, duration: float, q, q_des) -> np.ndarray:
    """Declare contact once the lowering phase has run its course; targets snap to the measured joints."""
    if phase in (GaitPhase.LOWER_LEGS, GaitPhase.LOWER_TORSO) and elapsed >= duration:
        return np.array(q, dtype=float, copy=True)
    return np.array(q_des, dtype=float, copy=True)


def torso_from_feet(model: RobotModel, q, footholds_world) -> np.ndarray:
    """Torso center implied by pinned feet (average over legs)."""
    feet_base = forward_kinematics(model, q).foot_positions_base
    return np.mean(np.asarray(footholds_world) - feet_base, axis=0)


@dataclass
class GaitPlanner:
    """Phase state machine driven by the simulation clock."""

    model: RobotModel
    params: GaitParams = field(default_factory=GaitParams)
    phase: GaitPhase = GaitPhase.LIFT_LEGS
    elapsed: float = 0.0
    duration: float = 0.0
    cycle: int = 0
    q_des: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))
    torso: np.ndarray = field(default_factory=lambda: np.zeros(3))
    footholds: np.ndarray = field(default_factory=lambda: np.zeros((N_LEGS, 3)))
    keyframes: list = field(default_factory=list)
    leg_plan: list = field(default_factory=list)
    torso_plan: TorsoPlan | None = None

    def stance_pose(self) -> np.ndarray:
        """Joint angles of the nominal stance with the torso resting on the ground."""
        feet = nominal_footholds(self.model, self.params)
        q = np.zeros(N_JOINTS)
        for leg in range(N_LEGS):
            q[4 * leg:4 * leg + 4] = leg_ik(self.model, leg, feet[leg]).joints()
        return q

    def start(self, q, torso_position) -> np.ndarray:
        self.torso = np.asarray(torso_position, dtype=float).copy()
        self.footholds = self.torso + forward_kinematics(self.model, q).foot_positions_base
        self.q_des = np.asarray(q, dtype=float).copy()
        self.cycle = 0
        self._enter(GaitPhase.LIFT_LEGS, q)
        return self.q_des

    def _enter(self, phase: GaitPhase, q) -> None:
        self.phase = phase
        self.elapsed = 0.0
        target = self.q_des.copy()
        if phase is GaitPhase.LIFT_LEGS:
            nominal = nominal_footholds(self.model, self.params)
            current = self.footholds - self.torso
            self.leg_plan = [
                plan_leg_step(self.model, self.params, leg, current[leg], nominal[leg] + self.params.step)
                for leg in range(N_LEGS)
            ]
        if phase in (GaitPhase.LIFT_LEGS, GaitPhase.SWING_LEGS, GaitPhase.LOWER_LEGS):
            k = (GaitPhase.LIFT_LEGS, GaitPhase.SWING_LEGS, GaitPhase.LOWER_LEGS).index(phase)
            for leg in range(N_LEGS):
                target[4 * leg:4 * leg + 4] = self.leg_plan[leg][k]
        elif phase is GaitPhase.RAISE_TORSO:
            self.torso_plan = plan_torso_step(self.model, self.params, self.torso, self.footholds)
            target = self.torso_plan.joint_targets[0]
        elif phase is GaitPhase.TRANSLATE_TORSO:
            target = self.torso_plan.joint_targets[1]
        elif phase is GaitPhase.LOWER_TORSO:
            target = self.torso_plan.joint_targets[2]
        if phase in (GaitPhase.RESET_LEG_TARGETS, GaitPhase.RESET_TORSO_TARGETS):
            self.duration = 0.0
        else:
            self.duration = phase_duration(self.params, self.model, q, target)
            self.q_des = np.array(target, dtype=float)
            self.keyframes.append({"cycle": self.cycle, "phase": phase.value, "duration": self.duration, "q": self.q_des.tolist()})

    def update(self, q, dt: float) -> np.ndarray:
        """Advance the clock by ``dt`` given measured joints ``q``; return joint targets."""
        self.elapsed += dt
        if self.phase is GaitPhase.RESET_LEG_TARGETS:
            self.q_des = np.array(q, dtype=float, copy=True)
            self.footholds = self.torso + forward_kinematics(self.model, q).foot_positions_base
            self.footholds[:, 2] = 0.0
            self._enter(GaitPhase.RAISE_TORSO, q)
        elif self.phase is GaitPhase.RESET_TORSO_TARGETS:
            self.q_des = np.array(q, dtype=float, copy=True)
            self.torso[2] = 0.0
            self.cycle += 1
            self._enter(GaitPhase.LIFT_LEGS, q)
        elif self.elapsed >= self.duration - 1e-9:
            self.q_des = touchdown_and_reset(self.phase, self.elapsed, self.duration, q, self.q_des)
            self._enter(self.phase.next(), q)
        return self.q_des
