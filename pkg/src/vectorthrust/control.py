"""Centroidal PID position control, geometric attitude control and joint PD."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import vee
from .model import N_JOINTS, RobotModel, RobotState


@dataclass(frozen=True)
class ControllerGains:
    pos_p: float = 4.0
    pos_i: float = 0.4
    pos_d: float = 2.8
    att_p: float = 20.0
    att_i: float = 1.0
    att_d: float = 8.0
    joint_p: float = 20.0
    joint_d: float = 1.0
    pos_i_clamp: float = 0.5
    att_i_clamp: float = 0.2

    def __post_init__(self):
        for name in ("pos_p", "pos_i", "pos_d", "att_p", "att_i", "att_d", "joint_p", "joint_d"):
            if getattr(self, name) < 0:
                raise ValueError(f"gain {name} must be non-negative")
        if not (self.pos_i_clamp > 0 and self.att_i_clamp > 0):
            raise ValueError("integrator clamps must be positive")


@dataclass
class Setpoint:
    r: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float).reshape(3)
        self.R = np.asarray(self.R, dtype=float).reshape(3, 3)
        self.omega = np.asarray(self.omega, dtype=float).reshape(3)
        self.q = np.asarray(self.q, dtype=float).reshape(N_JOINTS)
        if np.max(np.abs(self.R.T @ self.R - np.eye(3))) > 1e-9:
            raise ValueError("setpoint rotation is not orthonormal")


def attitude_error(R: np.ndarray, R_des: np.ndarray) -> np.ndarray:
    """``e_R = 1/2 vee(R^T R_d - R_d^T R)``."""
    return 0.5 * vee(R.T @ R_des - R_des.T @ R)


class _Integrator:
    """Trapezoidal integral, clamped componentwise."""

    def __init__(self, clamp: float):
        self.clamp = clamp
        self.value = np.zeros(3)
        self._last = None

    def update(self, e: np.ndarray, dt: float) -> np.ndarray:
        prev = e if self._last is None else self._last
        self.value = np.clip(self.value + 0.5 * dt * (prev + e), -self.clamp, self.clamp)
        self._last = e.copy()
        return self.value

    def reset(self) -> None:
        self.value = np.zeros(3)
        self._last = None


class PositionController:
    def __init__(self, model: RobotModel, gains: ControllerGains | None = None):
        self.model = model
        self.gains = gains or ControllerGains()
        self.integral = _Integrator(self.gains.pos_i_clamp)
        self._prev_r_des = None
        self.error = np.zeros(3)

    def reset(self) -> None:
        self.integral.reset()
        self._prev_r_des = None

    def __call__(self, state: RobotState, setpoint: Setpoint, dt: float) -> np.ndarray:
        """Desired body-frame thrust force, gravity compensation included."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        g = self.gains
        e = setpoint.r - state.r
        r_des_dot = np.zeros(3) if self._prev_r_des is None else (setpoint.r - self._prev_r_des) / dt
        self._prev_r_des = setpoint.r.copy()
        e_dot = r_des_dot - state.v
        ie = self.integral.update(e, dt)
        self.error = e
        acc = g.pos_p * e + g.pos_i * ie + g.pos_d * e_dot + np.array([0.0, 0.0, self.model.gravity])
        return self.model.total_mass * state.R.T @ acc


class AttitudeController:
    def __init__(self, gains: ControllerGains | None = None):
        self.gains = gains or ControllerGains()
        self.integral = _Integrator(self.gains.att_i_clamp)
        self.error = np.zeros(3)

    def reset(self) -> None:
        self.integral.reset()

    def __call__(self, state: RobotState, setpoint: Setpoint, inertia: np.ndarray, dt: float) -> np.ndarray:
        """Desired body torque about the CoG."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        g = self.gains
        e_R = attitude_error(state.R, setpoint.R)
        e_w = state.R.T @ setpoint.R @ setpoint.omega - state.omega
        ie = self.integral.update(e_R, dt)
        self.error = e_R
        w = state.omega
        return inertia @ (g.att_p * e_R + g.att_i * ie + g.att_d * e_w) + np.cross(w, inertia @ w)


def position_control(model: RobotModel, state: RobotState, setpoint: Setpoint, gains: ControllerGains | None = None, dt: float = 0.025) -> np.ndarray:
    """One-shot position PID with an empty integrator."""
    return PositionController(model, gains)(state, setpoint, dt)


def attitude_control(state: RobotState, setpoint: Setpoint, inertia: np.ndarray, gains: ControllerGains | None = None, dt: float = 0.025) -> np.ndarray:
    """One-shot attitude PID with an empty integrator."""
    return AttitudeController(gains)(state, setpoint, inertia, dt)


def joint_pd(q, q_dot, q_des, gains: ControllerGains | None = None, limit: float = 7.0) -> np.ndarray:
    """Per-joint PD torque, saturated at ``limit``."""
    g = gains or ControllerGains()
    tau = g.joint_p * (np.asarray(q_des, dtype=float) - q) - g.joint_d * np.asarray(q_dot, dtype=float)
    return np.clip(tau, -limit, limit)
