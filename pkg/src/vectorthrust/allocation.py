"""Control allocation: rotor forces and joint torques from convex QPs.

Every mode shares the decision vector ``x = (f_1..f_8, tau_q)`` with rotor
forces expressed in the CoG frame, the cost ``w1 sum|f_i|^2 + w2 |tau_q|^2``
and the quasi-static joint balance

    tau_q + sum J_ri^T f_i = -sum J_si^T m_si g

Flight adds the centroidal wrench equality and, for restricted rotors, the
downwash constraints; the crawl modes replace the wrench equality with ground
contact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .interference import VectoringRange, force_constraints
from .model import (
    N_JOINTS,
    N_LEGS,
    N_ROTORS,
    KinematicsResult,
    RobotModel,
    RobotState,
    forward_kinematics,
    wrench_matrix,
)
from .qp import QpProblem, QpSolution, QpSolver, solve

NF = 3 * N_ROTORS
NX = NF + N_JOINTS
_ZERO_FORCE = 1e-12


class AllocationError(RuntimeError):
    """The allocation QP has no acceptable solution.

    ``binding`` names the constraint groups that could not be met.
    """

    def __init__(self, mode: str, status: str, binding: Sequence[str] = ()):
        self.mode = mode
        self.status = status
        self.binding = list(binding)
        detail = f" (binding: {', '.join(self.binding)})" if self.binding else ""
        super().__init__(f"{mode} allocation failed: {status}{detail}")


@dataclass(frozen=True)
class RotorCommand:
    lam: float
    phi: float
    theta: float
    f: np.ndarray


@dataclass(frozen=True)
class AllocationWeights:
    w1: float = 1.0
    w2: float = 0.01
    contact: float = 1e-3

    def __post_init__(self):
        if not (self.w1 > 0 and self.w2 > 0 and self.contact > 0):
            raise ValueError("allocation weights must be positive")


@dataclass(frozen=True)
class ContactWrenchBounds:
    f_xy: float
    tau_xy: float
    tau_z: float

    def __post_init__(self):
        if not (self.f_xy > 0 and self.tau_xy > 0 and self.tau_z > 0):
            raise ValueError("contact wrench thresholds must be positive")

    @classmethod
    def from_model(cls, model: RobotModel, friction: float = 0.5) -> ContactWrenchBounds:
        """Friction-limited shear and yaw, tipping-limited roll/pitch, from the torso weight."""
        weight = model.torso_mass * model.gravity
        return cls(
            f_xy=friction * weight,
            tau_xy=weight * model.torso_half_width,
            tau_z=friction * weight * model.torso_half_width,
        )

    @property
    def lower(self) -> np.ndarray:
        return np.array([-self.f_xy, -self.f_xy, 0.0, -self.tau_xy, -self.tau_xy, -self.tau_z])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.f_xy, self.f_xy, np.inf, self.tau_xy, self.tau_xy, self.tau_z])

    def violations(self, w: np.ndarray, tol: float = 1e-6) -> list[str]:
        names = ("fx", "fy", "fz", "tx", "ty", "tz")
        lo, hi = self.lower, self.upper
        return [n for n, v, a, b in zip(names, w, lo, hi) if v < a - tol or v > b + tol]


@dataclass
class AllocationResult:
    forces: np.ndarray
    tau: np.ndarray
    commands: list[RotorCommand]
    solution: QpSolution
    mode: str
    wrench_residual: float = 0.0
    joint_residual: float = 0.0
    restricted: list[int] = field(default_factory=list)
    contact_wrench: np.ndarray | None = None
    contact_forces: np.ndarray | None = None

    @property
    def lam(self) -> np.ndarray:
        return np.array([c.lam for c in self.commands])

    @property
    def phi(self) -> np.ndarray:
        return np.array([c.phi for c in self.commands])

    @property
    def theta(self) -> np.ndarray:
        return np.array([c.theta for c in self.commands])

    @property
    def total_thrust(self) -> float:
        return float(self.lam.sum())


def force_to_command(f_link, prev_phi: float = 0.0, prev_theta: float = 0.0) -> tuple[float, float, float]:
    """``(lam, phi, theta)`` reproducing a force given in the link frame.

    A zero force keeps the previous angles.
    """
    fx, fy, fz = (float(v) for v in f_link)
    lam = math.sqrt(fx * fx + fy * fy + fz * fz)
    if lam <= _ZERO_FORCE:
        return 0.0, prev_phi, prev_theta
    phi = math.atan2(-fy, fz)
    theta = math.atan2(fx, -fy * math.sin(phi) + fz * math.cos(phi))
    return lam, phi, theta


def forces_to_commands(forces, link_rotations=None, prev: Sequence[RotorCommand] | None = None) -> list[RotorCommand]:
    """Rotor commands for CoG-frame forces (link frames default to the CoG frame)."""
    forces = np.asarray(forces, dtype=float).reshape(-1, 3)
    out = []
    for i, f in enumerate(forces):
        f_link = f if link_rotations is None else link_rotations[i].T @ f
        p_phi, p_theta = (prev[i].phi, prev[i].theta) if prev is not None else (0.0, 0.0)
        lam, phi, theta = force_to_command(f_link, p_phi, p_theta)
        out.append(RotorCommand(lam, phi, theta, f.copy()))
    return out


def _kin(model, state_or_kin) -> KinematicsResult:
    if isinstance(state_or_kin, KinematicsResult):
        return state_or_kin
    return forward_kinematics(model, state_or_kin)


def _gravity_body(model: RobotModel, state) -> np.ndarray:
    g = np.array([0.0, 0.0, -model.gravity])
    if isinstance(state, RobotState):
        g = state.R.T @ g
    return g


def joint_balance(model: RobotModel, kin: KinematicsResult, g_body: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(A, b)`` with ``A @ (f, tau) = b`` the quasi-static joint balance."""
    A = np.zeros((N_JOINTS, NX))
    for i in range(N_ROTORS):
        A[:, 3 * i:3 * i + 3] = kin.rotor_jacobians[i].T
    A[:, NF:] = np.eye(N_JOINTS)
    masses = model.segment_masses
    b = -np.einsum("s,sij,i->j", masses, kin.segment_jacobians, g_body)
    return A, b


def _cost(weights: AllocationWeights, n_extra: int = 0) -> np.ndarray:
    diag = np.concatenate(
        [np.full(NF, weights.w1), np.full(N_JOINTS, weights.w2), np.full(n_extra, weights.contact)]
    )
    return np.diag(2.0 * diag)


def _box(model: RobotModel) -> tuple[np.ndarray, np.ndarray]:
    hi = np.concatenate([np.full(NF, model.thrust_limit), np.full(N_JOINTS, model.joint_torque_limit)])
    return -hi, hi


def _run(problem: QpProblem, solver: QpSolver | None) -> QpSolution:
    return solver.solve(problem) if solver is not None else solve(problem)


def _finish(model, kin, sol, mode, prev, x=None, **extra) -> AllocationResult:
    x = sol.x if x is None else x
    forces = x[:NF].reshape(N_ROTORS, 3)
    tau = x[NF:NX].copy()
    A, b = joint_balance(model, kin, extra.pop("g_body"))
    commands = forces_to_commands(forces, kin.link_rotations, prev)
    return AllocationResult(
        forces=forces.copy(),
        tau=tau,
        commands=commands,
        solution=sol,
        mode=mode,
        joint_residual=float(np.max(np.abs(A @ x[:NX] - b))) if extra.pop("check_joint", True) else 0.0,
        **extra,
    )


def flight_problem(
    model: RobotModel,
    state,
    wrench_des,
    ranges: Sequence[VectoringRange] | None = None,
    restricted: Iterable[int] | None = None,
    weights: AllocationWeights | None = None,
    include_box: bool = True,
) -> tuple[QpProblem, KinematicsResult]:
    weights = weights or AllocationWeights()
    kin = _kin(model, state)
    wrench_des = np.asarray(wrench_des, dtype=float).reshape(6)
    if not np.all(np.isfinite(wrench_des)):
        raise ValueError("desired wrench must be finite")
    Q = wrench_matrix(kin.rotor_positions)
    A_w = np.hstack([Q, np.zeros((6, N_JOINTS))])
    A_j, b_j = joint_balance(model, kin, _gravity_body(model, state))
    A_rows, b_rows = [A_w, A_j], [wrench_des, b_j]
    C_rows, l_rows, u_rows = [], [], []
    if include_box:
        lo, hi = _box(model)
        C_rows.append(np.eye(NX))
        l_rows.append(lo)
        u_rows.append(hi)
    restricted = sorted(set(restricted or []))
    if restricted and ranges is None:
        raise ValueError("restricted rotors given without their ranges")
    for i in restricted:
        fc = force_constraints(ranges[i])
        sl = slice(3 * i, 3 * i + 3)
        eq = np.zeros((1, NX))
        eq[0, sl] = fc.eq_row
        A_rows.append(eq)
        b_rows.append(np.zeros(1))
        ineq = np.zeros((2, NX))
        ineq[0, sl] = fc.inf_row
        ineq[1, sl] = fc.sup_row
        C_rows.append(ineq)
        l_rows.append(np.array([-np.inf, 0.0]))
        u_rows.append(np.array([0.0, np.inf]))
    problem = QpProblem(
        P=_cost(weights),
        A=np.vstack(A_rows),
        b=np.concatenate(b_rows),
        C=np.vstack(C_rows) if C_rows else None,
        l=np.concatenate(l_rows) if l_rows else None,
        u=np.concatenate(u_rows) if u_rows else None,
    )
    return problem, kin


def allocate_flight(
    model: RobotModel,
    state,
    wrench_des,
    ranges: Sequence[VectoringRange] | None = None,
    restricted: Iterable[int] | None = None,
    weights: AllocationWeights | None = None,
    solver: QpSolver | None = None,
    prev: Sequence[RotorCommand] | None = None,
) -> AllocationResult:
    """Rotor forces and joint torques realizing ``wrench_des`` about the CoG.

    ``restricted`` defaults to the rotors flagged in ``ranges``.
    """
    if restricted is None and ranges is not None:
        restricted = [r.rotor for r in ranges if r.restricted]
    restricted = sorted(set(restricted or []))
    problem, kin = flight_problem(model, state, wrench_des, ranges, restricted, weights)
    sol = _run(problem, solver)
    if not sol.ok:
        raise AllocationError("flight", sol.status, _diagnose_flight(model, state, wrench_des, ranges, restricted, weights))
    Q = wrench_matrix(kin.rotor_positions)
    residual = float(np.linalg.norm(Q @ sol.x[:NF] - np.asarray(wrench_des, dtype=float)))
    return _finish(
        model, kin, sol, "flight", prev,
        g_body=_gravity_body(model, state), wrench_residual=residual, restricted=restricted,
    )


def _diagnose_flight(model, state, wrench_des, ranges, restricted, weights) -> list[str]:
    binding = []
    if restricted:
        p, _ = flight_problem(model, state, wrench_des, ranges, [], weights)
        if solve(p).ok:
            binding.append("interference")
    p, _ = flight_problem(model, state, wrench_des, ranges, [], weights, include_box=False)
    if solve(p).ok and not binding:
        binding.append("thrust/torque bounds")
    return binding or ["wrench"]


def leg_rotors(legs: Iterable[int]) -> list[int]:
    return [r for l in legs for r in (2 * l, 2 * l + 1)]


def leg_joints(legs: Iterable[int]) -> list[int]:
    return [j for l in legs for j in range(4 * l, 4 * l + 4)]


def allocate_leg_lift(
    model: RobotModel,
    state,
    legs: Iterable[int],
    weights: AllocationWeights | None = None,
    solver: QpSolver | None = None,
    prev: Sequence[RotorCommand] | None = None,
) -> AllocationResult:
    """Thrust and joint torque holding the given legs up while the torso rests on the ground.

    Only the lifted legs' rotors and joints are decision variables; the rest
    are reported as zero.
    """
    legs = sorted(set(int(l) for l in legs))
    if not legs or any(l < 0 or l >= N_LEGS for l in legs):
        raise ValueError("leg set must be a nonempty subset of 0..3")
    weights = weights or AllocationWeights()
    kin = _kin(model, state)
    g_body = _gravity_body(model, state)
    rotors, joints = leg_rotors(legs), leg_joints(legs)
    cols = [3 * r + k for r in rotors for k in range(3)] + [NF + j for j in joints]
    A_full, b_full = joint_balance(model, kin, g_body)
    A = A_full[np.ix_(joints, cols)]
    b = b_full[joints]
    lo, hi = _box(model)
    P = _cost(weights)[np.ix_(cols, cols)]
    problem = QpProblem(P=P, A=A, b=b, C=np.eye(len(cols)), l=lo[cols], u=hi[cols])
    sol = _run(problem, solver)
    if not sol.ok:
        raise AllocationError("leg-lift", sol.status, ["thrust/torque bounds"])
    x = np.zeros(NX)
    x[cols] = sol.x
    result = _finish(model, kin, sol, "leg-lift", prev, x=x, g_body=g_body, check_joint=False)
    result.joint_residual = float(np.max(np.abs(A @ sol.x - b)))
    return result


def torso_balance_rows(model: RobotModel, kin: KinematicsResult, g_body: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(G, w0)`` with the ground-on-torso wrench ``w_c = G @ f + w0`` about the torso center."""
    QB = wrench_matrix(kin.rotor_positions_base)
    forces = model.segment_masses[:, None] * g_body
    weight = np.concatenate([forces.sum(axis=0), np.cross(kin.segment_com_base, forces).sum(axis=0)])
    return -QB, -weight


def contact_wrench(model: RobotModel, state, forces) -> np.ndarray:
    """Ground-on-torso wrench that keeps a grounded torso static under the given thrust."""
    kin = _kin(model, state)
    G, w0 = torso_balance_rows(model, kin, _gravity_body(model, state))
    return G @ np.asarray(forces, dtype=float).reshape(NF) + w0


def allocate_all_legs_lift(
    model: RobotModel,
    state,
    bounds: ContactWrenchBounds | None = None,
    weights: AllocationWeights | None = None,
    solver: QpSolver | None = None,
    prev: Sequence[RotorCommand] | None = None,
) -> AllocationResult:
    """All legs in the air, torso on the ground; the contact wrench must stay within ``bounds``."""
    bounds = bounds or ContactWrenchBounds.from_model(model)
    weights = weights or AllocationWeights()
    kin = _kin(model, state)
    g_body = _gravity_body(model, state)
    A, b = joint_balance(model, kin, g_body)
    G, w0 = torso_balance_rows(model, kin, g_body)
    lo, hi = _box(model)
    C_t = np.hstack([G, np.zeros((6, N_JOINTS))])
    problem = QpProblem(
        P=_cost(weights),
        A=A,
        b=b,
        C=np.vstack([np.eye(NX), C_t]),
        l=np.concatenate([lo, bounds.lower - w0]),
        u=np.concatenate([hi, bounds.upper - w0]),
    )
    sol = _run(problem, solver)
    if not sol.ok:
        relaxed = QpProblem(P=problem.P, A=A, b=b, C=np.eye(NX), l=lo, u=hi)
        rs = solve(relaxed)
        binding = bounds.violations(G @ rs.x[:NF] + w0) if rs.ok else ["thrust/torque bounds"]
        raise AllocationError("all-legs-lift", sol.status, binding)
    w_c = G @ sol.x[:NF] + w0
    return _finish(model, kin, sol, "all-legs-lift", prev, g_body=g_body, contact_wrench=w_c)


def allocate_stance(
    model: RobotModel,
    state,
    friction: float = 0.5,
    weights: AllocationWeights | None = None,
    solver: QpSolver | None = None,
    prev: Sequence[RotorCommand] | None = None,
) -> AllocationResult:
    """Torso off the ground, carried by the four feet with thrust assistance.

    Foot forces are extra decision variables inside friction pyramids; the
    whole body is in static balance.
    """
    weights = weights or AllocationWeights()
    kin = _kin(model, state)
    g_body = _gravity_body(model, state)
    nc = 3 * N_LEGS
    n = NX + nc
    A_j, b_j = joint_balance(model, kin, g_body)
    A_j = np.hstack([A_j, np.zeros((N_JOINTS, nc))])
    for leg in range(N_LEGS):
        A_j[:, NX + 3 * leg:NX + 3 * leg + 3] = kin.foot_jacobians[leg].T
    G, w0 = torso_balance_rows(model, kin, g_body)
    Qc = wrench_matrix(kin.foot_positions_base)
    A_w = np.hstack([-G, np.zeros((6, N_JOINTS)), Qc])
    lo, hi = _box(model)
    fr = np.zeros((5 * N_LEGS, n))
    for leg in range(N_LEGS):
        c = NX + 3 * leg
        rows = fr[5 * leg:5 * leg + 5]
        rows[0, c + 2] = 1.0
        rows[1, [c, c + 2]] = [1.0, -friction]
        rows[2, [c, c + 2]] = [-1.0, -friction]
        rows[3, [c + 1, c + 2]] = [1.0, -friction]
        rows[4, [c + 1, c + 2]] = [-1.0, -friction]
    fr_lo = np.tile([0.0, -np.inf, -np.inf, -np.inf, -np.inf], N_LEGS)
    fr_hi = np.tile([np.inf, 0.0, 0.0, 0.0, 0.0], N_LEGS)
    box = np.hstack([np.eye(NX), np.zeros((NX, nc))])
    problem = QpProblem(
        P=_cost(weights, nc),
        A=np.vstack([A_w, A_j]),
        b=np.concatenate([w0, b_j]),
        C=np.vstack([box, fr]),
        l=np.concatenate([lo, fr_lo]),
        u=np.concatenate([hi, fr_hi]),
    )
    sol = _run(problem, solver)
    if not sol.ok:
        raise AllocationError("stance", sol.status, ["thrust/torque bounds", "friction"])
    result = _finish(model, kin, sol, "stance", prev, g_body=g_body, check_joint=False)
    result.contact_forces = sol.x[NX:].reshape(N_LEGS, 3).copy()
    result.joint_residual = float(np.max(np.abs(A_j @ sol.x - b_j)))
    return result
