"""Quasi-static closed-loop simulation for flight and crawling.

Flight integrates the centroidal rigid-body equations under the allocated
rotor wrench.  Crawling is kinematic: feet or torso are pinned to the ground
and each tick checks that the ground can supply the wrench the thrust leaves
unbalanced.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .allocation import (
    AllocationError,
    AllocationResult,
    ContactWrenchBounds,
    allocate_all_legs_lift,
    allocate_flight,
    allocate_stance,
    contact_wrench,
)
from .config import ScenarioConfig
from .control import AttitudeController, PositionController, Setpoint
from .gait import GaitPhase, GaitPlanner, torso_from_feet
from .geometry import euler_zyx, expm_so3, orthonormalize
from .interference import InterferenceError, valid_range
from .model import (
    N_JOINTS,
    N_ROTORS,
    RobotModel,
    RobotState,
    form_angles,
    forward_kinematics,
    wrench_matrix,
)
from .qp import BACKEND, QpSolver

CSV_HEADER = (
    ["t"]
    + [f"r_{a}" for a in "xyz"]
    + ["roll", "pitch", "yaw"]
    + [f"q_{j}" for j in range(N_JOINTS)]
    + [f"tau_{j}" for j in range(N_JOINTS)]
    + [f"lambda_{i}" for i in range(N_ROTORS)]
    + [f"phi_{i}" for i in range(N_ROTORS)]
    + [f"theta_{i}" for i in range(N_ROTORS)]
    + [f"e_r_{a}" for a in "xyz"]
    + [f"e_R_{a}" for a in "xyz"]
    + ["solve_ms", "violations"]
)


class SimulationError(RuntimeError):
    def __init__(self, tick: int, message: str):
        super().__init__(f"tick {tick}: {message}")
        self.tick = tick


@dataclass
class Trajectory:
    mode: str
    dt: float
    t: list = field(default_factory=list)
    r: list = field(default_factory=list)
    euler: list = field(default_factory=list)
    q: list = field(default_factory=list)
    tau: list = field(default_factory=list)
    lam: list = field(default_factory=list)
    phi: list = field(default_factory=list)
    theta: list = field(default_factory=list)
    e_r: list = field(default_factory=list)
    e_R: list = field(default_factory=list)
    solve_ms: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    wrench_residual: list = field(default_factory=list)
    joint_residual: list = field(default_factory=list)
    restricted: list = field(default_factory=list)
    contact_wrench: list = field(default_factory=list)
    events: list = field(default_factory=list)
    torso: list = field(default_factory=list)
    cycle_start: list = field(default_factory=list)
    keyframes: list = field(default_factory=list)
    log_timing: bool = False

    def __len__(self) -> int:
        return len(self.t)

    def array(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)

    @property
    def thrust_integral(self) -> float:
        return float(self.array("lam").sum() * self.dt)

    @property
    def violation_count(self) -> int:
        return int(sum(self.violations))


# -- dynamics -----------------------------------------------------------------

def servo_step(q, q_des, dt: float, speed_limit: float, time_constant: float = 0.1) -> np.ndarray:
    """First-order joint lag with a rate limit."""
    rate = np.clip((np.asarray(q_des) - q) / time_constant, -speed_limit, speed_limit)
    return np.asarray(q, dtype=float) + dt * rate


def step_flight(
    model: RobotModel,
    state: RobotState,
    forces,
    dt: float,
    q_des=None,
    disturbance=None,
    time_constant: float = 0.1,
) -> RobotState:
    """Semi-implicit Euler step of the centroidal dynamics under CoG-frame rotor forces."""
    kin = forward_kinematics(model, state.q)
    forces = np.asarray(forces, dtype=float).reshape(N_ROTORS, 3)
    w = wrench_matrix(kin.rotor_positions) @ forces.reshape(-1)
    if disturbance is not None:
        w = w + np.asarray(disturbance, dtype=float)
    m = kin.total_mass
    I = kin.inertia
    acc = state.R @ w[:3] / m - np.array([0.0, 0.0, model.gravity])
    v = state.v + dt * acc
    r = state.r + dt * v
    omega = state.omega + dt * np.linalg.solve(I, w[3:] - np.cross(state.omega, I @ state.omega))
    R = orthonormalize(state.R @ expm_so3(omega * dt))
    q = state.q if q_des is None else servo_step(state.q, q_des, dt, model.joint_speed_limit, time_constant)
    nxt = RobotState(q=q, r=r, R=R, omega=omega, v=v)
    if not all(np.all(np.isfinite(x)) for x in (nxt.q, nxt.r, nxt.R, nxt.omega, nxt.v)):
        raise FloatingPointError("non-finite state after flight step")
    return nxt


@dataclass
class ContactReport:
    contact: str
    wrench: np.ndarray
    violations: list[str]


def step_crawl(
    model: RobotModel,
    state: RobotState,
    forces,
    contact: str,
    dt: float,
    q_des=None,
    torso_position=None,
    footholds=None,
    bounds: ContactWrenchBounds | None = None,
    time_constant: float = 0.1,
) -> tuple[RobotState, ContactReport]:
    """Kinematic crawl step.

    ``contact`` is ``"torso"`` (torso on the ground, legs free), ``"feet"``
    (torso carried by pinned feet) or ``"both"``.  In torso-only contact the
    wrench the ground must supply is checked against ``bounds``; on a
    violation the pose is frozen for this tick.
    """
    if contact not in ("torso", "feet", "both"):
        raise ValueError("contact must be 'torso', 'feet' or 'both'")
    bounds = bounds or ContactWrenchBounds.from_model(model)
    w_c = contact_wrench(model, state, forces)
    bad = bounds.violations(w_c) if contact == "torso" else []
    if bad:
        return state.copy(), ContactReport(contact, w_c, bad)
    q = state.q if q_des is None else servo_step(state.q, q_des, dt, model.joint_speed_limit, time_constant)
    kin = forward_kinematics(model, q)
    if contact == "feet":
        if footholds is None:
            raise ValueError("feet contact needs footholds")
        torso = torso_from_feet(model, q, footholds)
    else:
        torso = np.zeros(3) if torso_position is None else np.asarray(torso_position, dtype=float)
    r = torso + state.R @ kin.com_base
    return RobotState(q=q, r=r, R=state.R.copy()), ContactReport(contact, w_c, [])


# -- closed loop --------------------------------------------------------------

class _Recorder:
    def __init__(self, traj: Trajectory):
        self.traj = traj

    def add(self, t, state, result: AllocationResult | None, tau, e_r, e_R, solve_ms, violations, **extra):
        tr = self.traj
        tr.t.append(t)
        tr.r.append(state.r.copy())
        tr.euler.append(euler_zyx(state.R))
        tr.q.append(state.q.copy())
        tr.tau.append(np.asarray(tau, dtype=float).copy())
        if result is None:
            tr.lam.append(np.zeros(N_ROTORS))
            tr.phi.append(np.zeros(N_ROTORS))
            tr.theta.append(np.zeros(N_ROTORS))
        else:
            tr.lam.append(result.lam)
            tr.phi.append(result.phi)
            tr.theta.append(result.theta)
        tr.e_r.append(np.asarray(e_r, dtype=float).copy())
        tr.e_R.append(np.asarray(e_R, dtype=float).copy())
        tr.solve_ms.append(solve_ms)
        tr.violations.append(violations)
        tr.wrench_residual.append(0.0 if result is None else result.wrench_residual)
        tr.joint_residual.append(0.0 if result is None else result.joint_residual)
        for k, v in extra.items():
            getattr(tr, k).append(v)


def run_flight(config: ScenarioConfig, interference: bool | None = None) -> Trajectory:
    model = config.robot
    sim, sc = config.sim, config.flight
    dt = sim.dt
    duration = sim.duration if sim.duration is not None else sc.duration
    n_ticks = int(round(duration / dt))
    use_interference = config.interference.enabled if interference is None else interference
    downwash = config.interference.downwash()
    rng = np.random.default_rng(config.seed)
    solver = QpSolver()
    pos_ctrl = PositionController(model, config.gains)
    att_ctrl = AttitudeController(config.gains)

    first = form_angles(sc.form_at(0.0))
    state = RobotState(q=first, r=[0.0, 0.0, sc.altitude])
    setpoint = Setpoint(r=[0.0, 0.0, sc.altitude])
    traj = Trajectory("flight", dt, log_timing=sim.log_timing)
    rec = _Recorder(traj)
    prev = last = None
    phi_lock = np.zeros(N_ROTORS)
    forces = np.zeros((N_ROTORS, 3))
    for k in range(n_ticks):
        t = k * dt
        setpoint.q = form_angles(sc.form_at(t))
        kin = forward_kinematics(model, state.q)
        violations = 0
        try:
            ranges = valid_range(
                model, kin, downwash,
                alpha_threshold=config.interference.alpha_threshold,
                theta_threshold=config.interference.theta_threshold,
                phi_lock=phi_lock,
            )
        except InterferenceError as exc:
            raise SimulationError(k, str(exc)) from exc
        phi_lock = np.array([r.phi_nominal for r in ranges])
        active = use_interference and not (
            sc.toggle_off is not None and sc.toggle_off[0] <= t < sc.toggle_off[1]
        )
        restricted = [r.rotor for r in ranges if r.restricted] if active else []
        f_des = pos_ctrl(state, setpoint, dt)
        tau_des = att_ctrl(state, setpoint, kin.inertia, dt)
        w_des = np.concatenate([f_des, tau_des])
        t0 = time.perf_counter()
        try:
            result = allocate_flight(model, state, w_des, ranges, restricted, config.weights, solver, prev)
            forces = result.forces
            prev = result.commands
        except AllocationError as exc:
            # keep the last feasible command and record the event
            result = None
            violations += 1
            traj.events.append({"tick": k, "t": t, "event": str(exc)})
        solve_ms = (time.perf_counter() - t0) * 1e3
        if result is not None:
            lam = result.lam
            if np.any(lam > model.thrust_limit + 1e-6):
                violations += 1
                traj.events.append({"tick": k, "t": t, "event": "thrust norm above limit"})
            for i in restricted:
                if not ranges[i].contains(result.theta[i], 1e-6):
                    violations += 1
                    traj.events.append({"tick": k, "t": t, "event": f"rotor {i} outside its vectoring range"})
        e_R = att_ctrl.error
        if result is not None:
            last = result
        rec.add(
            t, state, last, last.tau if last is not None else np.zeros(N_JOINTS),
            pos_ctrl.error, e_R, solve_ms, violations,
            restricted=list(restricted),
        )
        disturbance = None
        if sim.disturbance > 0 or sim.disturbance_torque > 0:
            sigma = np.array([sim.disturbance] * 3 + [sim.disturbance_torque] * 3)
            disturbance = sigma * rng.standard_normal(6)
        try:
            state = step_flight(model, state, forces, dt, setpoint.q, disturbance, sim.servo_time_constant)
        except FloatingPointError as exc:
            raise SimulationError(k, str(exc)) from exc
    return traj


def run_crawl(config: ScenarioConfig, cycles: int | None = None) -> Trajectory:
    model = config.robot
    sim = config.sim
    dt = sim.dt
    cycles = config.cycles if cycles is None else cycles
    bounds = ContactWrenchBounds.from_model(model)
    planner = GaitPlanner(model, config.gait)
    q0 = planner.stance_pose()
    torso = np.zeros(3)
    kin0 = forward_kinematics(model, q0)
    state = RobotState(q=q0, r=torso + kin0.com_base)
    q_des = planner.start(q0, torso)
    solver = QpSolver()
    traj = Trajectory("crawl", dt, log_timing=sim.log_timing)
    rec = _Recorder(traj)
    prev = None
    max_ticks = int(round(sim.duration / dt)) if sim.duration is not None else 10**7
    traj.cycle_start.append({"cycle": 0, "t": 0.0, "torso": torso.tolist(), "q": q0.tolist()})
    k = 0
    while planner.cycle < cycles and k < max_ticks:
        t = k * dt
        phase = planner.phase
        violations = 0
        result = None
        t0 = time.perf_counter()
        try:
            if phase.legs_airborne:
                result = allocate_all_legs_lift(model, state, bounds, config.weights, solver, prev)
            elif phase.torso_airborne:
                result = allocate_stance(model, state, weights=config.weights, prev=prev)
        except AllocationError as exc:
            violations += 1
            traj.events.append({"tick": k, "t": t, "event": str(exc)})
        solve_ms = (time.perf_counter() - t0) * 1e3
        forces = result.forces if result is not None else np.zeros((N_ROTORS, 3))
        if result is not None:
            prev = result.commands
        contact = "feet" if phase.torso_airborne else "torso" if phase.legs_airborne else "both"
        target = planner.torso if not phase.torso_airborne else None
        e_r = np.zeros(3)
        if phase.torso_airborne and planner.torso_plan is not None:
            idx = (GaitPhase.RAISE_TORSO, GaitPhase.TRANSLATE_TORSO, GaitPhase.LOWER_TORSO).index(phase)
            e_r = planner.torso_plan.keyposes[idx] - planner.torso
        rec.add(
            t, state, result, result.tau if result is not None else np.zeros(N_JOINTS),
            e_r, np.zeros(3), solve_ms, 0, torso=planner.torso.copy(),
        )
        new_state, report = step_crawl(
            model, state, forces, contact, dt, q_des, target, planner.footholds, bounds, sim.servo_time_constant
        )
        traj.contact_wrench.append(report.wrench)
        if report.violations:
            violations += 1
            traj.events.append({"tick": k, "t": t, "event": "contact wrench out of bounds: " + ", ".join(report.violations)})
        traj.violations[-1] = violations
        state = new_state
        if phase.torso_airborne:
            planner.torso = state.r - state.R @ forward_kinematics(model, state.q).com_base
        cycle_before = planner.cycle
        q_des = planner.update(state.q, dt)
        if planner.cycle != cycle_before:
            traj.cycle_start.append(
                {"cycle": planner.cycle, "t": (k + 1) * dt, "torso": planner.torso.tolist(), "q": state.q.tolist()}
            )
        k += 1
    traj.keyframes = planner.keyframes
    return traj


def run_scenario(config: ScenarioConfig, interference: bool | None = None, cycles: int | None = None) -> Trajectory:
    if config.mode == "flight":
        return run_flight(config, interference)
    return run_crawl(config, cycles)


# -- output -------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def trajectory_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for k in range(len(traj)):
        row = [_fmt(traj.t[k])]
        for name in ("r", "euler", "q", "tau", "lam", "phi", "theta", "e_r", "e_R"):
            row.extend(_fmt(v) for v in getattr(traj, name)[k])
        row.append(f"{traj.solve_ms[k]:.3f}" if traj.log_timing else "")
        row.append(str(traj.violations[k]))
        writer.writerow(row)
    return buf.getvalue()


def write_csv(traj: Trajectory, path: str | Path) -> None:
    Path(path).write_text(trajectory_csv(traj))


def summarize(traj: Trajectory, model: RobotModel) -> dict:
    e_r = traj.array("e_r")
    e_R = traj.array("e_R")
    solve = traj.array("solve_ms")
    lam_total = traj.array("lam").sum(axis=1)
    duration = len(traj) * traj.dt
    hover_integral = model.total_mass * model.gravity * duration
    out = {
        "mode": traj.mode,
        "ticks": len(traj),
        "duration": duration,
        "qp_backend": BACKEND,
        "max_wrench_residual": float(np.max(traj.array("wrench_residual"), initial=0.0)),
        "max_joint_residual": float(np.max(traj.array("joint_residual"), initial=0.0)),
        "thrust_integral": traj.thrust_integral,
        "hover_thrust_integral": hover_integral,
        "thrust_ratio": traj.thrust_integral / hover_integral if hover_integral else 0.0,
        "max_total_thrust": float(lam_total.max(initial=0.0)),
        "solve_ms": {
            "median": float(np.median(solve)) if len(solve) else 0.0,
            "p95": float(np.percentile(solve, 95)) if len(solve) else 0.0,
            "max": float(solve.max(initial=0.0)),
        },
        "violations": traj.violation_count,
        "events": traj.events[:50],
    }
    if traj.mode == "flight" and len(traj):
        out["rmse_position"] = float(np.sqrt(np.mean(np.sum(e_r**2, axis=1))))
        angle = np.arcsin(np.clip(np.linalg.norm(e_R, axis=1), 0.0, 1.0))
        out["rmse_orientation"] = float(np.sqrt(np.mean(angle**2)))
    if traj.mode == "crawl" and traj.cycle_start:
        starts = [np.array(c["torso"]) for c in traj.cycle_start]
        out["cycle_displacement"] = [float(np.linalg.norm(b[:2] - a[:2])) for a, b in zip(starts, starts[1:])]
        out["final_displacement"] = (starts[-1] - starts[0]).tolist()
        qs = [np.array(c["q"]) for c in traj.cycle_start]
        out["cycle_joint_repeatability"] = max((float(np.max(np.abs(b - qs[0]))) for b in qs[1:]), default=0.0)
        out["cycles_completed"] = len(starts) - 1
    return out


def write_outputs(traj: Trajectory, model: RobotModel, out_dir: str | Path, stem: str) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(traj, out_dir / f"{stem}.csv")
    summary = summarize(traj, model)
    (out_dir / f"{stem}_summary.json").write_text(json.dumps(summary, indent=2))
    if traj.keyframes:
        (out_dir / f"{stem}_keyframes.json").write_text(json.dumps(traj.keyframes, indent=1))
    return summary
