"""Downwash-aware vectoring ranges.

With the first vectoring angle held at its nominal (upright) value, each rotor
can only swing its thrust within a plane, parametrized by the second angle
``theta``.  Here we find the ``theta`` values whose downwash would pass too
close to another rotor (or link) below it, split the remaining range into
disjoint subsets, pick the one nearest upright, and turn the chosen bounds into
linear constraints on the rotor force.

Downwash geometry is a straight ray opposite the thrust, of length
``influence_length``; an obstacle is hit when the ray passes within
``clearance_radius`` of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import rot_x
from .model import N_LINKS, N_ROTORS, KinematicsResult, RobotModel, forward_kinematics

_BELOW_EPS = 1e-9


class InterferenceError(ValueError):
    pass


class NoValidRangeError(InterferenceError):
    def __init__(self, rotor: int):
        super().__init__(f"no valid vectoring range for rotor {rotor}")
        self.rotor = rotor


@dataclass(frozen=True)
class DownwashModel:
    clearance_radius: float = 0.144
    influence_length: float = 1.0
    include_links: bool = False
    grid_step: float = math.radians(1.0)
    refine_tol: float = math.radians(0.01)

    def __post_init__(self):
        for name in ("clearance_radius", "influence_length", "grid_step", "refine_tol"):
            if not getattr(self, name) > 0:
                raise InterferenceError(f"{name} must be positive")


@dataclass(frozen=True)
class PointObstacle:
    center: np.ndarray


@dataclass(frozen=True)
class SegmentObstacle:
    start: np.ndarray
    end: np.ndarray


@dataclass
class VectoringRange:
    rotor: int
    phi_nominal: float
    theta_nominal: float
    singular: bool
    frame: np.ndarray
    subsets: list[tuple[float, float]]
    invalid: list[tuple[float, float]]
    lower: float
    upper: float
    restricted: bool = False
    pairs: list[tuple[int, float]] = field(default_factory=list)

    def contains(self, theta: float, tol: float = 0.0) -> bool:
        return self.lower - tol <= theta <= self.upper + tol

    def in_invalid(self, theta: float) -> bool:
        return any(lo < theta < hi for lo, hi in self.invalid)

    def to_dict(self) -> dict:
        return {
            "rotor": self.rotor,
            "phi_nominal": self.phi_nominal,
            "theta_nominal": self.theta_nominal,
            "singular": self.singular,
            "subsets": [list(s) for s in self.subsets],
            "invalid": [list(s) for s in self.invalid],
            "lower": self.lower,
            "upper": self.upper,
            "restricted": self.restricted,
            "pairs": [{"rotor": j, "alpha": a} for j, a in self.pairs],
        }


def nominal_angles(R_link: np.ndarray, phi_lock: float = 0.0, tol: float = 1e-6) -> tuple[float, float, bool]:
    """Vectoring angles that point the rotor straight up.

    Returns ``(phi, theta, singular)``.  When the link rod is vertical the
    first angle is undetermined; it is then held at ``phi_lock`` and
    ``singular`` is True.
    """
    a, b, c = R_link.T @ np.array([0.0, 0.0, 1.0])
    if math.hypot(b, c) < tol:
        phi = phi_lock
        singular = True
    else:
        phi = math.atan2(-b, c)
        singular = False
    theta = math.atan2(a, -b * math.sin(phi) + c * math.cos(phi))
    return phi, theta, singular


def rotor_frame(R_link: np.ndarray, phi: float) -> np.ndarray:
    """Link frame rolled by the fixed first vectoring angle."""
    return R_link @ rot_x(phi)


def pair_inclination(p_i: np.ndarray, p_j: np.ndarray, frame_i: np.ndarray) -> float:
    """Inclination of the rotor pair about the first vectoring axis."""
    v = frame_i.T @ (np.asarray(p_j, dtype=float) - np.asarray(p_i, dtype=float))
    if not np.any(v):
        raise InterferenceError("coincident rotors")
    return math.atan2(abs(v[1]), abs(v[2]))


def _thrust_dirs(frame: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    local = np.stack([np.sin(thetas), np.zeros_like(thetas), np.cos(thetas)], axis=-1)
    return local @ frame.T


def _ray_point_distance(origin, dirs, center, length):
    rel = center - origin
    s = np.clip(dirs @ rel, 0.0, length)
    closest = origin + s[:, None] * dirs
    return np.linalg.norm(closest - center, axis=1)


def _ray_segment_distance(origin, dirs, a, b, length):
    """Distance between each ray segment ``origin + s*dir, s in [0, length]`` and ``[a, b]``."""
    e = b - a
    ee = float(e @ e)
    r = origin - a
    out = np.empty(len(dirs))
    for k, d in enumerate(dirs):
        dd = length * d
        a11 = float(dd @ dd)
        a12 = float(dd @ e)
        b1, b2 = float(dd @ r), float(e @ r)
        denom = a11 * ee - a12 * a12
        s = np.clip((a12 * b2 - b1 * ee) / denom, 0.0, 1.0) if denom > 1e-15 else 0.0
        t = (a12 * s + b2) / ee if ee > 1e-15 else 0.0
        if t < 0.0:
            t = 0.0
            s = np.clip(-b1 / a11, 0.0, 1.0)
        elif t > 1.0:
            t = 1.0
            s = np.clip((a12 - b1) / a11, 0.0, 1.0)
        out[k] = np.linalg.norm(origin + s * dd - (a + t * e))
    return out


def _below_part(obstacle, z_ref):
    """Portion of the obstacle strictly below the rotor, or None."""
    if isinstance(obstacle, PointObstacle):
        c = np.asarray(obstacle.center, dtype=float)
        return PointObstacle(c) if c[2] < z_ref - _BELOW_EPS else None
    a = np.asarray(obstacle.start, dtype=float)
    b = np.asarray(obstacle.end, dtype=float)
    za, zb = a[2] - z_ref, b[2] - z_ref
    lim = -_BELOW_EPS
    if za >= lim and zb >= lim:
        return None
    if za < lim and zb < lim:
        return SegmentObstacle(a, b)
    t = (lim - za) / (zb - za)
    cut = a + t * (b - a)
    return SegmentObstacle(a, cut) if za < lim else SegmentObstacle(cut, b)


def _blocked_fn(origin, frame, obstacle, downwash: DownwashModel):
    r, length = downwash.clearance_radius, downwash.influence_length

    def blocked(thetas):
        thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
        dirs = -_thrust_dirs(frame, thetas)
        if isinstance(obstacle, PointObstacle):
            dist = _ray_point_distance(origin, dirs, obstacle.center, length)
        else:
            dist = _ray_segment_distance(origin, dirs, obstacle.start, obstacle.end, length)
        return dist < r

    return blocked


def _bisect(blocked, free_theta, blocked_theta, tol):
    while abs(blocked_theta - free_theta) > tol:
        mid = 0.5 * (free_theta + blocked_theta)
        if blocked(mid)[0]:
            blocked_theta = mid
        else:
            free_theta = mid
    return free_theta


def invalid_theta_intervals(origin, frame, obstacle, downwash: DownwashModel, limit: float) -> list[tuple[float, float]]:
    """All blocked ``theta`` runs on the sampling grid, edges refined by bisection.

    Edges are reported on the free side of the refined bracket so every
    angle outside the returned intervals is clear of the obstacle.
    """
    origin = np.asarray(origin, dtype=float)
    part = _below_part(obstacle, origin[2])
    if part is None:
        return []
    blocked = _blocked_fn(origin, frame, part, downwash)
    n = int(round(2 * limit / downwash.grid_step)) + 1
    grid = np.linspace(-limit, limit, n)
    hit = blocked(grid)
    if not hit.any():
        return []
    runs = []
    k = 0
    while k < n:
        if not hit[k]:
            k += 1
            continue
        start = k
        while k + 1 < n and hit[k + 1]:
            k += 1
        lo = -limit if start == 0 else _bisect(blocked, grid[start - 1], grid[start], downwash.refine_tol)
        hi = limit if k == n - 1 else _bisect(blocked, grid[k + 1], grid[k], downwash.refine_tol)
        runs.append((float(lo), float(hi)))
        k += 1
    return runs


def invalid_theta_interval(origin, frame, obstacle, downwash: DownwashModel, limit: float = math.pi / 2):
    """Blocked ``theta`` interval for one obstacle, or None when it is never hit.

    The blocked set of a convex obstacle is a single run; should sampling
    find several, their hull is returned.
    """
    runs = invalid_theta_intervals(origin, frame, obstacle, downwash, limit)
    if not runs:
        return None
    return runs[0][0], runs[-1][1]


def subtract_intervals(full: tuple[float, float], removed: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    """``full`` minus the union of ``removed``, as sorted disjoint closed intervals."""
    lo, hi = full
    out = []
    cursor = lo
    for a, b in sorted(removed):
        if b <= cursor:
            continue
        if a > cursor:
            out.append((cursor, min(a, hi)))
        cursor = max(cursor, b)
        if cursor >= hi:
            break
    if cursor < hi:
        out.append((cursor, hi))
    return [(a, b) for a, b in out if b > a]


def merge_intervals(intervals: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    merged: list[list[float]] = []
    for a, b in sorted(intervals):
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return [(a, b) for a, b in merged]


def best_subset(subsets: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Subset whose point closest to ``theta = 0`` is closest.

    Ties go to the wider subset, then to the earlier one.
    """
    if not subsets:
        raise InterferenceError("no subsets to choose from")

    def key(item):
        idx, (lo, hi) = item
        score = 0.0 if lo <= 0.0 <= hi else min(abs(lo), abs(hi))
        return (score, -(hi - lo), idx)

    _, chosen = min(enumerate(subsets), key=key)
    return chosen


def restricted_set(ranges: Sequence[VectoringRange], theta_threshold: float) -> list[int]:
    """Rotors whose nearest bound is closer to upright than ``theta_threshold``."""
    return [r.rotor for r in ranges if min(-r.lower, r.upper) < theta_threshold]


def valid_range(
    model: RobotModel,
    state_or_kin,
    downwash: DownwashModel | None = None,
    alpha_threshold: float = math.radians(30.0),
    theta_threshold: float = 0.7,
    phi_lock: Sequence[float] | None = None,
) -> list[VectoringRange]:
    """Per-rotor valid ``theta`` ranges for the current joint angles.

    Depends on joint angles only: the torso is taken as level, as the ranges
    describe the near-hover configuration.
    """
    downwash = downwash or DownwashModel()
    kin = state_or_kin if isinstance(state_or_kin, KinematicsResult) else forward_kinematics(model, state_or_kin)
    limit = model.vectoring_limit
    positions = kin.rotor_positions_base
    starts = np.zeros((N_LINKS, 3))
    ends = np.zeros((N_LINKS, 3))
    for leg in range(4):
        starts[2 * leg], ends[2 * leg] = kin.hip_positions[leg], kin.elbow_positions[leg]
        starts[2 * leg + 1], ends[2 * leg + 1] = kin.elbow_positions[leg], kin.foot_positions_base[leg]

    ranges = []
    for i in range(N_ROTORS):
        lock = 0.0 if phi_lock is None else float(phi_lock[i])
        phi, theta, singular = nominal_angles(kin.link_rotations[i], lock)
        frame = rotor_frame(kin.link_rotations[i], phi)
        invalid = []
        pairs = []
        for j in range(N_ROTORS):
            if j == i:
                continue
            alpha = pair_inclination(positions[i], positions[j], frame)
            pairs.append((j, alpha))
            if alpha >= alpha_threshold:
                continue
            obstacles = [PointObstacle(positions[j])]
            if downwash.include_links:
                obstacles.append(SegmentObstacle(starts[j], ends[j]))
            for obs in obstacles:
                invalid.extend(invalid_theta_intervals(positions[i], frame, obs, downwash, limit))
        invalid = merge_intervals(invalid)
        subsets = subtract_intervals((-limit, limit), invalid)
        if not subsets:
            raise NoValidRangeError(i)
        lo, hi = best_subset(subsets)
        ranges.append(
            VectoringRange(
                rotor=i,
                phi_nominal=phi,
                theta_nominal=theta,
                singular=singular,
                frame=frame,
                subsets=subsets,
                invalid=invalid,
                lower=lo,
                upper=hi,
                restricted=min(-lo, hi) < theta_threshold,
                pairs=pairs,
            )
        )
    return ranges


def bound_frame(mu: float) -> np.ndarray:
    """Rotation into the frame aligned with a ``theta`` bound.

    ``Rz(pi) Ry(-mu)``: the x component of a force in this frame is
    ``sin(mu) f_z - cos(mu) f_x``, non-positive for ``theta >= mu`` and
    non-negative for ``theta <= mu`` (for forces with positive magnitude).
    """
    c, s = math.cos(mu), math.sin(mu)
    return np.array([[-c, 0.0, s], [0.0, -1.0, 0.0], [s, 0.0, c]])


@dataclass
class ForceConstraints:
    """``eq_row . f = 0``, ``inf_row . f <= 0``, ``sup_row . f >= 0`` (CoG-frame f)."""

    eq_row: np.ndarray
    inf_row: np.ndarray
    sup_row: np.ndarray

    def satisfied(self, f: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(
            abs(self.eq_row @ f) <= tol and self.inf_row @ f <= tol and self.sup_row @ f >= -tol
        )


def force_constraints(vrange: VectoringRange) -> ForceConstraints:
    """Linear force constraints equivalent to ``f_y = 0`` and ``theta(f)`` within the chosen bounds."""
    F = vrange.frame
    inf_row = bound_frame(vrange.lower)[0] @ F.T
    sup_row = bound_frame(vrange.upper)[0] @ F.T
    return ForceConstraints(eq_row=F[:, 1].copy(), inf_row=inf_row, sup_row=sup_row)
