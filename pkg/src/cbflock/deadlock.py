"""Runtime deadlock detection, set-membership certificates and witnesses.

A robot is deadlocked when its QP output is (numerically) zero while it is
still away from its goal.  Membership in the deadlock set is certified by
checking the reformulated optimality conditions directly on a state: safe
separation, nonnegative multipliers, goal attraction balanced by the net
contact repulsion, and not-at-goal.  The explicit two- and three-robot
witness families make the set's non-emptiness checkable by construction.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import RobotState, SafetyParams, nominal_control, unit_vector, vec2
from .errors import DegenerateGeometryError, PreconditionError
from .qp import build_constraints, solve_cbf_qp
from .simulate import EVENT_DEADLOCK_DETECTED, Event

# Relative tolerance for "this neighbour is exactly at the safety margin".
ACTIVE_REL_TOL = 1e-6


@dataclass(frozen=True)
class DeadlockThresholds:
    """Detection thresholds: speed floor, goal-distance floor, persistence steps.

    Deadlock is asymptotic (the separation decays exponentially to d_s), so a
    persistence window avoids false positives during the slow final approach.
    """

    eps_u: float = 1e-4
    eps_goal: float = 1e-2
    persistence: int = 10

    def __post_init__(self):
        if self.eps_u <= 0 or self.eps_goal <= 0 or self.persistence < 1:
            raise PreconditionError("thresholds must be positive")


class Category(enum.Enum):
    """Three-robot deadlock contact patterns."""

    A = "A"        # all three pairs at the safety margin (contact triangle)
    B = "B"        # one robot touching both others, third pair separated
    NONE = "none"


@dataclass(eq=False)
class DeadlockCertificate:
    """Per-robot evidence for membership in the deadlock set."""

    robot: int
    separation_ok: bool
    min_separation: float
    multipliers: dict[int, float]
    stationarity_residual: float
    active: frozenset[int]
    at_goal: bool
    tol: float

    @property
    def valid(self) -> bool:
        mu_ok = all(mu >= -self.tol for mu in self.multipliers.values())
        return (
            self.separation_ok
            and mu_ok
            and self.stationarity_residual <= self.tol
            and not self.at_goal
        )


def detect_deadlock(window, thresholds: DeadlockThresholds) -> dict[int, bool]:
    """Window-based detection; `window` is a list of per-step samples.

    Each sample is a list of (RobotState, QPSolution) pairs.  A robot is
    flagged iff in the trailing `persistence` samples it always moved slower
    than eps_u while being at least eps_goal away from its goal.
    """
    if len(window) < thresholds.persistence:
        raise PreconditionError(
            f"window of {len(window)} samples is shorter than persistence "
            f"{thresholds.persistence}"
        )
    tail = window[-thresholds.persistence:]
    verdict: dict[int, bool] = {}
    for robot, _ in tail[0]:
        verdict[robot.id] = True
    for sample in tail:
        for robot, sol in sample:
            speed = float(np.linalg.norm(sol.control))
            goal_dist = float(np.linalg.norm(robot.position - robot.goal))
            if speed > thresholds.eps_u or goal_dist < thresholds.eps_goal:
                verdict[robot.id] = False
    return verdict


class DeadlockMonitor:
    """Streaming detector usable inside the simulation loop.

    Emits one deadlock_detected event per robot on the rising edge of the
    persistence condition.
    """

    def __init__(self, thresholds: DeadlockThresholds = DeadlockThresholds()):
        self.th = thresholds
        self._streak: dict[int, int] = {}
        self._flagged: set[int] = set()

    def update(self, t, ids, positions, goals, controls) -> list[Event]:
        events = []
        for i, rid in enumerate(ids):
            ux, uy = controls[i]
            gx, gy = goals[i]
            px, py = positions[i]
            slow = math.hypot(ux, uy) <= self.th.eps_u
            away = math.hypot(px - gx, py - gy) >= self.th.eps_goal
            if slow and away:
                self._streak[rid] = self._streak.get(rid, 0) + 1
            else:
                self._streak[rid] = 0
                self._flagged.discard(rid)
            if self._streak[rid] >= self.th.persistence and rid not in self._flagged:
                self._flagged.add(rid)
                events.append(Event(t, EVENT_DEADLOCK_DETECTED, rid, None))
        return events

    @property
    def flagged(self) -> frozenset[int]:
        return frozenset(self._flagged)


def active_neighbor_ids(ego: RobotState, others, safety: SafetyParams) -> list[int]:
    """Neighbours exactly at the safety margin (relative tolerance on d_s)."""
    tol = ACTIVE_REL_TOL * safety.d_s
    out = []
    for other in others:
        dist = float(np.linalg.norm(ego.position - other.position))
        if abs(dist - safety.d_s) <= tol:
            out.append(other.id)
    return out


def deadlock_multipliers(ego: RobotState, active_neighbors, safety: SafetyParams) -> dict[int, float]:
    """Multipliers balancing the goal attraction against contact repulsions.

    Solves u_hat = (1/2) sum_j mu_j a_j on the active contact directions:
    closed form for one contact, exact 2x2 solve for two.  With more than two
    contacts the robot's QP (whose optimum is zero control in deadlock)
    supplies a dual-feasible multiplier set.
    """
    if not active_neighbors:
        return {}
    u_hat = nominal_control(ego)
    dirs = {n.id: n.position - ego.position for n in active_neighbors}
    if len(dirs) == 1:
        (j, a), = dirs.items()
        na2 = float(a @ a)
        if na2 == 0.0:
            raise DegenerateGeometryError("active neighbour coincides with ego")
        return {j: 2.0 * float(a @ u_hat) / na2}
    if len(dirs) == 2:
        (j, aj), (k, ak) = dirs.items()
        det = aj[0] * ak[1] - aj[1] * ak[0]
        scale = max(float(np.linalg.norm(aj)) * float(np.linalg.norm(ak)), 1e-300)
        if abs(det) > 1e-12 * scale:
            rx, ry = 2.0 * u_hat[0], 2.0 * u_hat[1]
            mu_j = (rx * ak[1] - ry * ak[0]) / det
            mu_k = (aj[0] * ry - aj[1] * rx) / det
            return {j: float(mu_j), k: float(mu_k)}
        # Parallel contact directions (collinear squeeze): fall through to the
        # QP duals, which pick a dual-feasible split when one exists, and
        # raise if the pull cannot be balanced along the common axis.
        mus = _qp_duals(ego, active_neighbors, u_hat, safety)
        recon = 0.5 * sum(mus[n.id] * dirs[n.id] for n in active_neighbors)
        if float(np.linalg.norm(recon - u_hat)) > 1e-8 * max(1.0, float(np.linalg.norm(u_hat))):
            raise DegenerateGeometryError(
                "parallel active directions cannot balance the goal attraction"
            )
        return mus
    return _qp_duals(ego, active_neighbors, u_hat, safety)


def _qp_duals(ego, active_neighbors, u_hat, safety):
    """Multipliers of the robot's own QP at this state (u* = 0 in deadlock)."""
    cons = build_constraints(ego, list(active_neighbors), safety)
    sol = solve_cbf_qp(u_hat, cons)
    return {n.id: sol.multipliers.get(n.id, 0.0) for n in active_neighbors}


def membership(ego: RobotState, others, safety: SafetyParams, tol: float = 1e-8) -> DeadlockCertificate:
    """Evaluate all four deadlock-set clauses for one robot against the team."""
    others = list(others)
    dists = [float(np.linalg.norm(ego.position - o.position)) for o in others]
    min_sep = min(dists) if dists else math.inf
    separation_ok = min_sep >= safety.d_s - tol
    act_ids = active_neighbor_ids(ego, others, safety)
    act_states = [o for o in others if o.id in act_ids]
    u_hat = nominal_control(ego)
    try:
        mus = deadlock_multipliers(ego, act_states, safety) if act_states else {}
    except DegenerateGeometryError:
        mus = {}  # unbalanced geometry: residual reduces to ||u_hat||
    recon = sum(
        (0.5 * mus.get(o.id, 0.0) * (o.position - ego.position) for o in act_states),
        start=vec2(0.0, 0.0),
    )
    residual = float(np.linalg.norm(u_hat - recon))
    at_goal = float(np.linalg.norm(ego.position - ego.goal)) <= tol
    return DeadlockCertificate(
        robot=ego.id,
        separation_ok=separation_ok,
        min_separation=min_sep,
        multipliers=mus,
        stationarity_residual=residual,
        active=frozenset(act_ids),
        at_goal=at_goal,
        tol=tol,
    )


def system_deadlock(robots, safety: SafetyParams, tol: float = 1e-8):
    """True iff every robot's certificate is valid; returns (flag, certificates)."""
    robots = list(robots)
    certs = []
    for ego in robots:
        others = [r for r in robots if r.id != ego.id]
        certs.append(membership(ego, others, safety, tol=tol))
    return all(c.valid for c in certs), certs


def active_set_non_empty_check(cert: DeadlockCertificate) -> bool:
    """A valid certificate must have at least one contact; empty means a bug."""
    if not cert.valid:
        raise PreconditionError("check applies to valid certificates only")
    return len(cert.active) >= 1


def construct_two_robot_witness(p_d1, p_d2, alpha: float, safety: SafetyParams):
    """Family of two-robot deadlock states on the line joining the goals.

    Robot 1 sits at the convex combination alpha of the goals; robot 2 sits
    d_s behind it along the goal-to-goal direction.  alpha must be in (0, 1)
    so neither robot is at a goal.
    """
    p_d1 = np.asarray(p_d1, dtype=float)
    p_d2 = np.asarray(p_d2, dtype=float)
    d_goal = float(np.linalg.norm(p_d2 - p_d1))
    if d_goal <= safety.d_s:
        raise PreconditionError(
            f"goal separation {d_goal:.6g} must exceed d_s={safety.d_s:.6g}"
        )
    if not (0.0 < alpha < 1.0):
        raise PreconditionError(f"alpha must lie in (0, 1), got {alpha}")
    beta = math.atan2(p_d2[1] - p_d1[1], p_d2[0] - p_d1[0])
    p1 = alpha * p_d1 + (1.0 - alpha) * p_d2
    p2 = p1 - safety.d_s * unit_vector(beta)
    return p1, p2


def antipodal_goals(radius: float) -> list[np.ndarray]:
    """Three goals on a circle at 0, 120 and 240 degrees."""
    return [radius * unit_vector(2.0 * math.pi * i / 3.0) for i in range(3)]


def construct_three_robot_witness(radius: float, category: Category, safety: SafetyParams):
    """Published three-robot deadlock witnesses for goals antipodal_goals(radius).

    Category A: contact triangle around the origin opposite each goal.
    Category B: open chain with robot 2 touching both others.
    """
    if radius <= safety.d_s:
        raise PreconditionError(f"radius {radius} must exceed d_s={safety.d_s}")
    if category == Category.A:
        r = safety.d_s / math.sqrt(3.0)
        return [r * unit_vector(2.0 * math.pi * i / 3.0 + math.pi) for i in range(3)]
    if category == Category.B:
        return [
            safety.d_s * unit_vector(math.pi),
            vec2(0.0, 0.0),
            safety.d_s * unit_vector(math.pi / 3.0),
        ]
    raise PreconditionError(f"no witness for category {category}")


def classify_three_robot(robots, safety: SafetyParams, rel_tol: float = ACTIVE_REL_TOL) -> Category:
    """Contact-pattern classification of a three-robot system deadlock."""
    robots = list(robots)
    if len(robots) != 3:
        raise PreconditionError("classification is defined for exactly three robots")
    tol = rel_tol * safety.d_s
    at_margin = []
    above = []
    for i in range(3):
        for j in range(i + 1, 3):
            dist = float(np.linalg.norm(robots[i].position - robots[j].position))
            if abs(dist - safety.d_s) <= tol:
                at_margin.append((i, j))
            elif dist > safety.d_s:
                above.append((i, j))
    if len(at_margin) == 3:
        return Category.A
    if len(at_margin) == 2 and len(above) == 1:
        return Category.B
    return Category.NONE


def zero_measure_residual(robots, goals, safety: SafetyParams) -> float:
    """Residual of the two-robot identity: goal errors sum to d_s + goal gap."""
    robots = list(robots)
    goals = [np.asarray(g, dtype=float) for g in goals]
    if len(robots) != 2 or len(goals) != 2:
        raise PreconditionError("identity is defined for two robots")
    lhs = float(np.linalg.norm(robots[0].position - goals[0])) + float(
        np.linalg.norm(robots[1].position - goals[1])
    )
    d_goal = float(np.linalg.norm(goals[1] - goals[0]))
    return abs(lhs - (safety.d_s + d_goal))
