"""Three-phase deadlock resolution: CBF-QP, rotate-to-swap, proportional.

Phase 1 runs the per-robot CBF-QPs until deadlock is detected.  Phase 2
rotates the contact assembly about its (static) centroid while holding every
contact distance at d_s, until the inter-robot direction aligns with the
inter-goal direction.  Phase 3 hands control back to the plain proportional
law, from which the separation is non-decreasing and the goals are reached.
For single integrators the phase-2 output dynamics on (separation, bearing)
are directly linearizable, so the controller is derived in closed form here.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Scenario, SafetyParams
from .deadlock import DeadlockThresholds
from .errors import DegenerateGeometryError, NotCategoryAError, PreconditionError
from .simulate import (
    Event,
    SimConfig,
    SimTrace,
    TraceRecorder,
    _solve_all,
)

EVENT_PHASE2_ENTER = "phase2_enter"
EVENT_PHASE3_ENTER = "phase3_enter"
EVENT_DONE = "done"

_SQRT3 = math.sqrt(3.0)


class ResolutionPhase(enum.Enum):
    PHASE1_CBF = "phase1_cbf"
    PHASE2_ROTATE = "phase2_rotate"
    PHASE3_PROPORTIONAL = "phase3_proportional"
    DONE = "done"


def wrap_angle(x: float) -> float:
    """Wrap to [-pi, pi); an exact pi maps to -pi (counterclockwise tie-break)."""
    return (x + math.pi) % (2.0 * math.pi) - math.pi


@dataclass
class SupervisorState:
    phase: ResolutionPhase = ResolutionPhase.PHASE1_CBF
    t_enter_phase: float = 0.0
    theta: float = 0.0
    beta_target: float = 0.0
    rotation_gain: float = 1.0
    distance_gain: float = 1.0
    # Residual angular misalignment is absorbed by phase 3; this must be small
    # enough that the post-swap motion stays on the inter-goal axis.
    eps_theta: float = 1e-6
    goal_tol: float = 1e-3
    detect_streak: dict[int, int] = field(default_factory=dict)


@dataclass(eq=False)
class ResolutionReport:
    phase2_enter: float | None
    phase3_enter: float | None
    done_time: float | None
    min_pairwise_distance: float
    final_goal_errors: dict[int, float]
    phase3_monotone: bool


def _pair_geometry(robots):
    """theta of the robot-1->robot-2 offset and beta of the goal offset."""
    r1, r2 = robots[0], robots[1]
    dp = r2.position - r1.position
    dg = r2.goal - r1.goal
    if float(dp @ dp) == 0.0:
        raise DegenerateGeometryError("coincident robots in phase 2")
    theta = math.atan2(dp[1], dp[0])
    beta = math.atan2(dg[1], dg[0])
    return theta, beta


def phase2_two_robot(robots, sup: SupervisorState, safety: SafetyParams):
    """Zero-sum pair controls holding the separation at d_s while rotating.

    The relative command is radial contraction plus a tangential term
    d_s * theta_dot; splitting it evenly keeps the centroid exactly static.
    """
    r1, r2 = robots[0], robots[1]
    dp = r2.position - r1.position
    dist = float(np.linalg.norm(dp))
    if dist == 0.0:
        raise DegenerateGeometryError("coincident robots in phase 2")
    if abs(dist - safety.d_s) > 0.1 * safety.d_s * (1.0 + 1e-9):
        raise PreconditionError(
            f"phase-2 entry requires separation near d_s (got {dist:.4g})"
        )
    e_r = dp / dist
    e_t = np.array([-e_r[1], e_r[0]])
    theta, beta = _pair_geometry(robots)
    d_dot = -sup.distance_gain * (dist - safety.d_s)
    theta_dot = -sup.rotation_gain * wrap_angle(theta - beta)
    du = d_dot * e_r + safety.d_s * theta_dot * e_t
    return [-0.5 * du, 0.5 * du]


def phase2_three_robot(robots, sup: SupervisorState, safety: SafetyParams):
    """Rigid rotation of the contact triangle about its centroid.

    Tangential speed is set by the common bearing error of pair (1,2); a
    radial correction holds every vertex at d_s/sqrt(3) from the centroid.
    The rotation terms sum to zero exactly and the radial terms cancel by the
    120-degree symmetry, so the centroid stays put.
    """
    if len(robots) != 3:
        raise PreconditionError("three-robot rotation needs exactly three robots")
    ds = safety.d_s
    for i in range(3):
        for j in range(i + 1, 3):
            dist = float(np.linalg.norm(robots[i].position - robots[j].position))
            if abs(dist - ds) > 0.1 * ds * (1.0 + 1e-9):
                raise NotCategoryAError(
                    f"pair ({robots[i].id},{robots[j].id}) at {dist:.4g} is not at the "
                    f"safety margin; rotation handles the contact-triangle pattern only"
                )
    centroid = sum(r.position for r in robots) / 3.0
    theta, beta = _pair_geometry(robots)
    omega = -sup.rotation_gain * wrap_angle(theta - beta)
    r_target = ds / _SQRT3
    controls = []
    for r in robots:
        rel = r.position - centroid
        radius = float(np.linalg.norm(rel))
        if radius == 0.0:
            raise DegenerateGeometryError("robot at the centroid in phase 2")
        e_out = rel / radius
        tangential = omega * np.array([-rel[1], rel[0]])
        radial = -sup.distance_gain * (radius - r_target) * e_out
        controls.append(tangential + radial)
    return controls


def supervise_step(t, robots, sup: SupervisorState, thresholds: DeadlockThresholds,
                   safety: SafetyParams, dt: float):
    """One supervisor tick: controls for every robot plus the updated state.

    Phase transitions only move forward: CBF-QP until system deadlock persists,
    rotation until the bearing aligns, then proportional control.
    """
    events = []
    n = len(robots)
    ids = [r.id for r in robots]
    pos = [(float(r.position[0]), float(r.position[1])) for r in robots]
    goals = [(float(r.goal[0]), float(r.goal[1])) for r in robots]
    gains = [r.gain for r in robots]

    if sup.phase == ResolutionPhase.PHASE1_CBF:
        controls, mus, actives = _solve_all(
            pos, goals, gains, safety.gamma, safety.d_s ** 2, ids
        )
        for i, rid in enumerate(ids):
            slow = math.hypot(*controls[i]) <= thresholds.eps_u
            away = math.hypot(pos[i][0] - goals[i][0], pos[i][1] - goals[i][1]) >= thresholds.eps_goal
            sup.detect_streak[rid] = sup.detect_streak.get(rid, 0) + 1 if (slow and away) else 0
        if all(sup.detect_streak.get(rid, 0) >= thresholds.persistence for rid in ids):
            theta, beta = _pair_geometry(robots)
            sup = replace(
                sup,
                phase=ResolutionPhase.PHASE2_ROTATE,
                t_enter_phase=t,
                theta=theta,
                beta_target=beta,
            )
            events.append(Event(t, EVENT_PHASE2_ENTER, ids[0], None))
        ctrl_arrays = [np.array(c) for c in controls]
        return ctrl_arrays, sup, mus, actives, events

    zero_mus = [{} for _ in range(n)]
    zero_act = [frozenset() for _ in range(n)]

    if sup.phase == ResolutionPhase.PHASE2_ROTATE:
        theta, beta = _pair_geometry(robots)
        sup = replace(sup, theta=theta, beta_target=beta)
        if abs(wrap_angle(theta - beta)) <= sup.eps_theta:
            sup = replace(sup, phase=ResolutionPhase.PHASE3_PROPORTIONAL, t_enter_phase=t)
            events.append(Event(t, EVENT_PHASE3_ENTER, ids[0], None))
        else:
            if n == 2:
                controls = phase2_two_robot(robots, sup, safety)
            elif n == 3:
                controls = phase2_three_robot(robots, sup, safety)
            else:
                raise PreconditionError("rotation controller covers two or three robots")
            return controls, sup, zero_mus, zero_act, events

    # Phase 3 (and DONE): plain proportional control.
    controls = [-r.gain * (r.position - r.goal) for r in robots]
    if sup.phase == ResolutionPhase.PHASE3_PROPORTIONAL:
        errs = [math.hypot(pos[i][0] - goals[i][0], pos[i][1] - goals[i][1]) for i in range(n)]
        if max(errs) <= sup.goal_tol:
            sup = replace(sup, phase=ResolutionPhase.DONE, t_enter_phase=t)
            events.append(Event(t, EVENT_DONE, ids[0], None))
    return controls, sup, zero_mus, zero_act, events


def run_resolution(
    scenario: Scenario,
    config: SimConfig,
    thresholds: DeadlockThresholds = DeadlockThresholds(),
    rotation_gain: float | None = None,
    distance_gain: float | None = None,
    eps_theta: float = 1e-6,
):
    """Run the supervisor end to end; returns (SimTrace, ResolutionReport).

    Gains default to the (common) robot gain so the rotation and the tracking
    share one time scale.
    """
    scenario.validate()
    robots = scenario.robots
    n = len(robots)
    if n not in (2, 3):
        raise PreconditionError("resolution is implemented for two or three robots")
    for i in range(n):
        for j in range(i + 1, n):
            gap = float(np.linalg.norm(robots[i].goal - robots[j].goal))
            if gap <= scenario.safety.d_s:
                raise PreconditionError(
                    f"goals of robots {robots[i].id} and {robots[j].id} are "
                    f"{gap:.4g} apart; the inter-goal distance must exceed "
                    f"d_s={scenario.safety.d_s}"
                )
    base_gain = robots[0].gain
    sup = SupervisorState(
        rotation_gain=base_gain if rotation_gain is None else rotation_gain,
        distance_gain=base_gain if distance_gain is None else distance_gain,
        eps_theta=eps_theta,
    )

    ids = [r.id for r in robots]
    rec = TraceRecorder(ids)
    dt = config.dt
    n_steps = int(round(config.horizon / dt))
    work = [
        type(r)(r.id, r.position.copy(), r.goal.copy(), r.gain) for r in robots
    ]
    for k in range(n_steps + 1):
        t = k * dt
        controls, sup, mus, actives, events = supervise_step(
            t, work, sup, thresholds, scenario.safety, dt
        )
        rec.events.extend(events)
        if k % config.record_every == 0 or k == n_steps:
            rec.record(
                t,
                [(float(r.position[0]), float(r.position[1])) for r in work],
                [(float(c[0]), float(c[1])) for c in controls],
                mus,
                actives,
            )
        if k == n_steps:
            break
        for r, u in zip(work, controls):
            r.position = r.position + dt * u

    trace = rec.finalize()
    report = _build_report(trace, work, sup)
    return trace, report


def _build_report(trace: SimTrace, robots, sup: SupervisorState) -> ResolutionReport:
    times = {EVENT_PHASE2_ENTER: None, EVENT_PHASE3_ENTER: None, EVENT_DONE: None}
    for ev in trace.events:
        if ev.kind in times and times[ev.kind] is None:
            times[ev.kind] = ev.time
    min_dist = float(trace.distances.min()) if trace.distances.size else math.inf
    final_errors = {
        r.id: float(np.linalg.norm(r.position - r.goal)) for r in robots
    }
    monotone = True
    t3 = times[EVENT_PHASE3_ENTER]
    if t3 is not None:
        sel = trace.times >= t3
        for col in range(trace.distances.shape[1]):
            series = trace.distances[sel, col]
            if series.size > 1 and float(np.min(np.diff(series))) < -1e-9:
                monotone = False
    return ResolutionReport(
        phase2_enter=times[EVENT_PHASE2_ENTER],
        phase3_enter=times[EVENT_PHASE3_ENTER],
        done_time=times[EVENT_DONE],
        min_pairwise_distance=min_dist,
        final_goal_errors=final_errors,
        phase3_monotone=monotone,
    )
