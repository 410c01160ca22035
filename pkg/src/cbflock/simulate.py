"""Fixed-step closed-loop simulation of the whole team under CBF-QP controls.

Every robot's QP is solved against the same start-of-step state snapshot
(synchronous update with zero-order-hold controls), which preserves the
symmetry arguments the canonical scenarios rely on.  The integration loop
works on plain floats for speed; recorded samples are assembled into numpy
arrays afterwards.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import RobotState, SafetyParams, Scenario
from .errors import DegenerateGeometryError, PreconditionError
from .qp import QPSolution, _solve_rows, vec2

EVENT_CONSTRAINT_ACTIVATED = "constraint_activated"
EVENT_CONSTRAINT_DEACTIVATED = "constraint_deactivated"
EVENT_DEADLOCK_DETECTED = "deadlock_detected"

_FLOAT_FMT = "%.17g"  # lossless float64 round-trip


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    horizon: float = 30.0
    integrator: str = "euler"
    record_every: int = 1

    def __post_init__(self):
        if not (self.dt > 0):
            raise PreconditionError(f"dt must be positive, got {self.dt}")
        if not (self.horizon >= self.dt):
            raise PreconditionError("horizon must be at least one step")
        if self.integrator not in ("euler", "rk4"):
            raise PreconditionError(f"unknown integrator {self.integrator!r}")
        if not (isinstance(self.record_every, int) and self.record_every >= 1):
            raise PreconditionError("record_every must be a positive integer")


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    robot: int
    neighbor: int | None = None


@dataclass(eq=False)
class SimTrace:
    """Time-indexed record of one closed-loop run.

    positions/controls have shape (T, N, 2); multipliers (T, N, N) with
    mu[t, i, j] the multiplier of robot ids[i] against ids[j]; active is the
    boolean activation matrix per sample; distances holds one column per
    unordered pair in `pairs`.
    """

    robot_ids: list[int]
    times: np.ndarray
    positions: np.ndarray
    controls: np.ndarray
    multipliers: np.ndarray
    active: np.ndarray
    pairs: list[tuple[int, int]]
    distances: np.ndarray
    events: list[Event] = field(default_factory=list)

    def index_of(self, robot_id: int) -> int:
        return self.robot_ids.index(robot_id)

    def pair_distance(self, i: int, j: int) -> np.ndarray:
        key = (min(i, j), max(i, j))
        return self.distances[:, self.pairs.index(key)]


class TraceRecorder:
    """Accumulates per-step samples and finalizes them into a SimTrace."""

    def __init__(self, robot_ids: list[int]):
        self.ids = list(robot_ids)
        self.index = {rid: k for k, rid in enumerate(self.ids)}
        self.pairs = [
            (self.ids[i], self.ids[j])
            for i in range(len(self.ids))
            for j in range(i + 1, len(self.ids))
        ]
        self.times: list[float] = []
        self.positions: list[list[tuple[float, float]]] = []
        self.controls: list[list[tuple[float, float]]] = []
        self.multipliers: list[np.ndarray] = []
        self.active: list[np.ndarray] = []
        self.events: list[Event] = []

    def record(self, t, pos, ctrl, mus, actives):
        n = len(self.ids)
        self.times.append(t)
        self.positions.append(list(pos))
        self.controls.append(list(ctrl))
        mu_mat = np.zeros((n, n))
        act_mat = np.zeros((n, n), dtype=bool)
        for i in range(n):
            for j_id, mu in mus[i].items():
                mu_mat[i, self.index[j_id]] = mu
            for j_id in actives[i]:
                act_mat[i, self.index[j_id]] = True
        self.multipliers.append(mu_mat)
        self.active.append(act_mat)

    def finalize(self) -> SimTrace:
        pos = np.array(self.positions)
        dists = np.empty((len(self.times), len(self.pairs)))
        for col, (ri, rj) in enumerate(self.pairs):
            i, j = self.index[ri], self.index[rj]
            dists[:, col] = np.hypot(
                pos[:, i, 0] - pos[:, j, 0], pos[:, i, 1] - pos[:, j, 1]
            )
        return SimTrace(
            robot_ids=self.ids,
            times=np.array(self.times),
            positions=pos,
            controls=np.array(self.controls),
            multipliers=np.array(self.multipliers),
            active=np.array(self.active),
            pairs=self.pairs,
            distances=dists,
            events=self.events,
        )


def _rows_for(i, pos, gamma, ds2, ids):
    """Constraint rows of robot index i against every other robot."""
    xi, yi = pos[i]
    rows = []
    for j in range(len(pos)):
        if j == i:
            continue
        ax = pos[j][0] - xi
        ay = pos[j][1] - yi
        d2 = ax * ax + ay * ay
        if d2 == 0.0:
            raise DegenerateGeometryError(f"robots {ids[i]} and {ids[j]} coincide")
        rows.append((ids[j], ax, ay, 0.25 * gamma * (d2 - ds2)))
    return rows


def _solve_all(pos, goals, gains, gamma, ds2, ids):
    """Solve every robot's QP against one shared state snapshot."""
    controls = []
    mus = []
    actives = []
    for i in range(len(pos)):
        uhx = -gains[i] * (pos[i][0] - goals[i][0])
        uhy = -gains[i] * (pos[i][1] - goals[i][1])
        rows = _rows_for(i, pos, gamma, ds2, ids)
        ux, uy, mu, act = _solve_rows(uhx, uhy, rows)
        controls.append((ux, uy))
        mus.append(mu)
        actives.append(frozenset(act))
    return controls, mus, actives


def step(robots: list[RobotState], safety: SafetyParams, dt: float, integrator: str = "euler"):
    """Advance the team one step; returns (new positions (N,2), per-robot QPSolution).

    All QPs read the same start-of-step snapshot.  The recorded solutions are
    always the snapshot ones; rk4 re-solves the QPs at its stage states to
    integrate the closed-loop vector field to fourth order.
    """
    ids = [r.id for r in robots]
    pos = [(float(r.position[0]), float(r.position[1])) for r in robots]
    goals = [(float(r.goal[0]), float(r.goal[1])) for r in robots]
    gains = [r.gain for r in robots]
    gamma = safety.gamma
    ds2 = safety.d_s * safety.d_s

    controls, mus, actives = _solve_all(pos, goals, gains, gamma, ds2, ids)
    new_pos = _advance(pos, goals, gains, gamma, ds2, ids, controls, dt, integrator)

    sols = []
    for i, r in enumerate(robots):
        multipliers = {j: mus[i].get(j, 0.0) for j in ids if j != r.id}
        ux, uy = controls[i]
        uhx = -gains[i] * (pos[i][0] - goals[i][0])
        uhy = -gains[i] * (pos[i][1] - goals[i][1])
        dx, dy = ux - uhx, uy - uhy
        sols.append(
            QPSolution(
                control=vec2(ux, uy),
                multipliers=multipliers,
                active=actives[i],
                objective=dx * dx + dy * dy,
            )
        )
    return np.array(new_pos), sols


def _advance(pos, goals, gains, gamma, ds2, ids, controls, dt, integrator):
    if integrator == "euler":
        return [
            (pos[i][0] + dt * controls[i][0], pos[i][1] + dt * controls[i][1])
            for i in range(len(pos))
        ]
    # Classic RK4 on the closed-loop field p -> u*(p): the QPs are re-solved at
    # each stage state so smooth segments converge at fourth order.
    k1 = controls

    def at(base, ks, h):
        return [(base[i][0] + h * ks[i][0], base[i][1] + h * ks[i][1]) for i in range(len(base))]

    k2, _, _ = _solve_all(at(pos, k1, 0.5 * dt), goals, gains, gamma, ds2, ids)
    k3, _, _ = _solve_all(at(pos, k2, 0.5 * dt), goals, gains, gamma, ds2, ids)
    k4, _, _ = _solve_all(at(pos, k3, dt), goals, gains, gamma, ds2, ids)
    out = []
    for i in range(len(pos)):
        dx = (k1[i][0] + 2.0 * k2[i][0] + 2.0 * k3[i][0] + k4[i][0]) / 6.0
        dy = (k1[i][1] + 2.0 * k2[i][1] + 2.0 * k3[i][1] + k4[i][1]) / 6.0
        out.append((pos[i][0] + dt * dx, pos[i][1] + dt * dy))
    return out


def run(scenario: Scenario, config: SimConfig, detectors=()) -> SimTrace:
    """Closed-loop run over [0, horizon]; deterministic for identical inputs.

    Active-set switches are emitted as events stamped with the later step's
    time.  `detectors` are streaming monitors with an
    `update(t, ids, positions, goals, controls) -> list[Event]` method.
    """
    scenario.validate()
    robots = scenario.robots
    ids = [r.id for r in robots]
    pos = [(float(r.position[0]), float(r.position[1])) for r in robots]
    goals = [(float(r.goal[0]), float(r.goal[1])) for r in robots]
    gains = [r.gain for r in robots]
    gamma = scenario.safety.gamma
    ds2 = scenario.safety.d_s ** 2
    dt = config.dt
    n_steps = int(round(config.horizon / dt))

    rec = TraceRecorder(ids)
    prev_active = None
    for k in range(n_steps + 1):
        t = k * dt
        try:
            controls, mus, actives = _solve_all(pos, goals, gains, gamma, ds2, ids)
        except Exception as exc:
            raise type(exc)(f"at t={t:.6g}: {exc}") from exc

        if prev_active is not None:
            for i, rid in enumerate(ids):
                gained = actives[i] - prev_active[i]
                lost = prev_active[i] - actives[i]
                for j in sorted(gained):
                    rec.events.append(Event(t, EVENT_CONSTRAINT_ACTIVATED, rid, j))
                for j in sorted(lost):
                    rec.events.append(Event(t, EVENT_CONSTRAINT_DEACTIVATED, rid, j))
        prev_active = actives

        for det in detectors:
            rec.events.extend(det.update(t, ids, pos, goals, controls))

        if k % config.record_every == 0 or k == n_steps:
            rec.record(t, pos, controls, mus, actives)
        if k == n_steps:
            break
        try:
            pos = _advance(pos, goals, gains, gamma, ds2, ids, controls, dt, config.integrator)
        except Exception as exc:
            raise type(exc)(f"at t={t:.6g}: {exc}") from exc
    return rec.finalize()


def export_trace(trace: SimTrace, out_dir) -> Path:
    """Write trace.csv, distances.csv and events.csv under out_dir.

    Floats are serialized with 17 significant digits so every recorded sample
    round-trips exactly.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = len(trace.robot_ids)

    with open(out / "trace.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["t", "robot_id", "px", "py", "ux", "uy", "active_ids"]
            + [f"mu_{rid}" for rid in trace.robot_ids]
        )
        for k, t in enumerate(trace.times):
            for i, rid in enumerate(trace.robot_ids):
                act = ";".join(
                    str(trace.robot_ids[j]) for j in range(n) if trace.active[k, i, j]
                )
                w.writerow(
                    [_FLOAT_FMT % t, rid]
                    + [_FLOAT_FMT % v for v in (*trace.positions[k, i], *trace.controls[k, i])]
                    + [act]
                    + [_FLOAT_FMT % trace.multipliers[k, i, j] for j in range(n)]
                )

    with open(out / "distances.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "i", "j", "dist"])
        for k, t in enumerate(trace.times):
            for col, (ri, rj) in enumerate(trace.pairs):
                w.writerow([_FLOAT_FMT % t, ri, rj, _FLOAT_FMT % trace.distances[k, col]])

    with open(out / "events.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "kind", "robot", "neighbor"])
        for ev in trace.events:
            w.writerow(
                [_FLOAT_FMT % ev.time, ev.kind, ev.robot, "" if ev.neighbor is None else ev.neighbor]
            )
    return out


def load_trace(trace_dir) -> SimTrace:
    """Reconstruct a SimTrace from an exported directory (lossless for samples)."""
    trace_dir = Path(trace_dir)
    by_time: dict[float, dict[int, tuple]] = {}
    order: list[float] = []
    ids_seen: list[int] = []
    with open(trace_dir / "trace.csv", newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        mu_ids = [int(c[3:]) for c in header[7:]]
        for row in r:
            t = float(row[0])
            rid = int(row[1])
            if rid not in ids_seen:
                ids_seen.append(rid)
            if t not in by_time:
                by_time[t] = {}
                order.append(t)
            act = frozenset(int(s) for s in row[6].split(";") if s)
            mus = {mu_ids[j]: float(v) for j, v in enumerate(row[7:])}
            by_time[t][rid] = (
                (float(row[2]), float(row[3])),
                (float(row[4]), float(row[5])),
                act,
                mus,
            )

    rec = TraceRecorder(ids_seen)
    for t in order:
        sample = by_time[t]
        pos = [sample[rid][0] for rid in ids_seen]
        ctrl = [sample[rid][1] for rid in ids_seen]
        actives = [sample[rid][2] for rid in ids_seen]
        mus = [
            {j: mu for j, mu in sample[rid][3].items() if j != rid}
            for rid in ids_seen
        ]
        rec.record(t, pos, ctrl, mus, actives)

    events_path = trace_dir / "events.csv"
    if events_path.exists():
        with open(events_path, newline="") as fh:
            r = csv.reader(fh)
            next(r)
            for row in r:
                rec.events.append(
                    Event(
                        float(row[0]),
                        row[1],
                        int(row[2]),
                        int(row[3]) if row[3] else None,
                    )
                )
    return rec.finalize()
