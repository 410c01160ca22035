"""Per-robot CBF-QP solved exactly by active-set enumeration.

The decision variable is the planar velocity u, so the optimal active set has
at most two linearly independent rows.  Enumerating candidate subsets of size
0, 1 and 2 in lexicographic order and certifying each against the KKT
conditions yields the exact global minimizer without iterative-solver
tolerance drift.  A machine-checkable KKT certificate can be recomputed from
any solution independently of how it was produced.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RobotState, SafetyParams, constraint_coefficients, vec2
from .errors import DegenerateGeometryError, InfeasibleQPError

# Absolute tolerance for "constraint satisfied" during candidate certification.
FEAS_TOL = 1e-10


@dataclass(eq=False)
class ConstraintRow:
    neighbor: int
    a: np.ndarray
    b: float


@dataclass(eq=False)
class ConstraintSet:
    """All collision-avoidance rows of one robot's QP (one row per other robot)."""

    owner: int
    rows: list[ConstraintRow]


@dataclass(eq=False)
class QPSolution:
    """Optimal control, multipliers keyed by neighbor id, certified active set."""

    control: np.ndarray
    multipliers: dict[int, float]
    active: frozenset[int]
    objective: float


@dataclass(frozen=True)
class KKTCertificate:
    """Residuals of the four KKT conditions; all zero (to roundoff) at an optimum."""

    stationarity_residual: float
    primal_violation: float
    dual_violation: float
    comp_slackness_residual: float

    def max_residual(self) -> float:
        return max(
            self.stationarity_residual,
            self.primal_violation,
            self.dual_violation,
            self.comp_slackness_residual,
        )


def build_constraints(ego: RobotState, others: list[RobotState], safety: SafetyParams) -> ConstraintSet:
    """One constraint row per non-ego robot.

    Raises DegenerateGeometryError if the ego coincides with a neighbour
    (the row direction would vanish).
    """
    rows = []
    for other in others:
        a, b = constraint_coefficients(ego.position, other.position, safety)
        if a[0] == 0.0 and a[1] == 0.0:
            raise DegenerateGeometryError(
                f"robots {ego.id} and {other.id} coincide; constraint direction undefined"
            )
        rows.append(ConstraintRow(other.id, a, b))
    return ConstraintSet(ego.id, rows)


def active_single_multiplier(a, b: float, nominal) -> float:
    """Multiplier of a single active row: mu = 2 (a^T u_hat - b) / ||a||^2."""
    ax, ay = float(a[0]), float(a[1])
    norm2 = ax * ax + ay * ay
    if norm2 == 0.0:
        raise DegenerateGeometryError("active constraint with zero direction")
    return 2.0 * (ax * float(nominal[0]) + ay * float(nominal[1]) - b) / norm2


def _solve_rows(uhx: float, uhy: float, rows) -> tuple[float, float, dict[int, float], tuple[int, ...]]:
    """Exact solve on plain floats; rows are (neighbor, ax, ay, b) tuples.

    Candidate active subsets are tested in lexicographic order of their sorted
    neighbor ids, so under degeneracy the smallest certified set wins.
    """
    m = len(rows)
    if m == 0:
        return uhx, uhy, {}, ()

    # Empty active set: nominal must satisfy every row.
    feasible = True
    for (_, ax, ay, b) in rows:
        if ax * uhx + ay * uhy > b + FEAS_TOL:
            feasible = False
            break
    if feasible:
        return uhx, uhy, {}, ()

    order = sorted(range(m), key=lambda k: rows[k][0])
    for pos1 in range(m):
        j, ajx, ajy, bj = rows[order[pos1]]
        na2 = ajx * ajx + ajy * ajy
        if na2 == 0.0:
            raise DegenerateGeometryError(f"zero constraint direction for neighbor {j}")
        # Single active row {j}.
        mu = 2.0 * (ajx * uhx + ajy * uhy - bj) / na2
        if mu >= 0.0:
            ux = uhx - 0.5 * mu * ajx
            uy = uhy - 0.5 * mu * ajy
            ok = True
            for idx2 in range(m):
                if idx2 == order[pos1]:
                    continue
                _, ax, ay, b = rows[idx2]
                if ax * ux + ay * uy > b + FEAS_TOL:
                    ok = False
                    break
            if ok:
                return ux, uy, {j: mu}, (j,)
        # Pairs {j, k} with k after j in id order.
        for pos2 in range(pos1 + 1, m):
            k, akx, aky, bk = rows[order[pos2]]
            det = ajx * aky - ajy * akx
            # Parallel active pair: singular 2x2 system, not a candidate.
            scale = max(abs(ajx), abs(ajy)) * max(abs(akx), abs(aky))
            if abs(det) <= 1e-14 * max(scale, 1e-300):
                continue
            ux = (bj * aky - bk * ajy) / det
            uy = (ajx * bk - akx * bj) / det
            rx = 2.0 * (uhx - ux)
            ry = 2.0 * (uhy - uy)
            mu_j = (rx * aky - ry * akx) / det
            mu_k = (ajx * ry - ajy * rx) / det
            if mu_j < 0.0 or mu_k < 0.0:
                continue
            ok = True
            for idx2 in range(m):
                if idx2 == order[pos1] or idx2 == order[pos2]:
                    continue
                _, ax, ay, b = rows[idx2]
                if ax * ux + ay * uy > b + FEAS_TOL:
                    ok = False
                    break
            if ok:
                return ux, uy, {j: mu_j, k: mu_k}, (j, k)

    raise InfeasibleQPError(
        "no candidate active set certifies; the state violates pairwise safety "
        "beyond the feasible cone (likely an integration-step bug)"
    )


def solve_cbf_qp(nominal, constraints: ConstraintSet) -> QPSolution:
    """Exact global minimizer of ||u - u_hat||^2 subject to all rows."""
    uhx, uhy = float(nominal[0]), float(nominal[1])
    rows = [(r.neighbor, float(r.a[0]), float(r.a[1]), float(r.b)) for r in constraints.rows]
    ux, uy, mus, active = _solve_rows(uhx, uhy, rows)
    dx, dy = ux - uhx, uy - uhy
    multipliers = {r.neighbor: mus.get(r.neighbor, 0.0) for r in constraints.rows}
    return QPSolution(
        control=vec2(ux, uy),
        multipliers=multipliers,
        active=frozenset(active),
        objective=dx * dx + dy * dy,
    )


def verify_kkt(nominal, constraints: ConstraintSet, sol: QPSolution) -> KKTCertificate:
    """Recompute the four KKT residuals from scratch.

    Independent of how `sol` was produced: any claimed solution can be checked.
    """
    u = np.asarray(sol.control, dtype=float)
    uh = np.asarray(nominal, dtype=float)
    recon = uh.copy()
    primal = 0.0
    comp = 0.0
    dual = 0.0
    for row in constraints.rows:
        mu = float(sol.multipliers.get(row.neighbor, 0.0))
        slack = float(row.a @ u) - row.b
        primal = max(primal, slack)
        comp = max(comp, abs(mu * slack))
        dual = max(dual, -mu)
        recon -= 0.5 * mu * row.a
    return KKTCertificate(
        stationarity_residual=float(np.linalg.norm(u - recon)),
        primal_violation=max(0.0, primal),
        dual_violation=max(0.0, dual),
        comp_slackness_residual=comp,
    )
