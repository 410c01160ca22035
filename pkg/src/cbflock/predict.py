"""Closed-form and semi-analytical predictions for the canonical scenarios.

Two robots facing each other on a line, and three robots on an equilateral
triangle stabilizing to antipodal goals.  Everything here is scalar math in
scenario-local coordinates (distances along the line of motion), so all
predictions are invariant to the scenario orientation alpha by construction.
These curves are the independent oracle the closed-loop simulator is checked
against.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import SafetyParams, as_vec2
from .errors import NoCrossingError, PreconditionError

_SQRT3 = math.sqrt(3.0)


@dataclass(eq=False)
class TwoRobotCanonical:
    """Two robots on the line joining their goals, approaching head-on.

    d_init is the starting separation, d_g1/d_g2 the robot-to-goal distances,
    k_p1/k_p2 the proportional gains, alpha the line orientation and base the
    world position of robot 1 at t=0.
    """

    d_init: float
    d_g1: float
    d_g2: float
    k_p1: float
    k_p2: float
    alpha: float
    base: np.ndarray
    safety: SafetyParams

    def __post_init__(self):
        self.base = as_vec2(self.base)
        if not (self.d_init > self.safety.d_s):
            raise PreconditionError(
                f"d_init={self.d_init} must exceed the safety margin d_s={self.safety.d_s}"
            )
        for name, d_g in (("d_g1", self.d_g1), ("d_g2", self.d_g2)):
            if not (d_g > self.d_init):
                raise PreconditionError(f"{name}={d_g} must exceed d_init={self.d_init}")
        if self.k_p1 <= 0 or self.k_p2 <= 0:
            raise PreconditionError("gains must be positive")


@dataclass(eq=False)
class ThreeRobotCanonical:
    """Three identical robots on an equilateral triangle with antipodal goals."""

    d_init: float
    d_g: float
    k_p: float
    alpha: float
    base: np.ndarray
    safety: SafetyParams

    def __post_init__(self):
        self.base = as_vec2(self.base)
        if not (self.d_init > self.safety.d_s):
            raise PreconditionError(
                f"d_init={self.d_init} must exceed the safety margin d_s={self.safety.d_s}"
            )
        if not (_SQRT3 * self.d_g > self.d_init):
            raise PreconditionError(
                f"sqrt(3)*d_g={_SQRT3 * self.d_g:.6g} must exceed d_init={self.d_init}"
            )
        if self.k_p <= 0:
            raise PreconditionError("gain must be positive")


@dataclass(frozen=True)
class PhaseTimeline:
    """Predicted phase-transition times and the distances at which they occur."""

    t1: float
    t2: float | None
    d_at_t1: float
    d_at_t2: float | None
    limit_distance: float


def beta_plus_static(d_g: float, k_p: float, safety: SafetyParams) -> float:
    """Critical separation below which the nominal control violates the barrier.

    Positive root of the downward parabola -(g/4)D^2 + d_g k_p D + (g/4)d_s^2;
    always exceeds d_s.
    """
    c = 2.0 * d_g * k_p / safety.gamma
    return c + math.sqrt(c * c + safety.d_s * safety.d_s)


def beta_plus_timed(d_g: float, k_p: float, t: float, safety: SafetyParams) -> float:
    """Critical separation at time t while the robot still tracks its goal.

    Same root with the goal distance decayed to d_g e^{-k_p t}; decreases
    monotonically to d_s.
    """
    if t < 0:
        raise PreconditionError("t must be nonnegative")
    c = 2.0 * d_g * k_p * math.exp(-k_p * t) / safety.gamma
    return c + math.sqrt(c * c + safety.d_s * safety.d_s)


def nominal_distance_two(c: TwoRobotCanonical, t: float) -> float:
    """Separation while both robots follow their nominal controllers (phase 1)."""
    K = c.d_g1 + c.d_g2 - c.d_init
    return c.d_g1 * math.exp(-c.k_p1 * t) + c.d_g2 * math.exp(-c.k_p2 * t) - K


def _robot_params(c: TwoRobotCanonical):
    return ((c.d_g1, c.k_p1), (c.d_g2, c.k_p2))


def _bisect(f, lo: float, hi: float, iters: int = 200) -> float:
    f_lo = f(lo)
    f_hi = f(hi)
    if f_lo == 0.0:
        return lo
    if f_lo * f_hi > 0.0:
        raise NoCrossingError(
            f"no sign change on [{lo:.6g}, {hi:.6g}] (f={f_lo:.3g} .. {f_hi:.3g})"
        )
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        f_mid = f(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid > 0.0) == (f_lo > 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _crossing_times(c: TwoRobotCanonical) -> list[float]:
    """Per-robot time at which the phase-1 separation meets its critical curve."""
    t_max = 20.0 / min(c.k_p1, c.k_p2)
    times = []
    for d_g, k_p in _robot_params(c):
        beta0 = beta_plus_static(d_g, k_p, c.safety)
        if not (c.d_init > beta0):
            raise NoCrossingError(
                f"d_init={c.d_init:.6g} must exceed the critical distance "
                f"{beta0:.6g} (constraint already active at t=0)"
            )
        f = lambda t, d_g=d_g, k_p=k_p: nominal_distance_two(c, t) - beta_plus_timed(
            d_g, k_p, t, c.safety
        )
        times.append(_bisect(f, 0.0, t_max))
    return times


def find_t1(c: TwoRobotCanonical) -> float:
    """End of phase 1: first time the separation meets either critical curve."""
    return min(_crossing_times(c))


def first_active_robot(c: TwoRobotCanonical) -> int:
    """1-based index of the robot whose constraint activates first."""
    times = _crossing_times(c)
    return 1 if times[0] <= times[1] else 2


def _phase2_rhs(c: TwoRobotCanonical, free_idx: int):
    d_g, k_p = _robot_params(c)[free_idx]
    g = c.safety.gamma
    ds2 = c.safety.d_s * c.safety.d_s

    def rhs(t: float, d: float) -> float:
        return -g * (d * d - ds2) / (4.0 * d) - k_p * d_g * math.exp(-k_p * t)

    return rhs


def _rk4_march(rhs, t0: float, d0: float, t1: float, h: float) -> float:
    """Fixed-step RK4 from (t0, d0) to t1 (final partial step lands exactly)."""
    t, d = t0, d0
    while t < t1:
        step = min(h, t1 - t)
        k1 = rhs(t, d)
        k2 = rhs(t + 0.5 * step, d + 0.5 * step * k1)
        k3 = rhs(t + 0.5 * step, d + 0.5 * step * k2)
        k4 = rhs(t + step, d + step * k3)
        d += (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += step
    return d


def phase2_distance(c: TwoRobotCanonical, t1: float, t: float) -> float:
    """Separation during phase 2 (one constraint active, the other nominal).

    Integrates the scalar relative dynamics with fixed-step RK4 from the
    phase-1 endpoint; valid for t in [t1, t2].
    """
    if t < t1:
        raise PreconditionError("phase2_distance is only valid for t >= t1")
    free_idx = 2 - first_active_robot(c)  # 0-based index of the still-nominal robot
    rhs = _phase2_rhs(c, free_idx)
    d0 = nominal_distance_two(c, t1)
    h = 1e-4 / c.safety.gamma
    return _rk4_march(rhs, t1, d0, t, h)


def find_t2(c: TwoRobotCanonical, t1: float) -> float:
    """End of phase 2: the still-nominal robot's constraint activates.

    Marches the phase-2 ODE until the separation crosses the free robot's
    critical curve, then bisects inside the bracketing step.  Equals t1 for
    symmetric parameters (both constraints activate together).
    """
    first = first_active_robot(c)
    free_idx = 2 - first
    d_g, k_p = _robot_params(c)[free_idx]
    rhs = _phase2_rhs(c, free_idx)
    h = 1e-4 / c.safety.gamma

    def gap(t: float, d: float) -> float:
        return d - beta_plus_timed(d_g, k_p, t, c.safety)

    t, d = t1, nominal_distance_two(c, t1)
    if gap(t, d) <= 0.0:
        return t1
    t_max = t1 + 20.0 / min(c.k_p1, c.k_p2)
    while t < t_max:
        t_next = min(t + h, t_max)
        d_next = _rk4_march(rhs, t, d, t_next, h)
        if gap(t_next, d_next) <= 0.0:
            f = lambda tau: gap(tau, _rk4_march(rhs, t, d, tau, h))
            return _bisect(f, t, t_next)
        t, d = t_next, d_next
    raise NoCrossingError("phase-2 separation never reached the second critical curve")


def phase3_closed_form(d_t2: float, t2: float, t: float, safety: SafetyParams) -> float:
    """Separation once both constraints are active: exponential decay to d_s."""
    if t < t2:
        raise PreconditionError("phase3_closed_form is only valid for t >= t2")
    if d_t2 < safety.d_s:
        raise PreconditionError("initial separation below the safety margin")
    ds2 = safety.d_s * safety.d_s
    return math.sqrt((d_t2 * d_t2 - ds2) * math.exp(-safety.gamma * (t - t2)) + ds2)


def two_robot_timeline(c: TwoRobotCanonical) -> PhaseTimeline:
    t1 = find_t1(c)
    t2 = find_t2(c, t1)
    d1 = nominal_distance_two(c, t1)
    d2 = d1 if t2 == t1 else phase2_distance(c, t1, t2)
    return PhaseTimeline(t1=t1, t2=t2, d_at_t1=d1, d_at_t2=d2, limit_distance=c.safety.d_s)


def three_robot_beta_plus_static(c: ThreeRobotCanonical) -> float:
    """Common critical separation of the symmetric three-robot scenario."""
    s = _SQRT3 * c.d_g * c.k_p / c.safety.gamma
    return s + math.sqrt(s * s + c.safety.d_s * c.safety.d_s)


def _three_robot_beta_timed(c: ThreeRobotCanonical, t: float) -> float:
    s = _SQRT3 * c.d_g * c.k_p * math.exp(-c.k_p * t) / c.safety.gamma
    return s + math.sqrt(s * s + c.safety.d_s * c.safety.d_s)


def three_robot_nominal_distance(c: ThreeRobotCanonical, t: float) -> float:
    """Common pairwise separation while all robots run their nominal controls."""
    return (c.d_init - _SQRT3 * c.d_g) + _SQRT3 * c.d_g * math.exp(-c.k_p * t)


def three_robot_find_t1(c: ThreeRobotCanonical) -> float:
    """Time at which all six constraints activate simultaneously."""
    beta0 = three_robot_beta_plus_static(c)
    if not (c.d_init > beta0):
        raise NoCrossingError(
            f"d_init={c.d_init:.6g} must exceed the critical distance {beta0:.6g}"
        )
    f = lambda t: three_robot_nominal_distance(c, t) - _three_robot_beta_timed(c, t)
    return _bisect(f, 0.0, 20.0 / c.k_p)


def three_robot_phase2_closed_form(
    d_t1: float, t1: float, t: float, safety: SafetyParams
) -> float:
    """Separation after all constraints are active: exponential decay to d_s."""
    if t < t1:
        raise PreconditionError("valid only for t >= t1")
    ds2 = safety.d_s * safety.d_s
    return math.sqrt((d_t1 * d_t1 - ds2) * math.exp(-safety.gamma * (t - t1)) + ds2)


def three_robot_timeline(c: ThreeRobotCanonical) -> PhaseTimeline:
    t1 = three_robot_find_t1(c)
    return PhaseTimeline(
        t1=t1,
        t2=None,
        d_at_t1=three_robot_nominal_distance(c, t1),
        d_at_t2=None,
        limit_distance=c.safety.d_s,
    )
