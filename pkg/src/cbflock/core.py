"""Shared geometric types and the elementary pairwise safety quantities.

Positions, velocities and goals are plain float64 numpy arrays of shape (2,).
All functions here are pure; everything downstream (QP controller, simulator,
predictors) is built on these definitions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError


def vec2(x: float, y: float) -> np.ndarray:
    """Build a float64 2-vector."""
    return np.array([float(x), float(y)])


def as_vec2(v) -> np.ndarray:
    """Coerce an (x, y) pair into a finite float64 2-vector."""
    arr = np.asarray(v, dtype=float)
    if arr.shape != (2,):
        raise PreconditionError(f"expected a 2-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise PreconditionError(f"vector components must be finite, got {arr}")
    return arr


def unit_vector(angle: float) -> np.ndarray:
    """Unit vector oriented at `angle` radians from the world x-axis."""
    if not math.isfinite(angle):
        raise PreconditionError("angle must be finite")
    return np.array([math.cos(angle), math.sin(angle)])


@dataclass(frozen=True)
class SafetyParams:
    """Safety margin d_s (m) and barrier rate gamma (1/s)."""

    d_s: float
    gamma: float

    def __post_init__(self):
        if not (self.d_s > 0 and math.isfinite(self.d_s)):
            raise PreconditionError(f"d_s must be positive, got {self.d_s}")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise PreconditionError(f"gamma must be positive, got {self.gamma}")


@dataclass(eq=False)
class RobotState:
    """One robot: 1-based id, position (m), goal (m), proportional gain (1/s)."""

    id: int
    position: np.ndarray
    goal: np.ndarray
    gain: float

    def __post_init__(self):
        if int(self.id) != self.id or self.id < 1:
            raise PreconditionError(f"robot id must be a positive integer, got {self.id}")
        self.id = int(self.id)
        self.position = as_vec2(self.position)
        self.goal = as_vec2(self.goal)
        self.gain = float(self.gain)
        if not (self.gain > 0 and math.isfinite(self.gain)):
            raise PreconditionError(f"gain must be positive, got {self.gain} (robot {self.id})")


@dataclass(eq=False)
class Scenario:
    """A robot team plus the shared safety parameters."""

    robots: list[RobotState]
    safety: SafetyParams

    def __post_init__(self):
        self.validate()

    def validate(self):
        if len(self.robots) < 1:
            raise PreconditionError("scenario needs at least one robot")
        ids = [r.id for r in self.robots]
        if len(set(ids)) != len(ids):
            raise PreconditionError(f"robot ids must be unique, got {ids}")
        # Initial positions must already be collision-free (distance >= d_s),
        # up to a relative float slack so exact-contact states are accepted.
        d_min = self.safety.d_s * (1.0 - 1e-12)
        for a, b in _pairs(self.robots):
            dist = float(np.linalg.norm(a.position - b.position))
            if dist < d_min:
                raise PreconditionError(
                    f"robots {a.id} and {b.id} start {dist:.6g} m apart, "
                    f"below the safety margin {self.safety.d_s:.6g}"
                )


def _pairs(robots):
    for i in range(len(robots)):
        for j in range(i + 1, len(robots)):
            yield robots[i], robots[j]


def pairwise_safety(pi, pj, safety: SafetyParams) -> float:
    """Safety index h = ||pi - pj||^2 - d_s^2 (nonnegative iff the pair is safe)."""
    dx = float(pi[0]) - float(pj[0])
    dy = float(pi[1]) - float(pj[1])
    return dx * dx + dy * dy - safety.d_s * safety.d_s


def constraint_coefficients(pi, pj, safety: SafetyParams) -> tuple[np.ndarray, float]:
    """Half-plane row (a, b) of the ego constraint a^T u <= b against one neighbour.

    a points from the ego robot at pi toward the neighbour at pj, and
    b = (gamma/4) h is the ego's share of the pairwise barrier budget.
    b is symmetric in the two positions by construction.
    """
    a = vec2(float(pj[0]) - float(pi[0]), float(pj[1]) - float(pi[1]))
    b = 0.25 * safety.gamma * pairwise_safety(pi, pj, safety)
    return a, b


def nominal_control(robot: RobotState) -> np.ndarray:
    """Proportional go-to-goal control; zero exactly at the goal."""
    return -robot.gain * (robot.position - robot.goal)
