"""Scenario files (strict JSON schema) and canonical scenario generation.

Files are parsed strictly: unknown keys are rejected and every violation
reports the offending field path, so a typo cannot silently change the
physics of a run.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import RobotState, SafetyParams, Scenario, unit_vector
from .deadlock import DeadlockThresholds
from .errors import PreconditionError, ScenarioFormatError
from .predict import (
    ThreeRobotCanonical,
    TwoRobotCanonical,
    beta_plus_static,
    three_robot_beta_plus_static,
)
from .simulate import SimConfig

SCHEMA_VERSION = 1

KIND_TWO_ROBOT = "two_robot_collinear"
KIND_THREE_ROBOT = "three_robot_antipodal"


@dataclass(eq=False)
class ScenarioBundle:
    """Everything a scenario file describes: team, integration, detection."""

    scenario: Scenario
    sim: SimConfig
    detection: DeadlockThresholds


def _require(mapping, key, path, kind=None):
    if key not in mapping:
        raise ScenarioFormatError(f"missing field: {path}.{key}")
    value = mapping[key]
    if kind is not None and not isinstance(value, kind):
        raise ScenarioFormatError(
            f"field {path}.{key} has type {type(value).__name__}"
        )
    return value


def _check_keys(mapping, allowed, path):
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise ScenarioFormatError(f"unknown field(s) at {path}: {sorted(unknown)}")


def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioFormatError(f"field {path} must be a number")
    if not math.isfinite(value):
        raise ScenarioFormatError(f"field {path} must be finite")
    return float(value)


def _point(value, path):
    if not (isinstance(value, list) and len(value) == 2):
        raise ScenarioFormatError(f"field {path} must be a [x, y] pair")
    return [_number(value[0], path + "[0]"), _number(value[1], path + "[1]")]


def parse_scenario(data: dict) -> ScenarioBundle:
    """Validate a scenario dict; raises ScenarioFormatError with the field path."""
    if not isinstance(data, dict):
        raise ScenarioFormatError("scenario must be a JSON object")
    _check_keys(data, {"schema_version", "robots", "safety", "sim", "detection"}, "$")
    version = _require(data, "schema_version", "$", int)
    if version != SCHEMA_VERSION:
        raise ScenarioFormatError(
            f"unsupported schema_version {version} (expected {SCHEMA_VERSION})"
        )

    robots_raw = _require(data, "robots", "$", list)
    robots = []
    for idx, r in enumerate(robots_raw):
        path = f"$.robots[{idx}]"
        if not isinstance(r, dict):
            raise ScenarioFormatError(f"{path} must be an object")
        _check_keys(r, {"id", "position", "goal", "gain"}, path)
        rid = _require(r, "id", path)
        if isinstance(rid, bool) or not isinstance(rid, int):
            raise ScenarioFormatError(f"field {path}.id must be an integer")
        try:
            robots.append(
                RobotState(
                    id=rid,
                    position=_point(_require(r, "position", path), path + ".position"),
                    goal=_point(_require(r, "goal", path), path + ".goal"),
                    gain=_number(_require(r, "gain", path), path + ".gain"),
                )
            )
        except PreconditionError as exc:
            raise ScenarioFormatError(f"{path}: {exc}") from exc

    safety_raw = _require(data, "safety", "$", dict)
    _check_keys(safety_raw, {"d_s", "gamma"}, "$.safety")
    try:
        safety = SafetyParams(
            d_s=_number(_require(safety_raw, "d_s", "$.safety"), "$.safety.d_s"),
            gamma=_number(_require(safety_raw, "gamma", "$.safety"), "$.safety.gamma"),
        )
        scenario = Scenario(robots=robots, safety=safety)
    except PreconditionError as exc:
        raise ScenarioFormatError(str(exc)) from exc

    sim_raw = data.get("sim", {})
    _check_keys(sim_raw, {"dt", "horizon", "integrator", "record_every"}, "$.sim")
    try:
        sim = SimConfig(
            dt=_number(sim_raw.get("dt", 1e-3), "$.sim.dt"),
            horizon=_number(sim_raw.get("horizon", 30.0), "$.sim.horizon"),
            integrator=sim_raw.get("integrator", "euler"),
            record_every=sim_raw.get("record_every", 1),
        )
    except PreconditionError as exc:
        raise ScenarioFormatError(f"$.sim: {exc}") from exc

    det_raw = data.get("detection", {})
    _check_keys(det_raw, {"eps_u", "eps_goal", "persistence"}, "$.detection")
    try:
        detection = DeadlockThresholds(
            eps_u=_number(det_raw.get("eps_u", 1e-4), "$.detection.eps_u"),
            eps_goal=_number(det_raw.get("eps_goal", 1e-2), "$.detection.eps_goal"),
            persistence=det_raw.get("persistence", 10),
        )
    except PreconditionError as exc:
        raise ScenarioFormatError(f"$.detection: {exc}") from exc

    return ScenarioBundle(scenario=scenario, sim=sim, detection=detection)


def emit_scenario(bundle: ScenarioBundle) -> dict:
    """Inverse of parse_scenario: parse(emit(b)) reproduces b exactly."""
    return {
        "schema_version": SCHEMA_VERSION,
        "robots": [
            {
                "id": r.id,
                "position": [float(r.position[0]), float(r.position[1])],
                "goal": [float(r.goal[0]), float(r.goal[1])],
                "gain": r.gain,
            }
            for r in bundle.scenario.robots
        ],
        "safety": {
            "d_s": bundle.scenario.safety.d_s,
            "gamma": bundle.scenario.safety.gamma,
        },
        "sim": {
            "dt": bundle.sim.dt,
            "horizon": bundle.sim.horizon,
            "integrator": bundle.sim.integrator,
            "record_every": bundle.sim.record_every,
        },
        "detection": {
            "eps_u": bundle.detection.eps_u,
            "eps_goal": bundle.detection.eps_goal,
            "persistence": bundle.detection.persistence,
        },
    }


def load_scenario_file(path) -> ScenarioBundle:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioFormatError(f"{path}: invalid JSON ({exc})") from exc
    return parse_scenario(data)


def save_scenario_file(bundle: ScenarioBundle, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(emit_scenario(bundle), indent=2) + "\n")
    return path


def generate_two_robot(c: TwoRobotCanonical, sim: SimConfig | None = None,
                       detection: DeadlockThresholds | None = None) -> ScenarioBundle:
    """Concrete head-on scenario: robots and goals collinear along alpha.

    All preconditions of the closed-form analysis are enforced here, each
    raising with the violated inequality spelled out.
    """
    for label, d_g, k_p in (("1", c.d_g1, c.k_p1), ("2", c.d_g2, c.k_p2)):
        beta0 = beta_plus_static(d_g, k_p, c.safety)
        if not (c.d_init > beta0):
            raise PreconditionError(
                f"d_init={c.d_init:.6g} must exceed robot {label}'s critical "
                f"distance beta_plus={beta0:.6g}"
            )
    e = unit_vector(c.alpha)
    p1 = c.base
    p2 = c.base + c.d_init * e
    robots = [
        RobotState(1, p1, p1 + c.d_g1 * e, c.k_p1),
        RobotState(2, p2, p2 - c.d_g2 * e, c.k_p2),
    ]
    return ScenarioBundle(
        scenario=Scenario(robots=robots, safety=c.safety),
        sim=sim or SimConfig(),
        detection=detection or DeadlockThresholds(),
    )


def generate_three_robot(c: ThreeRobotCanonical, sim: SimConfig | None = None,
                         detection: DeadlockThresholds | None = None) -> ScenarioBundle:
    """Equilateral triangle with goals diametrically opposite through the centroid."""
    beta0 = three_robot_beta_plus_static(c)
    if not (c.d_init > beta0):
        raise PreconditionError(
            f"d_init={c.d_init:.6g} must exceed the critical distance "
            f"beta_plus={beta0:.6g}"
        )
    p1 = c.base
    p2 = p1 + c.d_init * unit_vector(c.alpha)
    p3 = p2 + c.d_init * unit_vector(c.alpha + 2.0 * math.pi / 3.0)
    positions = [p1, p2, p3]
    centroid = sum(positions) / 3.0
    scale = math.sqrt(3.0) * c.d_g / c.d_init
    robots = [
        RobotState(i + 1, p, p + scale * (centroid - p), c.k_p)
        for i, p in enumerate(positions)
    ]
    return ScenarioBundle(
        scenario=Scenario(robots=robots, safety=c.safety),
        sim=sim or SimConfig(),
        detection=detection or DeadlockThresholds(),
    )


def parse_canonical(data: dict):
    """Parse a canonical-spec dict into a TwoRobotCanonical/ThreeRobotCanonical."""
    if not isinstance(data, dict):
        raise ScenarioFormatError("canonical spec must be a JSON object")
    kind = _require(data, "kind", "$")
    if kind == KIND_TWO_ROBOT:
        allowed = {"kind", "d_init", "d_g1", "d_g2", "k_p1", "k_p2", "alpha", "base", "safety"}
        _check_keys(data, allowed, "$")
        safety_raw = _require(data, "safety", "$", dict)
        _check_keys(safety_raw, {"d_s", "gamma"}, "$.safety")
        try:
            return TwoRobotCanonical(
                d_init=_number(_require(data, "d_init", "$"), "$.d_init"),
                d_g1=_number(_require(data, "d_g1", "$"), "$.d_g1"),
                d_g2=_number(_require(data, "d_g2", "$"), "$.d_g2"),
                k_p1=_number(_require(data, "k_p1", "$"), "$.k_p1"),
                k_p2=_number(_require(data, "k_p2", "$"), "$.k_p2"),
                alpha=_number(data.get("alpha", 0.0), "$.alpha"),
                base=_point(data.get("base", [0.0, 0.0]), "$.base"),
                safety=SafetyParams(
                    d_s=_number(_require(safety_raw, "d_s", "$.safety"), "$.safety.d_s"),
                    gamma=_number(_require(safety_raw, "gamma", "$.safety"), "$.safety.gamma"),
                ),
            )
        except PreconditionError as exc:
            raise ScenarioFormatError(str(exc)) from exc
    if kind == KIND_THREE_ROBOT:
        allowed = {"kind", "d_init", "d_g", "k_p", "alpha", "base", "safety"}
        _check_keys(data, allowed, "$")
        safety_raw = _require(data, "safety", "$", dict)
        _check_keys(safety_raw, {"d_s", "gamma"}, "$.safety")
        try:
            return ThreeRobotCanonical(
                d_init=_number(_require(data, "d_init", "$"), "$.d_init"),
                d_g=_number(_require(data, "d_g", "$"), "$.d_g"),
                k_p=_number(_require(data, "k_p", "$"), "$.k_p"),
                alpha=_number(data.get("alpha", 0.0), "$.alpha"),
                base=_point(data.get("base", [0.0, 0.0]), "$.base"),
                safety=SafetyParams(
                    d_s=_number(_require(safety_raw, "d_s", "$.safety"), "$.safety.d_s"),
                    gamma=_number(_require(safety_raw, "gamma", "$.safety"), "$.safety.gamma"),
                ),
            )
        except PreconditionError as exc:
            raise ScenarioFormatError(str(exc)) from exc
    raise ScenarioFormatError(f"unknown canonical kind {kind!r}")


def generate_canonical(spec, sim=None, detection=None) -> ScenarioBundle:
    """Dispatch on the canonical spec type."""
    if isinstance(spec, TwoRobotCanonical):
        return generate_two_robot(spec, sim, detection)
    if isinstance(spec, ThreeRobotCanonical):
        return generate_three_robot(spec, sim, detection)
    raise PreconditionError(f"unsupported canonical spec {type(spec).__name__}")


# Desk-scale defaults.  gamma is chosen large enough that the critical
# distances sit below d_init (otherwise the constraints are active from t=0
# and the three-phase timeline never appears); the gains are equal so the
# post-resolution separation follows a single exponential.
def default_s1() -> TwoRobotCanonical:
    return TwoRobotCanonical(
        d_init=2.0,
        d_g1=3.0,
        d_g2=4.0,
        k_p1=1.0,
        k_p2=1.0,
        alpha=0.0,
        base=np.zeros(2),
        safety=SafetyParams(d_s=0.5, gamma=20.0),
    )


def default_s2() -> ThreeRobotCanonical:
    return ThreeRobotCanonical(
        d_init=3.0,
        d_g=3.0,
        k_p=1.0,
        alpha=0.0,
        base=np.zeros(2),
        safety=SafetyParams(d_s=0.5, gamma=20.0),
    )


def builtin_canonical(name: str):
    presets = {"S1": default_s1, "S2": default_s2}
    if name not in presets:
        raise ScenarioFormatError(f"unknown builtin scenario {name!r} (use S1 or S2)")
    return presets[name]()
