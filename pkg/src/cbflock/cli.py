"""Command-line front end.

Subcommands: generate, simulate, predict, enumerate, resolve, verify, plot.
Exit codes: 0 success, 1 input/validation error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .contact_graphs import count_admissible, format_report
from .core import SafetyParams
from .deadlock import DeadlockMonitor, system_deadlock
from .errors import CbflockError, PreconditionError, ScenarioFormatError
from .predict import (
    ThreeRobotCanonical,
    TwoRobotCanonical,
    first_active_robot,
    nominal_distance_two,
    phase2_distance,
    phase3_closed_form,
    three_robot_nominal_distance,
    three_robot_phase2_closed_form,
    three_robot_timeline,
    two_robot_timeline,
)
from .resolve import run_resolution
from .scenario import (
    KIND_THREE_ROBOT,
    KIND_TWO_ROBOT,
    ScenarioBundle,
    builtin_canonical,
    emit_scenario,
    generate_canonical,
    load_scenario_file,
    parse_canonical,
    save_scenario_file,
)
from .simulate import SimConfig, export_trace, load_trace, run


def _load_bundle(ref: str, args) -> tuple[ScenarioBundle, dict | None]:
    """Resolve a scenario reference: builtin name (S1/S2) or a JSON file path."""
    canonical_meta = None
    if ref in ("S1", "S2"):
        spec = builtin_canonical(ref)
        bundle = generate_canonical(spec)
        canonical_meta = _canonical_dict(spec)
    else:
        bundle = load_scenario_file(ref)
    sim = bundle.sim
    overrides = {}
    if getattr(args, "dt", None) is not None:
        overrides["dt"] = args.dt
    if getattr(args, "horizon", None) is not None:
        overrides["horizon"] = args.horizon
    if getattr(args, "integrator", None) is not None:
        overrides["integrator"] = args.integrator
    if getattr(args, "record_every", None) is not None:
        overrides["record_every"] = args.record_every
    if overrides:
        sim = SimConfig(
            dt=overrides.get("dt", sim.dt),
            horizon=overrides.get("horizon", sim.horizon),
            integrator=overrides.get("integrator", sim.integrator),
            record_every=overrides.get("record_every", sim.record_every),
        )
        bundle = ScenarioBundle(scenario=bundle.scenario, sim=sim, detection=bundle.detection)
    return bundle, canonical_meta


def _canonical_dict(spec) -> dict:
    if isinstance(spec, TwoRobotCanonical):
        return {
            "kind": KIND_TWO_ROBOT,
            "d_init": spec.d_init,
            "d_g1": spec.d_g1,
            "d_g2": spec.d_g2,
            "k_p1": spec.k_p1,
            "k_p2": spec.k_p2,
            "alpha": spec.alpha,
            "base": [float(spec.base[0]), float(spec.base[1])],
        }
    return {
        "kind": KIND_THREE_ROBOT,
        "d_init": spec.d_init,
        "d_g": spec.d_g,
        "k_p": spec.k_p,
        "alpha": spec.alpha,
        "base": [float(spec.base[0]), float(spec.base[1])],
    }


def _write_meta(bundle: ScenarioBundle, out_dir: Path, canonical_meta: dict | None):
    meta = emit_scenario(bundle)
    if canonical_meta:
        meta["canonical"] = canonical_meta
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def _cmd_generate(args) -> int:
    if args.scenario in ("S1", "S2"):
        spec = builtin_canonical(args.scenario)
    else:
        with open(args.scenario) as fh:
            spec = parse_canonical(json.load(fh))
    bundle = generate_canonical(spec)
    if args.out:
        save_scenario_file(bundle, args.out)
        print(f"wrote {args.out}")
    else:
        print(json.dumps(emit_scenario(bundle), indent=2))
    return 0


def _cmd_simulate(args) -> int:
    bundle, canonical_meta = _load_bundle(args.scenario, args)
    monitor = DeadlockMonitor(bundle.detection)
    trace = run(bundle.scenario, bundle.sim, detectors=[monitor])
    out = Path(args.out)
    export_trace(trace, out)
    _write_meta(bundle, out, canonical_meta)
    final = trace.distances[-1]
    print(f"simulated {bundle.sim.horizon} s, {len(trace.times)} samples -> {out}")
    for col, (i, j) in enumerate(trace.pairs):
        print(f"  final distance {i}-{j}: {final[col]:.6f}")
    print(f"  events: {len(trace.events)} (deadlocked robots: {sorted(monitor.flagged)})")
    return 0


def _cmd_predict(args) -> int:
    if args.spec in ("S1", "S2"):
        spec = builtin_canonical(args.spec)
    else:
        with open(args.spec) as fh:
            spec = parse_canonical(json.load(fh))
    if isinstance(spec, TwoRobotCanonical):
        tl = two_robot_timeline(spec)
        first = first_active_robot(spec)
        print(f"t1 = {tl.t1:.9f} s (robot {first} constraint activates)")
        print(f"t2 = {tl.t2:.9f} s (second constraint activates)")
        print(f"D(t1) = {tl.d_at_t1:.9f} m, D(t2) = {tl.d_at_t2:.9f} m")
        print(f"limit distance = {tl.limit_distance} m")
        if args.samples:
            t_end = tl.t2 + 5.0 / spec.safety.gamma
            print("t,D_pred,phase")
            for t in np.linspace(0.0, t_end, args.samples):
                if t <= tl.t1:
                    d, phase = nominal_distance_two(spec, t), 1
                elif t <= tl.t2:
                    d, phase = phase2_distance(spec, tl.t1, t), 2
                else:
                    d, phase = phase3_closed_form(tl.d_at_t2, tl.t2, t, spec.safety), 3
                print(f"{t:.6f},{d:.9f},{phase}")
    else:
        tl = three_robot_timeline(spec)
        print(f"t1 = {tl.t1:.9f} s (all six constraints activate)")
        print(f"D(t1) = {tl.d_at_t1:.9f} m")
        print(f"limit distance = {tl.limit_distance} m")
        if args.samples:
            t_end = tl.t1 + 5.0 / spec.safety.gamma
            print("t,D_pred,phase")
            for t in np.linspace(0.0, t_end, args.samples):
                if t <= tl.t1:
                    d, phase = three_robot_nominal_distance(spec, t), 1
                else:
                    d, phase = three_robot_phase2_closed_form(tl.d_at_t1, tl.t1, t, spec.safety), 2
                print(f"{t:.6f},{d:.9f},{phase}")
    return 0


def _cmd_enumerate(args) -> int:
    safety = SafetyParams(d_s=args.d_s, gamma=1.0)
    report = count_admissible(args.n, safety, restarts=args.restarts, seed=args.seed)
    print(format_report(report))
    return 0


def _cmd_resolve(args) -> int:
    bundle, canonical_meta = _load_bundle(args.scenario, args)
    trace, report = run_resolution(
        bundle.scenario,
        bundle.sim,
        thresholds=bundle.detection,
        rotation_gain=args.rotation_gain,
        distance_gain=args.distance_gain,
        eps_theta=args.eps_theta,
    )
    out = Path(args.out)
    export_trace(trace, out)
    _write_meta(bundle, out, canonical_meta)
    summary = {
        "phase2_enter": report.phase2_enter,
        "phase3_enter": report.phase3_enter,
        "done_time": report.done_time,
        "min_pairwise_distance": report.min_pairwise_distance,
        "final_goal_errors": report.final_goal_errors,
        "phase3_monotone": report.phase3_monotone,
    }
    (out / "resolution.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"resolution complete -> {out}")
    for key, value in summary.items():
        print(f"  {key}: {value}")
    return 0


def _cmd_verify(args) -> int:
    bundle, _ = _load_bundle(args.scenario, args)
    flag, certs = system_deadlock(
        bundle.scenario.robots, bundle.scenario.safety, tol=args.tol
    )
    print(f"system deadlock: {flag}")
    for cert in certs:
        mus = {j: f"{mu:.6g}" for j, mu in cert.multipliers.items()}
        print(
            f"robot {cert.robot}: valid={cert.valid} separation_ok={cert.separation_ok} "
            f"min_sep={cert.min_separation:.6g} active={sorted(cert.active)} "
            f"mu={mus} stationarity={cert.stationarity_residual:.3e} at_goal={cert.at_goal}"
        )
    return 0


def _cmd_plot(args) -> int:
    from .plots import plot_distances, plot_paths

    trace_dir = Path(args.trace_dir)
    trace = load_trace(trace_dir)
    meta = None
    meta_path = trace_dir / "meta.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
    out_dir = Path(args.out) if args.out else trace_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    d = plot_distances(trace, out_dir / "distances.svg", meta)
    p = plot_paths(trace, out_dir / "paths.svg", meta)
    print(f"wrote {d}\nwrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cbflock",
        description="CBF-QP collision avoidance with deadlock analysis and resolution",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="emit a scenario file from a canonical spec")
    p.add_argument("scenario", help="S1, S2 or a canonical-spec JSON path")
    p.add_argument("--out", help="output scenario JSON path (default: stdout)")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("simulate", help="closed-loop run, exporting CSV traces")
    p.add_argument("scenario", help="scenario JSON path, or S1/S2")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dt", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--integrator", choices=["euler", "rk4"])
    p.add_argument("--record-every", dest="record_every", type=int)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("predict", help="closed-form phase timeline for a canonical scenario")
    p.add_argument("spec", help="S1, S2 or a canonical-spec JSON path")
    p.add_argument("--samples", type=int, default=0, help="also print N curve samples")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("enumerate", help="count admissible deadlock contact graphs")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--restarts", type=int, default=200)
    p.add_argument("--d-s", dest="d_s", type=float, default=1.0)
    p.set_defaults(func=_cmd_enumerate)

    p = sub.add_parser("resolve", help="run the three-phase deadlock resolution")
    p.add_argument("scenario", help="scenario JSON path, or S1/S2")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dt", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--rotation-gain", dest="rotation_gain", type=float)
    p.add_argument("--distance-gain", dest="distance_gain", type=float)
    p.add_argument("--eps-theta", dest="eps_theta", type=float, default=1e-6)
    p.set_defaults(func=_cmd_resolve)

    p = sub.add_parser("verify", help="deadlock-set membership certificates for a state")
    p.add_argument("scenario", help="scenario JSON path, or S1/S2")
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("plot", help="render SVG plots from an exported trace directory")
    p.add_argument("trace_dir")
    p.add_argument("--out", help="output directory (default: the trace directory)")
    p.set_defaults(func=_cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; map those to validation errors.
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ScenarioFormatError, PreconditionError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CbflockError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
