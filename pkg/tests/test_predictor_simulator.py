"""Cross-checks between the closed-form predictor and the closed-loop simulator."""
import math

import numpy as np
import pytest

import cbflock as cb
from cbflock.predict import beta_plus_timed, first_active_robot
from conftest import first_activation_times

SQRT3 = math.sqrt(3.0)


class TestS1CurveAgreement:
    def test_phase1_nominal_curve(self, s1_run):
        c = cb.default_s1()
        t1 = cb.find_t1(c)
        trace = s1_run.trace
        sel = trace.times <= t1
        pred = [cb.nominal_distance_two(c, t) for t in trace.times[sel]]
        assert np.max(np.abs(trace.distances[sel, 0] - pred)) <= 1e-3

    def test_phase2_ode_curve(self, s1_run):
        c = cb.default_s1()
        t1 = cb.find_t1(c)
        t2 = cb.find_t2(c, t1)
        trace = s1_run.trace
        sel = (trace.times >= t1) & (trace.times <= t2)
        pred = [cb.phase2_distance(c, t1, t) for t in trace.times[sel]]
        assert np.max(np.abs(trace.distances[sel, 0] - pred)) <= 1e-3

    def test_phase3_curve(self, s1_run):
        # The simulated phase 3 starts at the (grid-quantized) second
        # activation event, so the closed form is anchored there.
        c = cb.default_s1()
        trace = s1_run.trace
        t2 = max(first_activation_times(trace).values())
        k2 = int(np.argmin(np.abs(trace.times - t2)))
        d2 = float(trace.distances[k2, 0])
        sel = trace.times >= t2
        pred = [cb.phase3_closed_form(d2, t2, t, c.safety) for t in trace.times[sel]]
        assert np.max(np.abs(trace.distances[sel, 0] - pred)) <= 1e-3

    def test_events_match_timeline(self, s1_run):
        c = cb.default_s1()
        tl = cb.two_robot_timeline(c)
        acts = first_activation_times(s1_run.trace)
        first = first_active_robot(c)
        second = 2 if first == 1 else 1
        dt = s1_run.bundle.sim.dt
        assert abs(acts[first] - tl.t1) <= 2 * dt
        assert abs(acts[second] - tl.t2) <= 2 * dt

    def test_velocity_never_leaves_the_axis(self, s1_run):
        # alpha = 0: every QP output stays on the line through goals, in all
        # phases (this is the geometric mechanism behind the deadlock).
        assert float(np.max(np.abs(s1_run.trace.controls[:, :, 1]))) <= 1e-9

    def test_deadlock_limit_gap(self, s1_run):
        c = cb.default_s1()
        tl = cb.two_robot_timeline(c)
        trace = s1_run.trace
        # Ten barrier time-constants past t2 the distance gap to d_s has
        # collapsed: the squared distance contracts at rate gamma, so the
        # amplitude contracts at gamma/2, giving an e^{-5} factor here.
        t_check = tl.t2 + 10.0 / c.safety.gamma
        k = int(np.argmin(np.abs(trace.times - t_check)))
        bound = c.d_init * math.exp(-5.0) + 1e-6
        assert trace.distances[k, 0] - c.safety.d_s <= bound


class TestS2CurveAgreement:
    def test_phase1_nominal_curve(self, s2_run):
        c = cb.default_s2()
        t1 = cb.three_robot_find_t1(c)
        trace = s2_run.trace
        sel = trace.times <= t1
        pred = [cb.three_robot_nominal_distance(c, t) for t in trace.times[sel]]
        assert np.max(np.abs(trace.distances[sel, 0] - pred)) <= 1e-3

    def test_phase2_closed_form_curve(self, s2_run):
        c = cb.default_s2()
        t1 = cb.three_robot_find_t1(c)
        d1 = cb.three_robot_nominal_distance(c, t1)
        trace = s2_run.trace
        sel = trace.times >= t1
        pred = [
            cb.three_robot_phase2_closed_form(d1, t1, t, c.safety)
            for t in trace.times[sel]
        ]
        assert np.max(np.abs(trace.distances[sel, 0] - pred)) <= 1e-3

    def test_antipodal_non_arrival(self, s2_run):
        # Robots stall with a strictly positive goal error.  The asymptotic
        # error is exactly d_g + (d_s - d_init)/sqrt(3): the robot rests at
        # d_s/sqrt(3) from the centroid, on the opposite side from its goal.
        c = cb.default_s2()
        expect = c.d_g + (c.safety.d_s - c.d_init) / SQRT3
        assert expect > 0
        trace = s2_run.trace
        scn = s2_run.bundle.scenario
        for i, r in enumerate(scn.robots):
            err = float(np.linalg.norm(trace.positions[-1, i] - r.goal))
            assert err == pytest.approx(expect, abs=1e-3)
            # Triangle-inequality lower bound derived from the relative-goal
            # mismatch; every robot must stay at least this far out.
            assert err >= (SQRT3 * c.d_g - c.d_init + c.safety.d_s) / 2.0 - 1e-3


class TestRandomizedCrossingCertificates:
    def test_crossing_residuals_across_canonical_family(self):
        # Valid canonicals sampled over a parameter box; both crossing
        # residuals must certify at their stated tolerances.
        rng = np.random.default_rng(31)
        checked = 0
        while checked < 25:
            d_init = float(rng.uniform(1.0, 3.0))
            d_g1 = d_init * float(rng.uniform(1.2, 2.5))
            d_g2 = d_init * float(rng.uniform(1.2, 2.5))
            k_p1 = float(rng.uniform(0.5, 1.5))
            k_p2 = float(rng.uniform(0.5, 1.5))
            d_s = float(rng.uniform(0.2, 0.45)) * d_init
            gamma = float(rng.uniform(15.0, 40.0))
            safety = cb.SafetyParams(d_s=d_s, gamma=gamma)
            if d_init <= max(
                cb.beta_plus_static(d_g1, k_p1, safety),
                cb.beta_plus_static(d_g2, k_p2, safety),
            ):
                continue
            c = cb.TwoRobotCanonical(
                d_init=d_init, d_g1=d_g1, d_g2=d_g2, k_p1=k_p1, k_p2=k_p2,
                alpha=float(rng.uniform(0, 2 * math.pi)), base=rng.uniform(-2, 2, 2),
                safety=safety,
            )
            t1 = cb.find_t1(c)
            t2 = cb.find_t2(c, t1)
            first = first_active_robot(c)
            params = {1: (c.d_g1, c.k_p1), 2: (c.d_g2, c.k_p2)}
            d_g, k_p = params[first]
            r1 = abs(cb.nominal_distance_two(c, t1) - beta_plus_timed(d_g, k_p, t1, safety))
            d_g, k_p = params[2 if first == 1 else 1]
            r2 = abs(cb.phase2_distance(c, t1, t2) - beta_plus_timed(d_g, k_p, t2, safety))
            assert r1 <= 1e-10, f"t1 residual {r1:.2e} for {c}"
            assert r2 <= 1e-8, f"t2 residual {r2:.2e} for {c}"
            checked += 1
