import math

import numpy as np
import pytest

import cbflock as cb
from cbflock.errors import NoCrossingError, PreconditionError
from cbflock.predict import (
    _rk4_march,
    beta_plus_timed,
    first_active_robot,
)


def make_two(d_init=2.0, d_g1=3.0, d_g2=4.0, k_p1=1.0, k_p2=1.0,
             d_s=0.5, gamma=20.0, alpha=0.0):
    return cb.TwoRobotCanonical(
        d_init=d_init, d_g1=d_g1, d_g2=d_g2, k_p1=k_p1, k_p2=k_p2,
        alpha=alpha, base=np.zeros(2), safety=cb.SafetyParams(d_s=d_s, gamma=gamma),
    )


def make_three(d_init=3.0, d_g=3.0, k_p=1.0, d_s=0.5, gamma=20.0, alpha=0.0):
    return cb.ThreeRobotCanonical(
        d_init=d_init, d_g=d_g, k_p=k_p, alpha=alpha, base=np.zeros(2),
        safety=cb.SafetyParams(d_s=d_s, gamma=gamma),
    )


class TestBetaPlusStatic:
    def test_worked_example(self):
        s = cb.SafetyParams(d_s=0.5, gamma=1.0)
        val = cb.beta_plus_static(3.0, 1.0, s)
        assert val == pytest.approx(6.0 + math.sqrt(36.25), abs=1e-12)
        assert val == pytest.approx(12.020797289396148, abs=1e-9)

    def test_is_root_of_the_flag_parabola(self):
        # g(D) = -(gamma/4) D^2 + d_g k_p D + (gamma/4) d_s^2 must vanish at beta.
        s = cb.SafetyParams(d_s=0.5, gamma=1.0)
        d_g, k_p = 3.0, 1.0
        beta = cb.beta_plus_static(d_g, k_p, s)
        g = -(s.gamma / 4) * beta**2 + d_g * k_p * beta + (s.gamma / 4) * s.d_s**2
        assert abs(g) <= 1e-10

    def test_small_gain_limit(self):
        s = cb.SafetyParams(d_s=0.5, gamma=1.0)
        assert cb.beta_plus_static(3.0, 1e-12, s) == pytest.approx(0.5, abs=1e-9)

    def test_second_example(self):
        s = cb.SafetyParams(d_s=1.0, gamma=2.0)
        assert cb.beta_plus_static(1.0, 1.0, s) == pytest.approx(1.0 + math.sqrt(2.0), abs=1e-12)

    def test_always_exceeds_margin(self):
        s = cb.SafetyParams(d_s=0.7, gamma=3.0)
        for d_g in (0.1, 1.0, 10.0):
            for k_p in (0.1, 1.0, 5.0):
                assert cb.beta_plus_static(d_g, k_p, s) > s.d_s


class TestBetaPlusTimed:
    S = cb.SafetyParams(d_s=0.5, gamma=1.0)

    def test_at_zero_matches_static(self):
        assert cb.beta_plus_timed(3.0, 1.0, 0.0, self.S) == cb.beta_plus_static(3.0, 1.0, self.S)

    def test_long_time_limit(self):
        assert cb.beta_plus_timed(3.0, 1.0, 60.0, self.S) == pytest.approx(0.5, abs=1e-12)

    def test_worked_example(self):
        c = 2.0 * 3.0 * math.exp(-1.0)  # 2 d_g k_p e^{-k_p t} / gamma at t=1
        expect = c + math.sqrt(c * c + 0.25)
        assert cb.beta_plus_timed(3.0, 1.0, 1.0, self.S) == pytest.approx(expect, abs=1e-14)

    def test_monotone_decreasing(self):
        ts = np.linspace(0.0, 5.0, 200)
        vals = [cb.beta_plus_timed(3.0, 1.0, t, self.S) for t in ts]
        assert all(b > a for a, b in zip(vals[1:], vals[:-1]))

    def test_rejects_negative_time(self):
        with pytest.raises(PreconditionError):
            cb.beta_plus_timed(3.0, 1.0, -0.1, self.S)


class TestNominalDistanceTwo:
    def test_initial_value(self):
        c = make_two()
        assert cb.nominal_distance_two(c, 0.0) == pytest.approx(2.0, abs=1e-14)

    def test_symmetric_specialization(self):
        c = make_two(d_g1=3.0, d_g2=3.0)
        t = 0.37
        expect = 2 * 3.0 * math.exp(-t) - (2 * 3.0 - 2.0)
        assert cb.nominal_distance_two(c, t) == pytest.approx(expect, abs=1e-14)

    def test_general_evaluation(self):
        c = make_two(d_g1=3.0, d_g2=4.0, k_p1=1.0, k_p2=2.0, gamma=40.0)
        expect = 3 * math.exp(-0.5) + 4 * math.exp(-1.0) - 5.0
        assert cb.nominal_distance_two(c, 0.5) == pytest.approx(expect, abs=1e-14)

    def test_strictly_decreasing(self):
        c = make_two()
        ts = np.linspace(0.0, 2.0, 100)
        vals = [cb.nominal_distance_two(c, t) for t in ts]
        assert all(b < a for a, b in zip(vals, vals[1:]))


class TestFindT1:
    def test_crossing_residual(self):
        c = make_two()
        t1 = cb.find_t1(c)
        first = first_active_robot(c)
        d_g, k_p = (c.d_g1, c.k_p1) if first == 1 else (c.d_g2, c.k_p2)
        resid = abs(cb.nominal_distance_two(c, t1) - beta_plus_timed(d_g, k_p, t1, c.safety))
        assert resid <= 1e-10
        assert t1 > 0

    def test_barely_above_critical(self):
        # d_init just above the larger critical distance: t1 is essentially 0.
        s = cb.SafetyParams(d_s=0.5, gamma=20.0)
        beta2 = cb.beta_plus_static(4.0, 1.0, s)
        c = make_two(d_init=beta2 + 1e-6)
        assert cb.find_t1(c) <= 1e-3

    def test_gamma_monotonicity(self):
        # A larger barrier rate shrinks the critical radius beta_plus, so the
        # separation curve reaches it strictly later.
        c_lo = make_two(gamma=20.0)
        c_hi = make_two(gamma=30.0)
        assert cb.find_t1(c_hi) > cb.find_t1(c_lo)

    def test_no_crossing_when_precondition_violated(self):
        # gamma too small: the constraint is active from the start.
        spec = cb.TwoRobotCanonical(
            d_init=2.0, d_g1=3.0, d_g2=4.0, k_p1=1.0, k_p2=1.0, alpha=0.0,
            base=np.zeros(2), safety=cb.SafetyParams(d_s=0.5, gamma=1.0),
        )
        with pytest.raises(NoCrossingError):
            cb.find_t1(spec)


class TestPhase2AndT2:
    def test_initial_condition(self):
        c = make_two()
        t1 = cb.find_t1(c)
        assert cb.phase2_distance(c, t1, t1) == pytest.approx(
            cb.nominal_distance_two(c, t1), abs=1e-14
        )

    def test_zero_rhs_keeps_distance(self):
        # gamma tiny and the free robot's pull tiny: D stays ~constant. The
        # check uses the raw integrator since the canonical type forbids
        # degenerate parameters.
        rhs = lambda t, d: -1e-12 * d
        assert _rk4_march(rhs, 0.0, 1.5, 1.0, 1e-3) == pytest.approx(1.5, abs=1e-9)

    def test_t2_crossing_residual(self):
        c = make_two()
        t1 = cb.find_t1(c)
        t2 = cb.find_t2(c, t1)
        assert t2 > t1
        free = 1 if first_active_robot(c) == 2 else 2
        d_g, k_p = (c.d_g1, c.k_p1) if free == 1 else (c.d_g2, c.k_p2)
        resid = abs(cb.phase2_distance(c, t1, t2) - beta_plus_timed(d_g, k_p, t2, c.safety))
        assert resid <= 1e-8

    def test_symmetric_parameters_give_t2_equal_t1(self):
        c = make_two(d_g1=3.0, d_g2=3.0, k_p1=1.0, k_p2=1.0)
        t1 = cb.find_t1(c)
        assert cb.find_t2(c, t1) == pytest.approx(t1, abs=1e-12)

    def test_strongly_heterogeneous_gains(self):
        c = make_two(k_p1=0.4, k_p2=1.2, gamma=40.0)
        t1 = cb.find_t1(c)
        t2 = cb.find_t2(c, t1)
        assert t2 > t1

    def test_phase2_strictly_decreasing(self):
        c = make_two()
        t1 = cb.find_t1(c)
        t2 = cb.find_t2(c, t1)
        ts = np.linspace(t1, t2, 20)
        vals = [cb.phase2_distance(c, t1, t) for t in ts]
        assert all(b < a for a, b in zip(vals, vals[1:]))


class TestPhase3ClosedForm:
    S = cb.SafetyParams(d_s=0.5, gamma=2.0)

    def test_worked_example(self):
        val = cb.phase3_closed_form(1.0, 0.0, 1.0, self.S)
        assert val == pytest.approx(math.sqrt(0.75 * math.exp(-2.0) + 0.25), abs=1e-14)
        assert val == pytest.approx(0.5928755, abs=1e-6)

    def test_matches_rk4_on_relative_dynamics(self):
        # Independent check: integrate dD/dt = -gamma (D^2-ds^2) / (2D).
        g, ds = self.S.gamma, self.S.d_s
        rhs = lambda t, d: -g * (d * d - ds * ds) / (2.0 * d)
        numeric = _rk4_march(rhs, 0.0, 1.0, 1.0, 1e-5)
        assert cb.phase3_closed_form(1.0, 0.0, 1.0, self.S) == pytest.approx(numeric, abs=1e-10)

    def test_initial_condition(self):
        assert cb.phase3_closed_form(0.9, 2.0, 2.0, self.S) == 0.9

    def test_long_time_limit(self):
        assert cb.phase3_closed_form(0.9, 0.0, 50.0, self.S) == pytest.approx(0.5, abs=1e-12)

    def test_monotone_decreasing_to_margin(self):
        ts = np.linspace(0.0, 4.0, 50)
        vals = [cb.phase3_closed_form(1.2, 0.0, t, self.S) for t in ts]
        assert all(b < a for a, b in zip(vals, vals[1:]))
        assert all(v >= self.S.d_s for v in vals)


class TestThreeRobotPredictions:
    def test_beta_worked_example(self):
        s = cb.SafetyParams(d_s=1.0, gamma=math.sqrt(3.0))
        c = cb.ThreeRobotCanonical(
            d_init=2.5, d_g=2.0, k_p=1.0, alpha=0.0, base=np.zeros(2), safety=s
        )
        assert cb.three_robot_beta_plus_static(c) == pytest.approx(
            2.0 + math.sqrt(5.0), abs=1e-12
        )

    def test_beta_matches_two_robot_form(self):
        # The three-robot critical distance equals the pair formula with the
        # goal distance scaled by sqrt(3)/2.
        c = make_three()
        expect = cb.beta_plus_static(math.sqrt(3.0) / 2.0 * c.d_g, c.k_p, c.safety)
        assert cb.three_robot_beta_plus_static(c) == pytest.approx(expect, abs=1e-12)

    def test_nominal_distance(self):
        c = make_three(d_init=3.0, d_g=2.0, gamma=40.0)
        assert cb.three_robot_nominal_distance(c, 0.0) == pytest.approx(3.0, abs=1e-14)
        expect = (3.0 - 2.0 * math.sqrt(3.0)) + 2.0 * math.sqrt(3.0) * math.exp(-1.0)
        assert cb.three_robot_nominal_distance(c, 1.0) == pytest.approx(expect, abs=1e-14)

    def test_find_t1_residual(self):
        c = make_three()
        t1 = cb.three_robot_find_t1(c)
        d = cb.three_robot_nominal_distance(c, t1)
        s = math.sqrt(3.0) * c.d_g * c.k_p * math.exp(-c.k_p * t1) / c.safety.gamma
        beta_t = s + math.sqrt(s * s + c.safety.d_s**2)
        assert abs(d - beta_t) <= 1e-10

    def test_barely_above_critical(self):
        base = make_three()
        beta0 = cb.three_robot_beta_plus_static(base)
        c = cb.ThreeRobotCanonical(
            d_init=beta0 + 1e-6, d_g=3.0, k_p=1.0, alpha=0.0, base=np.zeros(2),
            safety=base.safety,
        )
        assert cb.three_robot_find_t1(c) <= 1e-3

    def test_t1_alpha_invariant(self):
        a = make_three(alpha=0.0)
        b = make_three(alpha=0.7)
        assert abs(cb.three_robot_find_t1(a) - cb.three_robot_find_t1(b)) <= 1e-12

    def test_phase2_closed_form_endpoints(self):
        s = cb.SafetyParams(d_s=0.5, gamma=2.0)
        assert cb.three_robot_phase2_closed_form(0.8, 1.0, 1.0, s) == 0.8
        assert cb.three_robot_phase2_closed_form(0.8, 1.0, 60.0, s) == pytest.approx(0.5, abs=1e-12)

    def test_invariants_enforced(self):
        with pytest.raises(PreconditionError):
            make_three(d_init=6.0, d_g=3.0)  # sqrt(3) d_g < d_init
        with pytest.raises(PreconditionError):
            make_two(d_g1=1.5)  # d_g1 < d_init


class TestTimelines:
    def test_two_robot_timeline_consistent(self):
        c = make_two()
        tl = cb.two_robot_timeline(c)
        assert 0 < tl.t1 < tl.t2
        assert tl.d_at_t1 > tl.d_at_t2 > tl.limit_distance == c.safety.d_s

    def test_three_robot_timeline(self):
        c = make_three()
        tl = cb.three_robot_timeline(c)
        assert tl.t2 is None and tl.d_at_t2 is None
        assert tl.t1 > 0 and tl.d_at_t1 > tl.limit_distance
