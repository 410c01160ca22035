import time

import pytest

import cbflock as cb


class TimedRun:
    """A finished closed-loop run together with its wall-clock duration."""

    def __init__(self, bundle, trace, wall, monitor=None):
        self.bundle = bundle
        self.trace = trace
        self.wall = wall
        self.monitor = monitor


@pytest.fixture(scope="session")
def s1_run():
    """S1 simulated once for the whole session (criteria 2-4 share it)."""
    bundle = cb.generate_canonical(cb.default_s1())
    monitor = cb.DeadlockMonitor(bundle.detection)
    t0 = time.perf_counter()
    trace = cb.run(bundle.scenario, bundle.sim, detectors=[monitor])
    wall = time.perf_counter() - t0
    return TimedRun(bundle, trace, wall, monitor)


@pytest.fixture(scope="session")
def s2_run():
    bundle = cb.generate_canonical(cb.default_s2())
    monitor = cb.DeadlockMonitor(bundle.detection)
    t0 = time.perf_counter()
    trace = cb.run(bundle.scenario, bundle.sim, detectors=[monitor])
    wall = time.perf_counter() - t0
    return TimedRun(bundle, trace, wall, monitor)


def first_activation_times(trace):
    """Map robot id -> time of its first constraint_activated event."""
    out = {}
    for ev in trace.events:
        if ev.kind == cb.simulate.EVENT_CONSTRAINT_ACTIVATED and ev.robot not in out:
            out[ev.robot] = ev.time
    return out
