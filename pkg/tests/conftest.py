"""Shared builders for randomized test instances.

Desk-scale instances (a handful of devices, a few segments) keep oracle
bisection and trajectory cross-checks fast while still exercising every
event type; the value range deliberately straddles the fleet's total
power so both failing and surviving runs occur.
"""
from __future__ import annotations

import numpy as np
import pytest

from derfleet.fleet import FleetState, make_fleet
from derfleet.reference import ReferenceSignal


def desk_instance(rng: np.random.Generator, n_max: int = 6):
    """Random small fleet + stepwise signal; returns (fleet, state0, signal)."""
    n = int(rng.integers(1, n_max + 1))
    ttg = rng.uniform(0.0, 5.0, n)
    p = rng.uniform(0.1, 2.0, n)
    fleet = make_fleet(p, p * ttg)
    state0 = FleetState(ttg)
    k = int(rng.integers(1, 9))
    durations = rng.uniform(0.25, 2.0, k)
    breakpoints = np.concatenate(([0.0], np.cumsum(durations)[:-1]))
    values = rng.uniform(0.0, 1.25 * p.sum(), k)
    signal = ReferenceSignal(
        breakpoints=tuple(float(b) for b in breakpoints),
        values=tuple(float(v) for v in values),
        horizon=float(np.sum(durations)),
    )
    return fleet, state0, signal


def random_priority_rule(rng: np.random.Generator, n: int):
    """Admissible greedy dispatch with a random fixed device priority.

    Depends on the state only through its support, as the simulator
    requires of custom rules.
    """
    priority = rng.permutation(n)

    def rule(x: np.ndarray, p: np.ndarray, request: float) -> np.ndarray:
        powers = np.zeros_like(p)
        remaining = request
        for i in priority:
            if x[i] <= 0.0 or remaining <= 0.0:
                continue
            powers[i] = min(p[i], remaining)
            remaining -= powers[i]
        return powers

    return rule


@pytest.fixture
def rng():
    return np.random.default_rng(8675309)
