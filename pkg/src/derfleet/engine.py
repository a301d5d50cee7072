"""Exact event-driven simulation of the closed-loop discharge dynamics.

Between events every device's time-to-go falls at the constant rate
u_i / max_power_i, so the next depletion, group equalisation, or segment
boundary can be computed in closed form and the state advanced exactly:
no integration step size, no discretization error. Failure is declared at
the first instant the request exceeds the power available from non-empty
devices; that instant itself is infeasible (the fulfilled interval is
half-open), and the failure time is the reported time to failure.

Simultaneous events at one timestamp are processed in the order
depletion, equalisation, segment change, and the policy is re-evaluated
once afterwards.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .fleet import DEFAULT_GROUP_TOLERANCE, Device, FleetState, max_powers
from .policies import DispatchDecision, Policy, lpf_powers, op_allocation, pop_powers
from .reference import ReferenceSignal, segments

__all__ = [
    "DEPLETION_SNAP",
    "Event",
    "EventKind",
    "SimulationTrace",
    "TraceSample",
    "advance",
    "available_power_trajectory",
    "simulate",
    "state_at",
    "time_to_failure",
]

# A device counts as empty once its time-to-go falls to 1e-12 h; the
# residual is rounding dust from exact event arithmetic, not real energy.
DEPLETION_SNAP = 1e-12

_RATE_EPS = 1e-15

# Custom rules receive (times_to_go, max_powers, request) and return the
# per-device power vector. They must be admissible (0 <= u_i <= p_i,
# u_i = 0 for empty devices, total = min(request, available)) and may
# depend on the state only through its support, because the simulator
# re-evaluates them only at depletions and segment changes.
DispatchRule = Callable[[np.ndarray, np.ndarray, float], np.ndarray]
PolicyLike = Union[Policy, DispatchRule]


class EventKind(enum.Enum):
    DEPLETION = "depletion"
    EQUALISATION = "equalisation"
    SEGMENT_CHANGE = "segment_change"
    FAILURE = "failure"


@dataclass(frozen=True)
class Event:
    """One simulator event; payload fields are populated per kind.

    devices: depleted device ids, or all members of groups that merged.
    request/available: kW, set on segment changes (request) and failure
    (both).
    """

    time: float
    kind: EventKind
    devices: tuple[int, ...] = ()
    request: float | None = None
    available: float | None = None


@dataclass(frozen=True)
class TraceSample:
    """State at ``time`` plus the dispatch in force from that instant on."""

    time: float
    state: FleetState
    decision: DispatchDecision


@dataclass(frozen=True)
class SimulationTrace:
    """Event log plus piecewise-linear state trajectory of one run."""

    events: tuple[Event, ...]
    samples: tuple[TraceSample, ...]
    failure_time: float | None
    horizon: float
    delivered_energy: float

    @property
    def survived(self) -> bool:
        return self.failure_time is None

    @property
    def time_to_failure(self) -> float:
        """Failure time, or the horizon when the run survived it.

        The request is zero beyond the horizon, so a surviving run can
        never fail later; the horizon is the honest cap for statistics
        and matches what the feasibility oracle can certify.
        """
        return self.horizon if self.failure_time is None else self.failure_time

    def event_counts(self) -> dict[str, int]:
        counts = {kind.value: 0 for kind in EventKind}
        for event in self.events:
            counts[event.kind.value] += 1
        return counts


def _policy_powers(
    policy: PolicyLike,
    x: np.ndarray,
    p: np.ndarray,
    request: float,
    grouping_tolerance: float,
):
    """(powers, shortfall, grouping-or-None) for any policy-like object."""
    if policy is Policy.OP:
        powers, shortfall, grouping = op_allocation(x, p, request, grouping_tolerance)
        return powers, shortfall, grouping
    if policy is Policy.LPF:
        powers, shortfall = lpf_powers(x, p, request)
        return powers, shortfall, None
    if policy is Policy.POP:
        powers, shortfall = pop_powers(x, p, request)
        return powers, shortfall, None
    if callable(policy):
        powers = np.asarray(policy(x, p, request), dtype=float)
        if powers.shape != x.shape:
            raise ValueError("dispatch rule returned a vector of the wrong length")
        slack = 1e-9 * max(1.0, float(np.max(p)))
        if np.any(powers < -slack) or np.any(powers > p + slack) or np.any(powers[x <= 0.0] > slack):
            raise ValueError("dispatch rule violated the power box constraints")
        available = float(np.sum(p[x > 0.0]))
        delivered = float(np.sum(powers))
        target = min(request, available)
        if abs(delivered - target) > 1e-9 * max(1.0, request, available):
            raise ValueError("dispatch rule must deliver exactly min(request, available)")
        return powers, max(0.0, request - available), None
    raise TypeError(f"not a policy or dispatch rule: {policy!r}")


def _next_event_dt(
    x: np.ndarray, rates: np.ndarray, grouping, budget: float
) -> float:
    """Time to the earliest depletion or (under op) group equalisation."""
    dt = budget
    running = rates > _RATE_EPS
    if np.any(running):
        dt = min(dt, float(np.min(x[running] / rates[running])))
    if grouping is not None:
        order, starts, n_positive, fractions = grouping
        if len(starts) > 1:
            ends = np.concatenate((starts[1:], [n_positive]))
            xs = x[order[:n_positive]]
            # earliest possible meeting: lowest member of the upper group
            # against highest member of the one below
            upper = xs[ends[:-1] - 1]
            lower = xs[starts[1:]]
            closing = fractions[:-1] - fractions[1:]
            pairs = closing > _RATE_EPS
            if np.any(pairs):
                dt = min(dt, float(np.min((upper[pairs] - lower[pairs]) / closing[pairs])))
    return dt


def _merged_clusters(x: np.ndarray, rates: np.ndarray, grouping, dt: float) -> list[tuple[int, ...]]:
    """Groups whose values meet after advancing by dt, as merged id clusters."""
    order, starts, n_positive, fractions = grouping
    if len(starts) <= 1:
        return []
    ends = np.concatenate((starts[1:], [n_positive]))
    xs = x[order[:n_positive]]
    upper = xs[ends[:-1] - 1]
    lower = xs[starts[1:]]
    closing = fractions[:-1] - fractions[1:]
    merges = (closing > _RATE_EPS) & (upper - lower <= closing * dt * (1.0 + 1e-12) + 1e-15)
    clusters: list[tuple[int, ...]] = []
    g = 0
    n_groups = len(starts)
    while g < n_groups - 1:
        if merges[g]:
            first = g
            while g < n_groups - 1 and merges[g]:
                g += 1
            members = order[starts[first] : ends[g]]
            # only report devices still non-empty after the step
            alive = members[x[members] - rates[members] * dt > DEPLETION_SNAP]
            if alive.size >= 2:
                clusters.append(tuple(sorted(int(m) + 1 for m in alive)))
        else:
            g += 1
    return clusters


def advance(
    state: FleetState,
    fleet: list[Device],
    policy: PolicyLike,
    request: float,
    budget: float,
    grouping_tolerance: float = DEFAULT_GROUP_TOLERANCE,
    snap: float = DEPLETION_SNAP,
) -> tuple[FleetState, float, tuple[Event, ...], DispatchDecision]:
    """Hold the policy's dispatch constant up to the next event.

    Advances to the earliest of a depletion, an equalisation (op only) or
    the budget, and returns the new state, the elapsed time, the events
    fired at the stop instant (times relative to the call), and the
    dispatch that was applied. The caller must have checked that the
    dispatch at ``state`` has no shortfall.
    """
    if budget <= 0.0:
        raise ValueError(f"budget must be > 0, got {budget}")
    if request < 0.0:
        raise ValueError(f"request must be >= 0, got {request}")
    if len(state) != len(fleet):
        raise ValueError("state and fleet lengths differ")
    x = state.times_to_go.copy()
    p = max_powers(fleet)
    powers, shortfall, grouping = _policy_powers(policy, x, p, request, grouping_tolerance)
    decision = DispatchDecision(powers=powers, delivered=float(np.sum(powers)), shortfall=shortfall)
    if shortfall > 0.0:
        raise ValueError("dispatch at the current state has a shortfall; advance requires feasibility")

    rates = powers / p
    dt = _next_event_dt(x, rates, grouping, budget)
    events: list[Event] = []
    clusters = _merged_clusters(x, rates, grouping, dt) if grouping is not None else []

    x_new = x - rates * dt
    depleted = (x > 0.0) & (x_new <= snap)
    x_new[depleted] = 0.0
    x_new = np.maximum(x_new, 0.0)
    if np.any(depleted):
        events.append(
            Event(
                time=dt,
                kind=EventKind.DEPLETION,
                devices=tuple(int(i) + 1 for i in np.flatnonzero(depleted)),
            )
        )
    for cluster in clusters:
        events.append(Event(time=dt, kind=EventKind.EQUALISATION, devices=cluster))
    return FleetState(x_new), dt, tuple(events), decision


def simulate(
    fleet: list[Device],
    state0: FleetState,
    signal: ReferenceSignal,
    policy: PolicyLike,
    grouping_tolerance: float = DEFAULT_GROUP_TOLERANCE,
    snap: float = DEPLETION_SNAP,
    keep_samples: bool = True,
) -> SimulationTrace:
    """Run the closed loop over the whole signal, or up to the failure instant.

    With ``keep_samples=False`` only the initial and final samples are
    retained (events are always complete); use it for large sweeps where
    per-event states are not needed.
    """
    if len(state0) != len(fleet):
        raise ValueError("state and fleet lengths differ")
    p = max_powers(fleet)
    x = state0.times_to_go.copy()
    x[x <= snap] = 0.0

    events: list[Event] = []
    samples: list[TraceSample] = []
    delivered_energy = 0.0
    t = 0.0
    failure_time: float | None = None

    def record(decision: DispatchDecision, force: bool = False) -> None:
        if keep_samples or force or not samples:
            samples.append(TraceSample(time=t, state=FleetState(x), decision=decision))

    for seg_start, seg_end, request in segments(signal):
        events.append(Event(time=t, kind=EventKind.SEGMENT_CHANGE, request=request))
        while True:
            powers, shortfall, grouping = _policy_powers(policy, x, p, request, grouping_tolerance)
            decision = DispatchDecision(
                powers=powers, delivered=float(np.sum(powers)), shortfall=shortfall
            )
            if shortfall > 0.0:
                available = float(np.sum(p[x > 0.0]))
                events.append(
                    Event(time=t, kind=EventKind.FAILURE, request=request, available=available)
                )
                failure_time = t
                record(decision, force=True)
                return SimulationTrace(
                    events=tuple(events),
                    samples=tuple(samples),
                    failure_time=failure_time,
                    horizon=signal.horizon,
                    delivered_energy=delivered_energy,
                )
            record(decision)

            budget = seg_end - t
            rates = powers / p
            dt = _next_event_dt(x, rates, grouping, budget)
            at_boundary = dt >= budget
            if at_boundary:
                dt = budget
            clusters = (
                _merged_clusters(x, rates, grouping, dt) if grouping is not None else []
            )

            x_new = x - rates * dt
            depleted = (x > 0.0) & (x_new <= snap)
            x_new[depleted] = 0.0
            np.maximum(x_new, 0.0, out=x_new)
            delivered_energy += decision.delivered * dt
            x = x_new
            t = seg_end if at_boundary else t + dt

            if np.any(depleted):
                events.append(
                    Event(
                        time=t,
                        kind=EventKind.DEPLETION,
                        devices=tuple(int(i) + 1 for i in np.flatnonzero(depleted)),
                    )
                )
            for cluster in clusters:
                events.append(Event(time=t, kind=EventKind.EQUALISATION, devices=cluster))
            if at_boundary:
                break

    # survived every segment; the request is zero from the horizon on
    zero = DispatchDecision(powers=np.zeros_like(p), delivered=0.0, shortfall=0.0)
    record(zero, force=True)
    return SimulationTrace(
        events=tuple(events),
        samples=tuple(samples),
        failure_time=None,
        horizon=signal.horizon,
        delivered_energy=delivered_energy,
    )


def time_to_failure(
    fleet: list[Device],
    state0: FleetState,
    signal: ReferenceSignal,
    policy: PolicyLike,
    grouping_tolerance: float = DEFAULT_GROUP_TOLERANCE,
) -> float:
    """Failure time of the closed loop (horizon-capped when it survives)."""
    trace = simulate(
        fleet, state0, signal, policy, grouping_tolerance=grouping_tolerance, keep_samples=False
    )
    return trace.time_to_failure


def available_power_trajectory(
    trace: SimulationTrace, fleet: list[Device]
) -> list[tuple[float, float]]:
    """Step function of the max available power; changes only at depletions."""
    p = max_powers(fleet)
    x0 = trace.samples[0].state.times_to_go
    available = float(np.sum(p[x0 > 0.0]))
    steps = [(0.0, available)]
    for event in trace.events:
        if event.kind is EventKind.DEPLETION:
            available -= float(sum(p[i - 1] for i in event.devices))
            steps.append((event.time, max(0.0, available)))
    return steps


def state_at(trace: SimulationTrace, fleet: list[Device], t: float) -> np.ndarray:
    """Exact state at any time, from the piecewise-linear trajectory.

    Requires a trace recorded with ``keep_samples=True``. Times past the
    last sample (failure instant or horizon) return the final state.
    """
    if t < 0.0:
        raise ValueError(f"t must be >= 0, got {t}")
    times = [s.time for s in trace.samples]
    idx = int(np.searchsorted(np.asarray(times), t, side="right")) - 1
    if idx < 0:
        raise ValueError("trace has no sample at or before the requested time")
    sample = trace.samples[idx]
    if idx == len(trace.samples) - 1:
        return sample.state.times_to_go.copy()
    p = max_powers(fleet)
    rates = sample.decision.powers / p
    x = sample.state.times_to_go - rates * (t - sample.time)
    return np.maximum(x, 0.0)
