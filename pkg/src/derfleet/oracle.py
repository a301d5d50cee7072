"""Independent feasibility and time-to-failure oracle.

A stepwise request is satisfiable over [0, T) exactly when the
transportation problem "device energies -> per-segment energy demands"
admits a saturating flow: within a constant segment any feasible
time-varying dispatch can be replaced by its time average without leaving
the power box, so per-segment energy variables lose nothing, and because
devices only discharge, nonnegativity at segment ends implies
nonnegativity throughout.

Feasibility itself is decided in exact arithmetic: every capacity is a
double, so scaling by 2**80 (a pure exponent shift, exact) turns the
instance into integers, and Dinic's algorithm only ever adds, subtracts
and compares capacities. A thresholded float comparison would instead
inflate into a time error of noise / (request - available) near marginal
failure instants. The float ``max_flow`` value (for certificates and
reports) is accurate to well within 1e-9 relative slack.

This module depends only on the fleet and reference types, never on the
simulator, so it can serve as an independent check of simulated results.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .fleet import Device, FleetState, max_powers
from .reference import ReferenceSignal, segments

__all__ = [
    "FlowInstance",
    "FlowResult",
    "feasible",
    "flow_instance",
    "max_flow",
    "max_flow_detail",
    "oracle_time_to_failure",
]

# Feasibility comparisons are exact after scaling capacities by 2**80;
# doubles are dyadic rationals, so the shift loses nothing for any value
# above 2**-80 (dust below that rounds to zero capacity).
_SCALE_BITS = 80


@dataclass(frozen=True)
class FlowInstance:
    """Transportation problem in kWh: device supplies vs segment demands."""

    supplies: tuple[float, ...]
    demands: tuple[float, ...]
    edge_capacities: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        if len(self.edge_capacities) != len(self.supplies):
            raise ValueError("need one capacity row per device")
        if any(len(row) != len(self.demands) for row in self.edge_capacities):
            raise ValueError("each capacity row needs one entry per segment")
        if any(s < 0.0 for s in self.supplies) or any(d < 0.0 for d in self.demands):
            raise ValueError("supplies and demands must be >= 0")
        if any(c < 0.0 for row in self.edge_capacities for c in row):
            raise ValueError("edge capacities must be >= 0")


@dataclass(frozen=True)
class FlowResult:
    """Max-flow value plus the certificate: energy (kWh) per (device, segment)."""

    value: float
    flows: np.ndarray
    unmet_demands: tuple[float, ...]


class _Dinic:
    """Dinic's max flow; works unchanged on floats or exact integers.

    ``threshold`` is the residual noise floor: 0 for integer capacities,
    a small positive value for floats.
    """

    def __init__(self, n_nodes: int, threshold=0):
        self.n = n_nodes
        self.threshold = threshold
        self.head: list[list[int]] = [[] for _ in range(n_nodes)]
        self.to: list[int] = []
        self.cap: list = []

    def add_edge(self, u: int, v: int, capacity) -> int:
        idx = len(self.to)
        self.head[u].append(idx)
        self.to.append(v)
        self.cap.append(capacity)
        self.head[v].append(idx + 1)
        self.to.append(u)
        self.cap.append(0)
        return idx

    def _bfs(self, s: int, t: int) -> bool:
        self.level = [-1] * self.n
        self.level[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for idx in self.head[u]:
                v = self.to[idx]
                if self.cap[idx] > self.threshold and self.level[v] < 0:
                    self.level[v] = self.level[u] + 1
                    queue.append(v)
        return self.level[t] >= 0

    def _augment(self, s: int, t: int):
        """One augmenting path in the level graph, iteratively (paths can be
        as long as the node count on late phases). Returns None when the
        phase is exhausted."""
        path: list[int] = []
        u = s
        while True:
            if u == t:
                flow = min(self.cap[idx] for idx in path)
                for idx in path:
                    self.cap[idx] -= flow
                    self.cap[idx ^ 1] += flow
                return flow
            advanced = False
            while self.it[u] < len(self.head[u]):
                idx = self.head[u][self.it[u]]
                v = self.to[idx]
                if self.cap[idx] > self.threshold and self.level[v] == self.level[u] + 1:
                    path.append(idx)
                    u = v
                    advanced = True
                    break
                self.it[u] += 1
            if not advanced:
                if not path:
                    return None
                self.level[u] = -1  # dead end, prune for the rest of the phase
                idx = path.pop()
                u = self.to[idx ^ 1]
                self.it[u] += 1

    def max_flow(self, s: int, t: int):
        """Total flow; an int 0 when no flow can be pushed at all."""
        total = 0
        while self._bfs(s, t):
            self.it = [0] * self.n
            while True:
                flow = self._augment(s, t)
                if flow is None:
                    break
                total = total + flow
        return total


def _build_network(instance: FlowInstance, scale_bits: int | None):
    """Dinic network for an instance; integer-scaled and exact when asked.

    Returns (net, source, sink, device-segment edge ids, demand edge ids).
    Multiplying a double by 2**scale_bits only shifts its exponent, so the
    integer capacities represent the given doubles exactly (values below
    2**-scale_bits round to zero capacity).
    """
    n = len(instance.supplies)
    m = len(instance.demands)
    if scale_bits is None:
        biggest = max(
            [1.0]
            + list(instance.supplies)
            + list(instance.demands)
            + [c for row in instance.edge_capacities for c in row]
        )
        net = _Dinic(n + m + 2, threshold=1e-12 * biggest)
        convert = float
    else:
        factor = 1 << scale_bits
        net = _Dinic(n + m + 2, threshold=0)
        convert = lambda value: round(value * factor)
    source, sink = 0, n + m + 1
    for i, s in enumerate(instance.supplies):
        net.add_edge(source, 1 + i, convert(s))
    edge_ids = {}
    for i, row in enumerate(instance.edge_capacities):
        for k, c in enumerate(row):
            if c > 0.0:
                edge_ids[(i, k)] = net.add_edge(1 + i, 1 + n + k, convert(c))
    demand_edges = [net.add_edge(1 + n + k, sink, convert(d)) for k, d in enumerate(instance.demands)]
    return net, source, sink, edge_ids, demand_edges


def max_flow_detail(instance: FlowInstance) -> FlowResult:
    """Solve the transportation problem and return the flow certificate."""
    n = len(instance.supplies)
    m = len(instance.demands)
    net, source, sink, edge_ids, demand_edges = _build_network(instance, scale_bits=None)
    value = float(net.max_flow(source, sink))
    flows = np.zeros((n, m))
    for (i, k), idx in edge_ids.items():
        flows[i, k] = net.cap[idx ^ 1]  # flow pushed = reverse residual
    unmet = tuple(max(0.0, float(net.cap[idx])) for idx in demand_edges)
    return FlowResult(value=value, flows=flows, unmet_demands=unmet)


def max_flow(instance: FlowInstance) -> float:
    """Maximum deliverable energy (kWh) respecting supplies, demands and caps."""
    return max_flow_detail(instance).value


def _saturates_exactly(instance: FlowInstance) -> bool:
    """Exact integer check that the max flow meets the total demand."""
    factor = 1 << _SCALE_BITS
    total_demand = sum(round(d * factor) for d in instance.demands)
    if total_demand == 0:
        return True
    net, source, sink, _, _ = _build_network(instance, scale_bits=_SCALE_BITS)
    return net.max_flow(source, sink) >= total_demand


def flow_instance(
    fleet: list[Device], state0: FleetState, signal: ReferenceSignal, horizon: float
) -> FlowInstance:
    """Transcribe the request on [0, horizon) into a transportation problem."""
    if len(state0) != len(fleet):
        raise ValueError("state and fleet lengths differ")
    p = max_powers(fleet)
    supplies = tuple(float(e) for e in p * state0.times_to_go)
    demands = []
    durations = []
    for start, end, value in segments(signal):
        if start >= horizon:
            break
        dt = min(end, horizon) - start
        durations.append(dt)
        demands.append(value * dt)
    caps = tuple(tuple(float(pi * dt) for dt in durations) for pi in p)
    return FlowInstance(supplies=supplies, demands=tuple(demands), edge_capacities=caps)


def feasible(
    fleet: list[Device], state0: FleetState, signal: ReferenceSignal, horizon: float | None = None
) -> bool:
    """True iff the request truncated to [0, horizon) can be met in full.

    Decided in exact arithmetic for the double-precision instance (device
    energies, per-segment demands and rate caps as given).
    """
    if not isinstance(signal, ReferenceSignal):
        raise TypeError("only piecewise-constant ReferenceSignal inputs are supported")
    if horizon is None:
        horizon = signal.horizon
    if horizon < 0.0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    return _saturates_exactly(flow_instance(fleet, state0, signal, horizon))


def oracle_time_to_failure(
    fleet: list[Device],
    state0: FleetState,
    signal: ReferenceSignal,
    tolerance: float = 1e-9,
) -> float:
    """Supremum of horizons whose truncated request stays feasible.

    Bisection over [0, signal.horizon] exploiting that feasibility is
    monotone in the truncation point; a signal feasible through its whole
    horizon reports the horizon itself (the request is zero afterwards, so
    no later failure is possible). Each probe is an exact feasibility
    decision, so the returned value is within ``tolerance`` of the true
    supremum regardless of how flat the deficit is past it.
    """
    if tolerance <= 0.0:
        raise ValueError(f"tolerance must be > 0, got {tolerance}")
    if feasible(fleet, state0, signal, signal.horizon):
        return signal.horizon
    lo, hi = 0.0, signal.horizon
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if feasible(fleet, state0, signal, mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
