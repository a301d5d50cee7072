"""The three greedy dispatch policies.

op   -- fill devices from the longest time-to-go down; the marginal group
        runs at a common fraction of its members' max powers, so tied
        devices stay tied and the whole fleet drains toward equal
        times-to-go.
lpf  -- lowest max power first: saturate devices in ascending max-power
        order (ties by ascending id).
pop  -- proportion of power: every non-empty device contributes in
        proportion to its max power.

All three deliver exactly min(request, available power); an unmet
remainder is reported as shortfall, never raised, so the simulator can
pinpoint the failure instant.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .fleet import (
    DEFAULT_GROUP_TOLERANCE,
    Device,
    FleetState,
    GroupedState,
    _check_lengths,
    _grouping,
    max_powers,
)

__all__ = [
    "DispatchDecision",
    "Policy",
    "dispatch",
    "lpf_dispatch",
    "op_dispatch",
    "pop_dispatch",
]


class Policy(enum.Enum):
    """Dispatch policy selectable by name on the CLI."""

    OP = "op"
    LPF = "lpf"
    POP = "pop"

    @classmethod
    def from_name(cls, name: str) -> "Policy":
        try:
            return cls(name.lower())
        except ValueError:
            valid = ", ".join(p.value for p in cls)
            raise ValueError(f"unknown policy {name!r}; expected one of: {valid}") from None


@dataclass(frozen=True, eq=False)
class DispatchDecision:
    """Per-device power allocation for one instant.

    powers[i] lies in [0, max_power_i], is zero for empty devices, and
    shortfall is the exact unmet remainder max(0, request - available).
    """

    powers: np.ndarray
    delivered: float
    shortfall: float

    def __post_init__(self) -> None:
        arr = np.array(self.powers, dtype=float, copy=True)
        arr.flags.writeable = False
        object.__setattr__(self, "powers", arr)


def _decision(powers: np.ndarray, shortfall: float) -> DispatchDecision:
    return DispatchDecision(
        powers=powers, delivered=float(np.sum(powers)), shortfall=float(shortfall)
    )


def _cascade_fractions(caps: np.ndarray, request: float) -> np.ndarray:
    """Fill fractions for group capacities listed in descending-priority order."""
    prev = np.cumsum(caps) - caps
    return np.clip((request - prev) / caps, 0.0, 1.0)


def op_allocation(
    x: np.ndarray, p: np.ndarray, request: float, tolerance: float = DEFAULT_GROUP_TOLERANCE
):
    """Array-level core of the op policy; also feeds the simulator.

    Returns (powers, shortfall, grouping) where grouping is the
    (order, starts, n_positive, fractions) tuple the engine uses for
    equalisation detection.
    """
    order, starts, n_positive = _grouping(x, tolerance)
    if n_positive == 0:
        return np.zeros_like(p), max(0.0, request), (order, starts, 0, np.empty(0))
    p_sorted = p[order[:n_positive]]
    caps = np.add.reduceat(p_sorted, starts)
    fractions = _cascade_fractions(caps, request)
    sizes = np.diff(np.concatenate((starts, [n_positive])))
    powers = np.zeros_like(p)
    powers[order[:n_positive]] = np.repeat(fractions, sizes) * p_sorted
    shortfall = max(0.0, request - float(np.sum(caps)))
    return powers, shortfall, (order, starts, n_positive, fractions)


def lpf_powers(x: np.ndarray, p: np.ndarray, request: float) -> tuple[np.ndarray, float]:
    """Greedy fill in ascending (max_power, id) order, skipping empty devices."""
    order = np.argsort(p, kind="stable")
    caps = np.where(x[order] > 0.0, p[order], 0.0)
    before = np.cumsum(caps) - caps
    powers = np.zeros_like(p)
    powers[order] = np.clip(request - before, 0.0, caps)
    return powers, max(0.0, request - float(np.sum(caps)))


def pop_powers(x: np.ndarray, p: np.ndarray, request: float) -> tuple[np.ndarray, float]:
    """Allocate in proportion to max power across the non-empty devices."""
    active = x > 0.0
    available = float(np.sum(p[active]))
    if available <= 0.0:
        return np.zeros_like(p), max(0.0, request)
    fraction = min(1.0, request / available)
    return np.where(active, p * fraction, 0.0), max(0.0, request - available)


def op_dispatch(grouped: GroupedState, fleet: list[Device], request: float) -> DispatchDecision:
    """Dispatch a grouped state: full groups from the top, one marginal fraction."""
    if request < 0.0:
        raise ValueError(f"request must be >= 0, got {request}")
    p = max_powers(fleet)
    active = [g for g in grouped.groups if g.time_to_go > 0.0]
    powers = np.zeros_like(p)
    if active:
        caps = np.array([g.aggregate_power for g in active])
        fractions = _cascade_fractions(caps, request)
        for g, r in zip(active, fractions):
            if r > 0.0:
                positions = np.fromiter((i - 1 for i in g.member_ids), dtype=np.intp)
                powers[positions] = r * p[positions]
        shortfall = max(0.0, request - float(np.sum(caps)))
    else:
        shortfall = max(0.0, request)
    return _decision(powers, shortfall)


def lpf_dispatch(state: FleetState, fleet: list[Device], request: float) -> DispatchDecision:
    if request < 0.0:
        raise ValueError(f"request must be >= 0, got {request}")
    _check_lengths(state, fleet)
    powers, shortfall = lpf_powers(state.times_to_go, max_powers(fleet), request)
    return _decision(powers, shortfall)


def pop_dispatch(state: FleetState, fleet: list[Device], request: float) -> DispatchDecision:
    if request < 0.0:
        raise ValueError(f"request must be >= 0, got {request}")
    _check_lengths(state, fleet)
    powers, shortfall = pop_powers(state.times_to_go, max_powers(fleet), request)
    return _decision(powers, shortfall)


def dispatch(
    kind: Policy,
    state: FleetState,
    fleet: list[Device],
    request: float,
    grouping_tolerance: float = DEFAULT_GROUP_TOLERANCE,
) -> DispatchDecision:
    """Uniform entry point used by the simulator and the CLI."""
    if request < 0.0:
        raise ValueError(f"request must be >= 0, got {request}")
    _check_lengths(state, fleet)
    if kind is Policy.OP:
        powers, shortfall, _ = op_allocation(
            state.times_to_go, max_powers(fleet), request, grouping_tolerance
        )
        return _decision(powers, shortfall)
    if kind is Policy.LPF:
        return lpf_dispatch(state, fleet, request)
    if kind is Policy.POP:
        return pop_dispatch(state, fleet, request)
    raise ValueError(f"unknown policy kind: {kind!r}")
