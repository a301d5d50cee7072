"""Devices, fleet state, and the state-derived quantities policies consume.

Device ids run 1..n and every vector in this package is position-aligned
with them: the device with id ``i`` occupies position ``i - 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DEFAULT_GROUP_TOLERANCE",
    "Device",
    "FleetState",
    "Group",
    "GroupedState",
    "group_state",
    "initial_state",
    "make_fleet",
    "max_available_power",
    "max_powers",
    "support",
    "time_to_go",
]

# Equalisation times are computed analytically, so true ties land within
# rounding error of each other; 1e-9 h absorbs that without merging
# genuinely distinct states.
DEFAULT_GROUP_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Device:
    """One discharge-only resource.

    Attributes:
        id: 1-based device index.
        max_power: maximum discharge rate, kW, strictly positive.
        extractable_energy: energy actually deliverable to the grid, kWh
            (discharge efficiency already applied).
        efficiency: discharge efficiency in (0, 1]; informational once
            extractable_energy is fixed.
    """

    id: int
    max_power: float
    extractable_energy: float
    efficiency: float = 1.0

    def __post_init__(self) -> None:
        if self.max_power <= 0.0:
            raise ValueError(f"device {self.id}: max_power must be > 0, got {self.max_power}")
        if self.extractable_energy < 0.0:
            raise ValueError(
                f"device {self.id}: extractable_energy must be >= 0, got {self.extractable_energy}"
            )
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError(f"device {self.id}: efficiency must be in (0, 1], got {self.efficiency}")

    @classmethod
    def from_stored_energy(
        cls, id: int, max_power: float, stored_energy: float, efficiency: float = 1.0
    ) -> "Device":
        """Build a device from stored energy; extractable = efficiency * stored."""
        if stored_energy < 0.0:
            raise ValueError(f"device {id}: stored_energy must be >= 0, got {stored_energy}")
        return cls(
            id=id,
            max_power=max_power,
            extractable_energy=efficiency * stored_energy,
            efficiency=efficiency,
        )


def time_to_go(device: Device) -> float:
    """Hours the device can run at maximum power."""
    return device.extractable_energy / device.max_power


@dataclass(frozen=True, eq=False)
class FleetState:
    """Vector of per-device times-to-go (hours)."""

    times_to_go: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.times_to_go, dtype=float, copy=True)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("times_to_go must be a nonempty 1-d vector")
        if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
            raise ValueError("times_to_go entries must be finite and >= 0")
        arr.flags.writeable = False
        object.__setattr__(self, "times_to_go", arr)

    def __len__(self) -> int:
        return self.times_to_go.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FleetState):
            return NotImplemented
        return self.times_to_go.shape == other.times_to_go.shape and bool(
            np.all(self.times_to_go == other.times_to_go)
        )

    def __hash__(self) -> int:
        return hash(self.times_to_go.tobytes())


@dataclass(frozen=True)
class Group:
    """Devices sharing (up to tolerance) one time-to-go value."""

    time_to_go: float
    member_ids: frozenset[int]
    aggregate_power: float


@dataclass(frozen=True)
class GroupedState:
    """Groups sorted by strictly descending representative time-to-go.

    Devices that are exactly empty always form the final group
    (time_to_go == 0.0), kept separate from positive groups even when a
    positive value falls within the grouping tolerance of zero: empty
    devices have no energy and must never be allocated power.
    """

    groups: tuple[Group, ...]

    @property
    def group_count(self) -> int:
        return len(self.groups)


def make_fleet(powers, energies) -> list[Device]:
    """Devices with ids 1..n from parallel max-power / energy sequences."""
    powers = list(powers)
    energies = list(energies)
    if len(powers) != len(energies):
        raise ValueError("powers and energies must have equal length")
    return [
        Device(id=i + 1, max_power=float(p), extractable_energy=float(e))
        for i, (p, e) in enumerate(zip(powers, energies))
    ]


def max_powers(fleet: list[Device]) -> np.ndarray:
    """Max-power vector aligned with device positions."""
    return np.array([d.max_power for d in fleet], dtype=float)


def initial_state(fleet: list[Device]) -> FleetState:
    """State implied by the devices' current energies."""
    return FleetState(np.array([time_to_go(d) for d in fleet], dtype=float))


def _check_lengths(state: FleetState, fleet: list[Device]) -> None:
    if len(state) != len(fleet):
        raise ValueError(f"state has {len(state)} entries but fleet has {len(fleet)} devices")


def _grouping(x: np.ndarray, tolerance: float):
    """Sorted-order grouping used by both the public API and the engine.

    Returns (order, starts, n_positive): ``order`` sorts positions by
    descending time-to-go (ties by ascending position), the first
    ``n_positive`` of which are non-empty devices; ``starts`` indexes the
    first member of each positive group within ``order[:n_positive]``.
    Transitive chaining: consecutive sorted values within ``tolerance``
    share a group. Exactly-zero devices are excluded from the positive
    groups and form their own trailing group.
    """
    order = np.argsort(-x, kind="stable")
    xs = x[order]
    n_positive = int(np.count_nonzero(xs > 0.0))
    if n_positive == 0:
        starts = np.empty(0, dtype=np.intp)
    else:
        gaps = xs[: n_positive - 1] - xs[1:n_positive]
        starts = np.concatenate(([0], np.flatnonzero(gaps > tolerance) + 1))
    return order, starts, n_positive


def group_positions(x: np.ndarray, tolerance: float) -> list[np.ndarray]:
    """Device positions per group, descending time-to-go; empty group last."""
    order, starts, n_positive = _grouping(x, tolerance)
    bounds = list(starts) + [n_positive]
    groups = [order[bounds[i] : bounds[i + 1]] for i in range(len(starts))]
    if n_positive < x.size:
        groups.append(order[n_positive:])
    return groups


def group_state(
    state: FleetState, fleet: list[Device], tolerance: float = DEFAULT_GROUP_TOLERANCE
) -> GroupedState:
    """Group devices whose times-to-go chain together within tolerance."""
    _check_lengths(state, fleet)
    if tolerance < 0.0:
        raise ValueError(f"tolerance must be >= 0, got {tolerance}")
    x = state.times_to_go
    p = max_powers(fleet)
    groups = []
    for positions in group_positions(x, tolerance):
        groups.append(
            Group(
                time_to_go=float(np.mean(x[positions])),
                member_ids=frozenset(int(pos) + 1 for pos in positions),
                aggregate_power=float(np.sum(p[positions])),
            )
        )
    return GroupedState(groups=tuple(groups))


def max_available_power(state: FleetState, fleet: list[Device]) -> float:
    """Sum of max powers over non-empty devices, kW."""
    _check_lengths(state, fleet)
    p = max_powers(fleet)
    return float(np.sum(p[state.times_to_go > 0.0]))


def support(state: FleetState) -> frozenset[int]:
    """Ids of devices that are not empty."""
    return frozenset(int(pos) + 1 for pos in np.flatnonzero(state.times_to_go > 0.0))
