"""Piecewise-constant power reference signals and randomized scenarios.

A signal holds one value per segment, is right-continuous at breakpoints,
and is zero from its horizon onwards. Scenario sampling follows a fixed
stream order (device times-to-go, then device max powers, then reference
values) on a seeded PCG64 generator, so equal specs reproduce bit-identical
fleets and signals on any platform.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fleet import Device

__all__ = [
    "ReferenceSignal",
    "ScenarioSpec",
    "constant_signal",
    "sample_scenario",
    "segments",
    "truncate",
    "value_at",
]


@dataclass(frozen=True)
class ReferenceSignal:
    """Nonnegative stepwise power request over [0, horizon), kW."""

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]
    horizon: float

    def __post_init__(self) -> None:
        bp = tuple(float(b) for b in self.breakpoints)
        vals = tuple(float(v) for v in self.values)
        if len(bp) == 0:
            raise ValueError("signal needs at least one segment")
        if len(bp) != len(vals):
            raise ValueError(f"{len(bp)} breakpoints but {len(vals)} values")
        if bp[0] != 0.0:
            raise ValueError(f"first breakpoint must be 0, got {bp[0]}")
        if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if any(v < 0.0 for v in vals):
            raise ValueError("segment values must be >= 0")
        horizon = float(self.horizon)
        if horizon <= bp[-1]:
            raise ValueError(f"horizon {horizon} must exceed the last breakpoint {bp[-1]}")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "horizon", horizon)

    @property
    def segment_count(self) -> int:
        return len(self.values)


def constant_signal(power: float, horizon: float) -> ReferenceSignal:
    """Single-segment signal holding ``power`` kW on [0, horizon)."""
    return ReferenceSignal(breakpoints=(0.0,), values=(float(power),), horizon=horizon)


def segments(signal: ReferenceSignal) -> list[tuple[float, float, float]]:
    """(start, end, value) triples covering [0, horizon)."""
    ends = signal.breakpoints[1:] + (signal.horizon,)
    return [(s, e, v) for s, e, v in zip(signal.breakpoints, ends, signal.values)]


def value_at(signal: ReferenceSignal, t: float) -> float:
    """Requested power at time t; right-continuous, zero from the horizon on."""
    if t < 0.0:
        raise ValueError(f"t must be >= 0, got {t}")
    if t >= signal.horizon:
        return 0.0
    # rightmost breakpoint <= t
    idx = int(np.searchsorted(np.asarray(signal.breakpoints), t, side="right")) - 1
    return signal.values[idx]


def truncate(signal: ReferenceSignal, t: float) -> ReferenceSignal:
    """Signal equal to the original on [0, t) and zero afterwards."""
    if t < 0.0:
        raise ValueError(f"t must be >= 0, got {t}")
    if t >= signal.horizon:
        return signal
    if t == 0.0:
        return ReferenceSignal(breakpoints=(0.0,), values=(0.0,), horizon=signal.horizon)
    keep = sum(1 for b in signal.breakpoints if b < t)
    return ReferenceSignal(
        breakpoints=signal.breakpoints[:keep], values=signal.values[:keep], horizon=t
    )


@dataclass(frozen=True)
class ScenarioSpec:
    """Randomized fleet + hourly-style reference, uniform device parameters.

    times-to-go ~ U(ttg_low, ttg_high) hours, max powers ~ U(power_low,
    power_high) kW, per-segment reference values ~ Normal(reference_mean,
    reference_std) kW clamped below at zero.
    """

    n: int
    ttg_low: float
    ttg_high: float
    power_low: float
    power_high: float
    reference_mean: float
    reference_std: float
    step: float
    horizon: float
    seed: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.ttg_low < 0.0 or self.ttg_high < self.ttg_low:
            raise ValueError("ttg bounds must satisfy 0 <= low <= high")
        if self.power_low < 0.0 or self.power_high < self.power_low:
            raise ValueError("power bounds must satisfy 0 <= low <= high")
        if self.reference_std < 0.0:
            raise ValueError("reference_std must be >= 0")
        if self.step <= 0.0:
            raise ValueError(f"step must be > 0, got {self.step}")
        k = self.horizon / self.step
        if self.horizon <= 0.0 or abs(k - round(k)) > 1e-9 or round(k) < 1:
            raise ValueError(
                f"horizon {self.horizon} must be a positive multiple of step {self.step}"
            )

    @property
    def segment_count(self) -> int:
        return int(round(self.horizon / self.step))


def sample_scenario(spec: ScenarioSpec) -> tuple[list[Device], ReferenceSignal]:
    """Draw a fleet and reference from the spec; equal seeds reproduce exactly.

    Stream order is fixed: n times-to-go, then n max powers, then one
    reference value per segment.
    """
    rng = np.random.default_rng(spec.seed)
    ttg = rng.uniform(spec.ttg_low, spec.ttg_high, spec.n)
    powers = rng.uniform(spec.power_low, spec.power_high, spec.n)
    # uniform includes its lower endpoint; a zero-power device is invalid
    powers = np.maximum(powers, np.finfo(float).tiny)
    values = np.maximum(rng.normal(spec.reference_mean, spec.reference_std, spec.segment_count), 0.0)

    fleet = [
        Device(id=i + 1, max_power=float(p), extractable_energy=float(p * x))
        for i, (p, x) in enumerate(zip(powers, ttg))
    ]
    breakpoints = tuple(k * spec.step for k in range(spec.segment_count))
    signal = ReferenceSignal(
        breakpoints=breakpoints, values=tuple(float(v) for v in values), horizon=spec.horizon
    )
    return fleet, signal
