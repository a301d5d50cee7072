"""Delimited trace output, JSON summaries, and the policy comparison harness.

File formats (all units kW / kWh / hours; floats written with shortest
round-trip repr, so identical runs produce byte-identical files):

    events.csv            time,kind,payload
    states.csv            time,x_1..x_n,u_1..u_n
    reference.csv         t_start,t_end,power_kw
    available_power.csv   policy,time_h,available_kw
    comparison.csv        policy,time_to_failure_h,survived,
                          delivered_energy_kwh,depletions,equalisations
    summary.json          validated against schema/summary.schema.json
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .engine import (
    SimulationTrace,
    available_power_trajectory,
    simulate,
    state_at,
)
from .fleet import Device, FleetState
from .policies import Policy
from .reference import ReferenceSignal, segments

__all__ = [
    "ComparisonResult",
    "PolicyRun",
    "SchemaError",
    "run_comparison",
    "summary_dict",
    "validate_summary",
    "write_available_power_csv",
    "write_comparison_csv",
    "write_events_csv",
    "write_fleet_csv",
    "write_reference_csv",
    "write_states_csv",
    "write_summary_json",
]


def _fmt(value: float) -> str:
    return repr(float(value))


# ---------------------------------------------------------------- CSV writers


def write_events_csv(path: Path, trace: SimulationTrace) -> None:
    lines = ["time,kind,payload"]
    for event in trace.events:
        parts = []
        if event.devices:
            parts.append("devices=" + ";".join(str(i) for i in event.devices))
        if event.request is not None:
            parts.append(f"request_kw={_fmt(event.request)}")
        if event.available is not None:
            parts.append(f"available_kw={_fmt(event.available)}")
        lines.append(f"{_fmt(event.time)},{event.kind.value},{' '.join(parts)}")
    path.write_text("\n".join(lines) + "\n")


def write_states_csv(
    path: Path,
    trace: SimulationTrace,
    fleet: list[Device],
    extra_samples: int = 0,
) -> None:
    """Event samples plus optionally ``extra_samples`` uniform ones, merged in time."""
    n = len(fleet)
    header = (
        "time,"
        + ",".join(f"x_{i}" for i in range(1, n + 1))
        + ","
        + ",".join(f"u_{i}" for i in range(1, n + 1))
    )
    rows: list[tuple[float, np.ndarray, np.ndarray]] = [
        (s.time, s.state.times_to_go, s.decision.powers) for s in trace.samples
    ]
    if extra_samples > 0:
        end = trace.samples[-1].time
        sample_times = {s.time for s in trace.samples}
        for t in np.linspace(0.0, end, extra_samples + 1):
            t = float(t)
            if t in sample_times:
                continue
            x = state_at(trace, fleet, t)
            idx = max(0, int(np.searchsorted([s.time for s in trace.samples], t, side="right")) - 1)
            rows.append((t, x, trace.samples[idx].decision.powers))
        rows.sort(key=lambda row: row[0])
    lines = [header]
    for t, x, u in rows:
        lines.append(
            f"{_fmt(t)},"
            + ",".join(_fmt(v) for v in x)
            + ","
            + ",".join(_fmt(v) for v in u)
        )
    path.write_text("\n".join(lines) + "\n")


def write_reference_csv(path: Path, signal: ReferenceSignal) -> None:
    lines = ["t_start,t_end,power_kw"]
    for start, end, value in segments(signal):
        lines.append(f"{_fmt(start)},{_fmt(end)},{_fmt(value)}")
    path.write_text("\n".join(lines) + "\n")


def write_fleet_csv(path: Path, fleet: list[Device]) -> None:
    lines = ["id,max_power_kw,energy_kwh"]
    for device in fleet:
        lines.append(f"{device.id},{_fmt(device.max_power)},{_fmt(device.extractable_energy)}")
    path.write_text("\n".join(lines) + "\n")


def write_available_power_csv(path: Path, steps_by_policy: dict[str, list[tuple[float, float]]]) -> None:
    lines = ["policy,time_h,available_kw"]
    for policy, steps in steps_by_policy.items():
        for t, kw in steps:
            lines.append(f"{policy},{_fmt(t)},{_fmt(kw)}")
    path.write_text("\n".join(lines) + "\n")


# ------------------------------------------------------------------ summaries


def summary_dict(
    command: str,
    runs: "list[PolicyRun]",
    horizon: float,
    n_devices: int,
    seed: int | None,
    tolerances: dict[str, float],
) -> dict:
    return {
        "command": command,
        "seed": seed,
        "n_devices": n_devices,
        "horizon_h": horizon,
        "tolerances": tolerances,
        "results": [
            {
                "policy": run.policy.value,
                "failure_time_h": run.trace.failure_time,
                "survived": run.trace.survived,
                "time_to_failure_h": run.trace.time_to_failure,
                "delivered_energy_kwh": run.trace.delivered_energy,
                "event_counts": run.trace.event_counts(),
            }
            for run in runs
        ],
    }


def write_summary_json(path: Path, summary: dict) -> None:
    validate_summary(summary)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


class SchemaError(ValueError):
    """A summary document does not match the published schema."""


def _load_schema() -> dict:
    text = resources.files("derfleet").joinpath("schema/summary.schema.json").read_text()
    return json.loads(text)


def _check(instance, schema: dict, where: str) -> None:
    types = schema.get("type")
    if types is not None:
        allowed = types if isinstance(types, list) else [types]
        mapping = {
            "object": dict,
            "array": list,
            "string": str,
            "boolean": bool,
            "null": type(None),
        }
        ok = False
        for name in allowed:
            if name == "number":
                ok = ok or (isinstance(instance, (int, float)) and not isinstance(instance, bool))
            elif name == "integer":
                ok = ok or (isinstance(instance, int) and not isinstance(instance, bool))
            else:
                ok = ok or isinstance(instance, mapping[name])
        if not ok:
            raise SchemaError(f"{where}: expected {types}, got {type(instance).__name__}")
    if "enum" in schema and instance not in schema["enum"]:
        raise SchemaError(f"{where}: {instance!r} not in {schema['enum']}")
    if isinstance(instance, (int, float)) and not isinstance(instance, bool):
        if "minimum" in schema and instance < schema["minimum"]:
            raise SchemaError(f"{where}: {instance} < minimum {schema['minimum']}")
        if "exclusiveMinimum" in schema and instance <= schema["exclusiveMinimum"]:
            raise SchemaError(f"{where}: {instance} <= exclusiveMinimum {schema['exclusiveMinimum']}")
    if isinstance(instance, dict):
        for key in schema.get("required", []):
            if key not in instance:
                raise SchemaError(f"{where}: missing required key {key!r}")
        for key, subschema in schema.get("properties", {}).items():
            if key in instance:
                _check(instance[key], subschema, f"{where}.{key}")
    if isinstance(instance, list):
        if "minItems" in schema and len(instance) < schema["minItems"]:
            raise SchemaError(f"{where}: fewer than {schema['minItems']} items")
        item_schema = schema.get("items")
        if item_schema:
            for i, item in enumerate(instance):
                _check(item, item_schema, f"{where}[{i}]")


def validate_summary(summary: dict) -> None:
    """Raise SchemaError unless the summary matches the published schema."""
    _check(summary, _load_schema(), "summary")


# ------------------------------------------------------- comparison harness


@dataclass(frozen=True)
class PolicyRun:
    policy: Policy
    trace: SimulationTrace
    available_power: list[tuple[float, float]]


@dataclass(frozen=True)
class ComparisonResult:
    """All policies run on one shared scenario instantiation."""

    runs: tuple[PolicyRun, ...]

    def run_for(self, policy: Policy) -> PolicyRun:
        for run in self.runs:
            if run.policy is policy:
                return run
        raise KeyError(policy)


def run_comparison(
    fleet: list[Device],
    state0: FleetState,
    signal: ReferenceSignal,
    policies: list[Policy],
    grouping_tolerance: float,
    keep_samples: bool = False,
) -> ComparisonResult:
    """Simulate every policy on the identical fleet, state, and signal."""
    runs = []
    for policy in policies:
        trace = simulate(
            fleet,
            state0,
            signal,
            policy,
            grouping_tolerance=grouping_tolerance,
            keep_samples=keep_samples,
        )
        runs.append(
            PolicyRun(
                policy=policy,
                trace=trace,
                available_power=available_power_trajectory(trace, fleet),
            )
        )
    return ComparisonResult(runs=tuple(runs))


def write_comparison_csv(path: Path, result: ComparisonResult) -> None:
    lines = ["policy,time_to_failure_h,survived,delivered_energy_kwh,depletions,equalisations"]
    for run in result.runs:
        counts = run.trace.event_counts()
        lines.append(
            f"{run.policy.value},{_fmt(run.trace.time_to_failure)},"
            f"{str(run.trace.survived).lower()},{_fmt(run.trace.delivered_energy)},"
            f"{counts['depletion']},{counts['equalisation']}"
        )
    path.write_text("\n".join(lines) + "\n")
