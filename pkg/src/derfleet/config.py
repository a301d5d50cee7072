"""Run configuration: one JSON file drives every CLI subcommand.

Schema (all units kW / kWh / hours):

    {
      // exactly one fleet+signal source: either a "scenario" block that
      // generates both, or inline "fleet" and "signal" blocks
      "scenario": {
        "n": 1000,
        "ttg_hours": [0, 10],
        "max_power_kw": [0, 1.5],
        "reference_mean_kw": 200,
        "reference_std_kw": 80,
        "step_hours": 1,
        "horizon_hours": 24,
        "seed": 1
      },
      "fleet": [
        {"id": 1, "max_power_kw": 1.0, "energy_kwh": 2.0},
        {"id": 2, "max_power_kw": 2.0, "stored_energy_kwh": 4.0, "efficiency": 0.5}
      ],
      "signal": {"breakpoints_hours": [0, 2], "values_kw": [1, 3], "horizon_hours": 4},
      "policies": ["op", "lpf", "pop"],          // optional, default ["op"]
      "tolerances": {                            // optional, defaults shown
        "grouping_hours": 1e-9,
        "snap_hours": 1e-12,
        "bisection_hours": 1e-9
      },
      "samples": 0                               // extra uniform state samples
    }

Device entries accept either "energy_kwh" or "stored_energy_kwh" (the
latter scaled by "efficiency", default 1). Ids are optional; when present
they must be 1..n in order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .engine import DEPLETION_SNAP
from .fleet import DEFAULT_GROUP_TOLERANCE, Device, FleetState, initial_state
from .policies import Policy
from .reference import ReferenceSignal, ScenarioSpec, sample_scenario

__all__ = ["ConfigError", "RunConfig", "load_config"]


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass
class RunConfig:
    """Validated run inputs; exactly one of scenario or (fleet, signal) is set."""

    scenario: ScenarioSpec | None = None
    fleet: list[Device] | None = None
    signal: ReferenceSignal | None = None
    policies: list[Policy] = field(default_factory=lambda: [Policy.OP])
    grouping_tolerance: float = DEFAULT_GROUP_TOLERANCE
    snap: float = DEPLETION_SNAP
    bisection_tolerance: float = 1e-9
    samples: int = 0

    def materialize(self) -> tuple[list[Device], FleetState, ReferenceSignal]:
        """Fleet, initial state and signal for this run."""
        if self.scenario is not None:
            fleet, signal = sample_scenario(self.scenario)
        else:
            fleet, signal = self.fleet, self.signal
        return fleet, initial_state(fleet), signal

    def with_seed(self, seed: int) -> "RunConfig":
        if self.scenario is None:
            raise ConfigError("--seed requires a scenario-based config")
        scenario = ScenarioSpec(
            n=self.scenario.n,
            ttg_low=self.scenario.ttg_low,
            ttg_high=self.scenario.ttg_high,
            power_low=self.scenario.power_low,
            power_high=self.scenario.power_high,
            reference_mean=self.scenario.reference_mean,
            reference_std=self.scenario.reference_std,
            step=self.scenario.step,
            horizon=self.scenario.horizon,
            seed=seed,
        )
        return RunConfig(
            scenario=scenario,
            policies=list(self.policies),
            grouping_tolerance=self.grouping_tolerance,
            snap=self.snap,
            bisection_tolerance=self.bisection_tolerance,
            samples=self.samples,
        )


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ConfigError(f"{context}: missing required key {key!r}")
    return mapping[key]


def _pair(raw, context: str) -> tuple[float, float]:
    if not isinstance(raw, (list, tuple)) or len(raw) != 2:
        raise ConfigError(f"{context}: expected [low, high]")
    return float(raw[0]), float(raw[1])


def _parse_scenario(raw: dict) -> ScenarioSpec:
    ttg = _pair(_require(raw, "ttg_hours", "scenario"), "scenario.ttg_hours")
    power = _pair(_require(raw, "max_power_kw", "scenario"), "scenario.max_power_kw")
    try:
        return ScenarioSpec(
            n=int(_require(raw, "n", "scenario")),
            ttg_low=ttg[0],
            ttg_high=ttg[1],
            power_low=power[0],
            power_high=power[1],
            reference_mean=float(_require(raw, "reference_mean_kw", "scenario")),
            reference_std=float(_require(raw, "reference_std_kw", "scenario")),
            step=float(_require(raw, "step_hours", "scenario")),
            horizon=float(_require(raw, "horizon_hours", "scenario")),
            seed=int(_require(raw, "seed", "scenario")),
        )
    except ValueError as exc:
        raise ConfigError(f"scenario: {exc}") from exc


def _parse_fleet(raw) -> list[Device]:
    if not isinstance(raw, list) or not raw:
        raise ConfigError("fleet: expected a nonempty list of devices")
    devices = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise ConfigError(f"fleet[{i}]: expected an object")
        dev_id = int(entry.get("id", i + 1))
        if dev_id != i + 1:
            raise ConfigError(f"fleet[{i}]: ids must run 1..n in order, got {dev_id}")
        max_power = float(_require(entry, "max_power_kw", f"fleet[{i}]"))
        efficiency = float(entry.get("efficiency", 1.0))
        has_energy = "energy_kwh" in entry
        has_stored = "stored_energy_kwh" in entry
        if has_energy == has_stored:
            raise ConfigError(
                f"fleet[{i}]: provide exactly one of energy_kwh or stored_energy_kwh"
            )
        try:
            if has_stored:
                device = Device.from_stored_energy(
                    id=dev_id,
                    max_power=max_power,
                    stored_energy=float(entry["stored_energy_kwh"]),
                    efficiency=efficiency,
                )
            else:
                device = Device(
                    id=dev_id,
                    max_power=max_power,
                    extractable_energy=float(entry["energy_kwh"]),
                    efficiency=efficiency,
                )
        except ValueError as exc:
            raise ConfigError(f"fleet[{i}]: {exc}") from exc
        devices.append(device)
    return devices


def _parse_signal(raw: dict) -> ReferenceSignal:
    try:
        return ReferenceSignal(
            breakpoints=tuple(float(b) for b in _require(raw, "breakpoints_hours", "signal")),
            values=tuple(float(v) for v in _require(raw, "values_kw", "signal")),
            horizon=float(_require(raw, "horizon_hours", "signal")),
        )
    except ValueError as exc:
        raise ConfigError(f"signal: {exc}") from exc


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate a JSON run configuration."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")

    has_scenario = "scenario" in raw
    has_inline = "fleet" in raw or "signal" in raw
    if has_scenario and has_inline:
        raise ConfigError("provide either a scenario block or inline fleet+signal, not both")
    if not has_scenario and not ("fleet" in raw and "signal" in raw):
        raise ConfigError("config needs a scenario block, or both fleet and signal blocks")

    config = RunConfig()
    if has_scenario:
        config.scenario = _parse_scenario(raw["scenario"])
    else:
        config.fleet = _parse_fleet(raw["fleet"])
        config.signal = _parse_signal(raw["signal"])

    if "policies" in raw:
        names = raw["policies"]
        if not isinstance(names, list) or not names:
            raise ConfigError("policies: expected a nonempty list of names")
        try:
            config.policies = [Policy.from_name(str(name)) for name in names]
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    tolerances = raw.get("tolerances", {})
    if not isinstance(tolerances, dict):
        raise ConfigError("tolerances: expected an object")
    config.grouping_tolerance = float(tolerances.get("grouping_hours", config.grouping_tolerance))
    config.snap = float(tolerances.get("snap_hours", config.snap))
    config.bisection_tolerance = float(
        tolerances.get("bisection_hours", config.bisection_tolerance)
    )
    for name in ("grouping_tolerance", "snap", "bisection_tolerance"):
        if getattr(config, name) <= 0.0:
            raise ConfigError(f"tolerances: {name} must be > 0")

    config.samples = int(raw.get("samples", 0))
    if config.samples < 0:
        raise ConfigError("samples must be >= 0")
    return config
