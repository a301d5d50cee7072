"""Dispatch of energy-constrained, discharge-only resource fleets.

A library and CLI for simulating how a fleet of distributed energy
resources tracks a power request: three greedy feedback policies, an
exact event-driven simulator of the resulting piecewise-linear dynamics,
and an independent max-flow feasibility oracle for verifying times to
failure.
"""
from .engine import (
    Event,
    EventKind,
    SimulationTrace,
    TraceSample,
    advance,
    available_power_trajectory,
    simulate,
    state_at,
    time_to_failure,
)
from .fleet import (
    Device,
    FleetState,
    Group,
    GroupedState,
    group_state,
    initial_state,
    make_fleet,
    max_available_power,
    support,
    time_to_go,
)
from .oracle import (
    FlowInstance,
    FlowResult,
    feasible,
    flow_instance,
    max_flow,
    max_flow_detail,
    oracle_time_to_failure,
)
from .policies import (
    DispatchDecision,
    Policy,
    dispatch,
    lpf_dispatch,
    op_dispatch,
    pop_dispatch,
)
from .reference import (
    ReferenceSignal,
    ScenarioSpec,
    constant_signal,
    sample_scenario,
    truncate,
    value_at,
)

__version__ = "0.1.0"

__all__ = [
    "Device",
    "DispatchDecision",
    "Event",
    "EventKind",
    "FleetState",
    "FlowInstance",
    "FlowResult",
    "Group",
    "GroupedState",
    "Policy",
    "ReferenceSignal",
    "ScenarioSpec",
    "SimulationTrace",
    "TraceSample",
    "advance",
    "available_power_trajectory",
    "constant_signal",
    "dispatch",
    "feasible",
    "flow_instance",
    "group_state",
    "initial_state",
    "lpf_dispatch",
    "make_fleet",
    "max_available_power",
    "max_flow",
    "max_flow_detail",
    "op_dispatch",
    "oracle_time_to_failure",
    "pop_dispatch",
    "sample_scenario",
    "simulate",
    "state_at",
    "support",
    "time_to_failure",
    "time_to_go",
    "truncate",
    "value_at",
]
