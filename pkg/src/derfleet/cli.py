"""Command-line interface.

    derfleet simulate     --config run.json [--policy op] [--out DIR]
    derfleet compare      --config run.json [--policy op,lpf,pop] [--out DIR]
    derfleet feasible     --config run.json [--out DIR] [--format csv|json]
    derfleet gen-scenario --config run.json [--out DIR]

A simulation that fails to meet its request still exits 0: the failure
time is the result, not an error. Nonzero exits are reserved for bad
configuration or usage, reported on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .engine import available_power_trajectory, simulate
from .figures import plot_available_power
from .oracle import feasible, flow_instance, max_flow_detail, oracle_time_to_failure
from .policies import Policy
from .reference import ReferenceSignal, segments
from .reports import (
    ComparisonResult,
    PolicyRun,
    run_comparison,
    summary_dict,
    write_available_power_csv,
    write_comparison_csv,
    write_events_csv,
    write_fleet_csv,
    write_reference_csv,
    write_states_csv,
    write_summary_json,
)

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="derfleet",
        description="Dispatch simulation and feasibility analysis for discharge-only DER fleets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="path to the JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument(
            "--format",
            choices=("csv", "json"),
            default="json",
            help="stdout report format (files always use their canonical formats)",
        )
        p.add_argument(
            "--tolerance-group", type=float, default=None, help="grouping tolerance, hours"
        )
        p.add_argument(
            "--tolerance-bisect", type=float, default=None, help="bisection tolerance, hours"
        )
        p.add_argument(
            "--samples", type=int, default=None, help="extra uniform state samples for states.csv"
        )

    p_sim = sub.add_parser("simulate", help="run one policy and write its trace")
    add_common(p_sim)
    p_sim.add_argument("--policy", default=None, help="policy name (op, lpf or pop)")

    p_cmp = sub.add_parser("compare", help="run several policies on one scenario")
    add_common(p_cmp)
    p_cmp.add_argument("--policy", default=None, help="comma-separated policy names (at least 2)")

    p_feas = sub.add_parser("feasible", help="feasibility and time to failure via the flow oracle")
    add_common(p_feas)

    p_gen = sub.add_parser("gen-scenario", help="sample a scenario and write fleet + reference")
    add_common(p_gen)
    return parser


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    if args.seed is not None:
        config = config.with_seed(args.seed)
    if args.tolerance_group is not None:
        if args.tolerance_group <= 0:
            raise ConfigError("--tolerance-group must be > 0")
        config.grouping_tolerance = args.tolerance_group
    if args.tolerance_bisect is not None:
        if args.tolerance_bisect <= 0:
            raise ConfigError("--tolerance-bisect must be > 0")
        config.bisection_tolerance = args.tolerance_bisect
    if args.samples is not None:
        if args.samples < 0:
            raise ConfigError("--samples must be >= 0")
        config.samples = args.samples
    return config


def _parse_policies(arg: str | None, config: RunConfig) -> list[Policy]:
    if arg is None:
        return list(config.policies)
    return [Policy.from_name(name) for name in arg.split(",") if name]


def _seed_of(config: RunConfig) -> int | None:
    return config.scenario.seed if config.scenario is not None else None


def _tolerances(config: RunConfig) -> dict[str, float]:
    return {
        "grouping_hours": config.grouping_tolerance,
        "snap_hours": config.snap,
        "bisection_hours": config.bisection_tolerance,
    }


def _report(summary: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        print("policy,time_to_failure_h,survived,delivered_energy_kwh")
        for row in summary["results"]:
            print(
                f"{row['policy']},{row['time_to_failure_h']!r},"
                f"{str(row['survived']).lower()},{row['delivered_energy_kwh']!r}"
            )


def _write_common(
    out: Path, result: ComparisonResult, signal: ReferenceSignal
) -> None:
    write_reference_csv(out / "reference.csv", signal)
    write_available_power_csv(
        out / "available_power.csv",
        {run.policy.value: run.available_power for run in result.runs},
    )


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    policies = _parse_policies(args.policy, config)
    policy = policies[0]
    fleet, state0, signal = config.materialize()
    trace = simulate(
        fleet,
        state0,
        signal,
        policy,
        grouping_tolerance=config.grouping_tolerance,
        snap=config.snap,
        keep_samples=True,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run = PolicyRun(
        policy=policy, trace=trace, available_power=available_power_trajectory(trace, fleet)
    )
    result = ComparisonResult(runs=(run,))
    write_events_csv(out / "events.csv", trace)
    write_states_csv(out / "states.csv", trace, fleet, extra_samples=config.samples)
    _write_common(out, result, signal)
    summary = summary_dict(
        "simulate", [run], signal.horizon, len(fleet), _seed_of(config), _tolerances(config)
    )
    write_summary_json(out / "summary.json", summary)
    plot_available_power(result, signal, out / "available_power.png")
    _report(summary, args.format)
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    policies = _parse_policies(args.policy, config)
    if len(policies) < 2:
        raise ConfigError("compare needs at least two policies (--policy op,lpf,pop)")
    fleet, state0, signal = config.materialize()
    result = run_comparison(
        fleet, state0, signal, policies, grouping_tolerance=config.grouping_tolerance
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_comparison_csv(out / "comparison.csv", result)
    _write_common(out, result, signal)
    summary = summary_dict(
        "compare", list(result.runs), signal.horizon, len(fleet), _seed_of(config), _tolerances(config)
    )
    write_summary_json(out / "summary.json", summary)
    plot_available_power(result, signal, out / "comparison.png")
    _report(summary, args.format)
    return 0


def cmd_feasible(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    fleet, state0, signal = config.materialize()
    is_feasible = feasible(fleet, state0, signal)
    theta = oracle_time_to_failure(fleet, state0, signal, tolerance=config.bisection_tolerance)
    detail = max_flow_detail(flow_instance(fleet, state0, signal, signal.horizon))
    report = {
        "feasible": is_feasible,
        "time_to_failure_h": theta,
        "horizon_h": signal.horizon,
        "total_demand_kwh": sum(v * (e - s) for s, e, v in segments(signal)),
        "max_flow_kwh": detail.value,
        "unmet_demand_kwh_per_segment": list(detail.unmet_demands),
        "certificate_flows_kwh": [[float(f) for f in row] for row in detail.flows],
    }
    if args.format == "json":
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        print("feasible,time_to_failure_h,max_flow_kwh")
        print(f"{str(is_feasible).lower()},{theta!r},{detail.value!r}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "feasible.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_gen_scenario(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    if config.scenario is None:
        raise ConfigError("gen-scenario requires a scenario block in the config")
    fleet, _, signal = config.materialize()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_fleet_csv(out / "fleet.csv", fleet)
    write_reference_csv(out / "reference.csv", signal)
    spec = config.scenario
    echo = {
        "n": spec.n,
        "ttg_hours": [spec.ttg_low, spec.ttg_high],
        "max_power_kw": [spec.power_low, spec.power_high],
        "reference_mean_kw": spec.reference_mean,
        "reference_std_kw": spec.reference_std,
        "step_hours": spec.step,
        "horizon_hours": spec.horizon,
        "seed": spec.seed,
    }
    (out / "scenario.json").write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n")
    if args.format == "json":
        print(json.dumps(echo, indent=2, sort_keys=True))
    else:
        print(f"n={spec.n} segments={spec.segment_count} seed={spec.seed} -> {out}")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "feasible": cmd_feasible,
    "gen-scenario": cmd_gen_scenario,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
