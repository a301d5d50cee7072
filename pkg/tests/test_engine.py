"""Event-driven simulator: exact events, traces, and failure semantics.

Golden values for the multi-policy stepped scenario were derived by hand
event calculus and confirmed against the flow oracle (the op failure time
matches the oracle's bisection; the baselines' states at their failure
instants are checked by direct arithmetic below).
"""
import numpy as np
import pytest

from derfleet.engine import (
    EventKind,
    advance,
    available_power_trajectory,
    simulate,
    state_at,
    time_to_failure,
)
from derfleet.fleet import FleetState, make_fleet
from derfleet.oracle import oracle_time_to_failure
from derfleet.policies import Policy
from derfleet.reference import ReferenceSignal, constant_signal

STEPPED = ReferenceSignal(breakpoints=(0.0, 2.0), values=(1.0, 3.0), horizon=4.0)


def stepped_fleet():
    return make_fleet([1, 2], [2, 2]), FleetState(np.array([2.0, 1.0]))


class TestAdvance:
    def test_runs_to_equalisation(self):
        fleet = make_fleet([1, 1], [3, 1])
        state, elapsed, events, decision = advance(
            FleetState(np.array([3.0, 1.0])), fleet, Policy.OP, 1.0, 10.0
        )
        assert elapsed == pytest.approx(2.0, abs=1e-12)
        assert state == FleetState(np.array([1.0, 1.0]))
        assert [e.kind for e in events] == [EventKind.EQUALISATION]
        assert events[0].devices == (1, 2)
        np.testing.assert_allclose(decision.powers, [1.0, 0.0], atol=1e-12)

    def test_merged_group_depletes_together(self):
        fleet = make_fleet([1, 1], [3, 1])
        state, elapsed, events, decision = advance(
            FleetState(np.array([1.0, 1.0])), fleet, Policy.OP, 1.0, 10.0
        )
        assert elapsed == pytest.approx(2.0, abs=1e-12)
        assert state == FleetState(np.array([0.0, 0.0]))
        assert [e.kind for e in events] == [EventKind.DEPLETION]
        assert events[0].devices == (1, 2)
        np.testing.assert_allclose(decision.powers, [0.5, 0.5], atol=1e-12)
        # total 4 kWh at 1 kW: the oracle puts the failure at 4 h
        theta = oracle_time_to_failure(
            fleet, FleetState(np.array([3.0, 1.0])), constant_signal(1.0, 10.0)
        )
        assert theta == pytest.approx(4.0, abs=1e-6)

    def test_budget_limits_step(self):
        fleet = make_fleet([1, 1], [3, 1])
        state, elapsed, events, _ = advance(
            FleetState(np.array([3.0, 1.0])), fleet, Policy.OP, 1.0, 0.5
        )
        assert elapsed == 0.5
        assert events == ()
        assert state == FleetState(np.array([2.5, 1.0]))

    def test_rejects_nonpositive_budget(self):
        fleet = make_fleet([1], [1])
        with pytest.raises(ValueError):
            advance(FleetState(np.array([1.0])), fleet, Policy.OP, 1.0, 0.0)

    def test_rejects_infeasible_dispatch(self):
        fleet = make_fleet([1], [1])
        with pytest.raises(ValueError):
            advance(FleetState(np.array([1.0])), fleet, Policy.OP, 2.0, 1.0)


class TestSimulateBasics:
    def test_power_forced_failure(self):
        fleet = make_fleet([1, 1], [2, 1])
        trace = simulate(fleet, FleetState(np.array([2.0, 1.0])), constant_signal(2.0, 5.0), Policy.OP)
        assert trace.failure_time == pytest.approx(1.0, abs=1e-12)
        assert trace.time_to_failure == pytest.approx(1.0, abs=1e-12)
        kinds = [e.kind for e in trace.events]
        assert kinds == [EventKind.SEGMENT_CHANGE, EventKind.DEPLETION, EventKind.FAILURE]
        assert trace.events[1].devices == (2,)
        failure = trace.events[2]
        assert failure.request == 2.0
        assert failure.available == pytest.approx(1.0, abs=1e-12)

    def test_energy_exhaustion(self):
        fleet = make_fleet([1], [3])
        trace = simulate(fleet, FleetState(np.array([3.0])), constant_signal(0.5, 10.0), Policy.OP)
        assert trace.time_to_failure == pytest.approx(6.0, abs=1e-12)
        assert trace.delivered_energy == pytest.approx(3.0, rel=1e-12)

    def test_survives_zero_reference_with_empty_fleet(self):
        fleet = make_fleet([1], [0])
        trace = simulate(fleet, FleetState(np.array([0.0])), constant_signal(0.0, 4.0), Policy.OP)
        assert trace.survived
        assert trace.time_to_failure == 4.0

    def test_survival_caps_at_horizon(self):
        fleet = make_fleet([2], [10])
        trace = simulate(fleet, FleetState(np.array([5.0])), constant_signal(1.0, 3.0), Policy.OP)
        assert trace.survived
        assert trace.failure_time is None
        assert trace.time_to_failure == 3.0
        assert trace.delivered_energy == pytest.approx(3.0, rel=1e-12)


class TestSteppedGolden:
    def test_op_trace(self):
        fleet, state0 = stepped_fleet()
        trace = simulate(fleet, state0, STEPPED, Policy.OP)
        assert trace.time_to_failure == pytest.approx(8.0 / 3.0, abs=1e-12)
        by_kind = {}
        for e in trace.events:
            by_kind.setdefault(e.kind, []).append(e)
        assert [e.time for e in by_kind[EventKind.EQUALISATION]] == [pytest.approx(1.0, abs=1e-12)]
        # state [1,1] at the equalisation, [2/3,2/3] at the segment change
        np.testing.assert_allclose(state_at(trace, fleet, 1.0), [1.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(
            state_at(trace, fleet, 2.0), [2.0 / 3.0, 2.0 / 3.0], atol=1e-12
        )
        # oracle bisection agrees with the simulated failure time
        assert oracle_time_to_failure(fleet, state0, STEPPED) == pytest.approx(
            trace.time_to_failure, abs=1e-6
        )

    def test_lpf_trace(self):
        fleet, state0 = stepped_fleet()
        trace = simulate(fleet, state0, STEPPED, Policy.LPF)
        assert trace.time_to_failure == pytest.approx(2.0, abs=1e-12)
        # device 1 ran alone at 1 kW and emptied exactly at the segment change
        np.testing.assert_allclose(state_at(trace, fleet, 2.0), [0.0, 1.0], atol=1e-12)
        failure = trace.events[-1]
        assert failure.kind is EventKind.FAILURE
        assert failure.available == pytest.approx(2.0, abs=1e-12)
        assert failure.request == 3.0

    def test_pop_trace(self):
        fleet, state0 = stepped_fleet()
        trace = simulate(fleet, state0, STEPPED, Policy.POP)
        assert trace.time_to_failure == pytest.approx(7.0 / 3.0, abs=1e-12)
        # proportional shares drain both at rate 1/3 until the step to 3 kW
        np.testing.assert_allclose(state_at(trace, fleet, 2.0), [4.0 / 3.0, 1.0 / 3.0], atol=1e-12)
        np.testing.assert_allclose(state_at(trace, fleet, 7.0 / 3.0), [1.0, 0.0], atol=1e-12)

    def test_op_dominates_baselines(self):
        fleet, state0 = stepped_fleet()
        thetas = {p: time_to_failure(fleet, state0, STEPPED, p) for p in Policy}
        assert thetas[Policy.OP] >= thetas[Policy.LPF]
        assert thetas[Policy.OP] >= thetas[Policy.POP]


class TestTimeToFailure:
    def test_energy_limited(self):
        fleet = make_fleet([1, 1], [2, 1])
        theta = time_to_failure(fleet, FleetState(np.array([2.0, 1.0])), constant_signal(1.0, 5.0), Policy.OP)
        assert theta == pytest.approx(3.0, abs=1e-12)
        assert oracle_time_to_failure(
            fleet, FleetState(np.array([2.0, 1.0])), constant_signal(1.0, 5.0)
        ) == pytest.approx(3.0, abs=1e-6)

    def test_power_limited(self):
        fleet = make_fleet([1, 1], [2, 1])
        theta = time_to_failure(fleet, FleetState(np.array([2.0, 1.0])), constant_signal(2.0, 5.0), Policy.OP)
        assert theta == pytest.approx(1.0, abs=1e-12)

    def test_single_device(self):
        fleet = make_fleet([2], [6])
        theta = time_to_failure(fleet, FleetState(np.array([3.0])), constant_signal(1.0, 10.0), Policy.OP)
        assert theta == pytest.approx(6.0, abs=1e-12)


class TestAvailablePowerTrajectory:
    def test_constant_without_depletions(self):
        fleet = make_fleet([2], [10])
        trace = simulate(fleet, FleetState(np.array([5.0])), constant_signal(1.0, 2.0), Policy.OP)
        assert available_power_trajectory(trace, fleet) == [(0.0, 2.0)]

    def test_steps_down_at_depletion(self):
        fleet = make_fleet([1, 1], [2, 1])
        trace = simulate(fleet, FleetState(np.array([2.0, 1.0])), constant_signal(2.0, 5.0), Policy.OP)
        steps = available_power_trajectory(trace, fleet)
        assert steps == [(0.0, 2.0), (pytest.approx(1.0, abs=1e-12), 1.0)]

    def test_nonincreasing_everywhere(self, rng):
        from conftest import desk_instance

        for _ in range(50):
            fleet, state0, sig = desk_instance(rng)
            for policy in Policy:
                trace = simulate(fleet, state0, sig, policy)
                steps = available_power_trajectory(trace, fleet)
                values = [kw for _, kw in steps]
                assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))


class TestDeterminism:
    def test_identical_traces_bit_for_bit(self, rng):
        from conftest import desk_instance

        for _ in range(25):
            fleet, state0, sig = desk_instance(rng)
            for policy in Policy:
                t1 = simulate(fleet, state0, sig, policy)
                t2 = simulate(fleet, state0, sig, policy)
                assert t1.events == t2.events
                assert t1.failure_time == t2.failure_time
                assert t1.delivered_energy == t2.delivered_energy
                for s1, s2 in zip(t1.samples, t2.samples):
                    assert s1.time == s2.time
                    assert np.array_equal(s1.state.times_to_go, s2.state.times_to_go)
                    assert np.array_equal(s1.decision.powers, s2.decision.powers)


class TestCustomRules:
    def test_random_priority_rule_runs(self, rng):
        from conftest import desk_instance, random_priority_rule

        fleet, state0, sig = desk_instance(rng)
        rule = random_priority_rule(rng, len(fleet))
        trace = simulate(fleet, state0, sig, rule)
        assert trace.time_to_failure > 0.0 or trace.failure_time == 0.0

    def test_rule_violating_box_rejected(self):
        fleet = make_fleet([1], [2])

        def cheat(x, p, request):
            return p * 2.0

        with pytest.raises(ValueError):
            simulate(fleet, FleetState(np.array([2.0])), constant_signal(1.0, 1.0), cheat)

    def test_rule_underdelivering_rejected(self):
        fleet = make_fleet([1], [2])

        def lazy(x, p, request):
            return np.zeros_like(p)

        with pytest.raises(ValueError):
            simulate(fleet, FleetState(np.array([2.0])), constant_signal(1.0, 1.0), lazy)


class TestSampleBookkeeping:
    def test_keep_samples_false_retains_endpoints(self):
        fleet, state0 = stepped_fleet()
        trace = simulate(fleet, state0, STEPPED, Policy.OP, keep_samples=False)
        assert len(trace.samples) == 2
        assert trace.samples[0].time == 0.0
        assert trace.samples[-1].time == pytest.approx(8.0 / 3.0, abs=1e-12)
        full = simulate(fleet, state0, STEPPED, Policy.OP)
        assert trace.events == full.events

    def test_state_at_interpolates_exactly(self):
        fleet, state0 = stepped_fleet()
        trace = simulate(fleet, state0, STEPPED, Policy.OP)
        # device 1 runs at 1 kW on [0,1): x_1(0.25) = 1.75
        np.testing.assert_allclose(state_at(trace, fleet, 0.25), [1.75, 1.0], atol=1e-12)
        # merged group drains at 1/3 on [1,2): x(1.5) = [5/6, 5/6]
        np.testing.assert_allclose(
            state_at(trace, fleet, 1.5), [5.0 / 6.0, 5.0 / 6.0], atol=1e-12
        )

    def test_energy_balance_against_state_difference(self, rng):
        from conftest import desk_instance
        from derfleet.fleet import max_powers

        for _ in range(50):
            fleet, state0, sig = desk_instance(rng)
            for policy in Policy:
                trace = simulate(fleet, state0, sig, policy)
                p = max_powers(fleet)
                x0 = trace.samples[0].state.times_to_go
                x_end = trace.samples[-1].state.times_to_go
                from_states = float(np.sum(p * (x0 - x_end)))
                scale = max(1.0, abs(from_states))
                assert abs(trace.delivered_energy - from_states) <= 1e-9 * scale
