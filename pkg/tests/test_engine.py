"""Kernel semantics: schedules, the call layer, and whole-run behaviors."""

import random
from collections import Counter

import pytest

from rebootsim.engine import (
    ComponentRuntime,
    EventQueue,
    NotRecoveringError,
    RetryPolicy,
    Simulation,
    action_completion,
    app_restart_schedule,
    estimate_remaining_recovery,
    invoke,
    microreboot_schedule,
    server_restart_schedule,
)
from rebootsim.faults import ACTION_MICROREBOOT, RecoveryAction
from rebootsim.metrics import (
    DROPPED,
    FAILED,
    OK,
    OK_AFTER_RETRY,
    REFUSED,
    SUCCESS_OUTCOMES,
    TERMINAL_OUTCOMES,
)
from rebootsim.workload import build_workload

from conftest import failed_count, make_component, mini_model, mini_workload


def runtime_with_windows(windows, spec=None):
    rt = ComponentRuntime(spec or make_component("X", svc=10.0))
    rt.add_windows(windows)
    return rt


NO_RETRY = RetryPolicy(enabled=False)


class TestEventQueue:
    def test_orders_by_time_with_fifo_ties(self):
        q = EventQueue()
        q.push(5.0, "late")
        q.push(1.0, "first-at-1")
        q.push(1.0, "second-at-1")
        q.push(0.5, "early")
        out = [q.pop() for _ in range(len(q))]
        assert out == [(0.5, "early"), (1.0, "first-at-1"), (1.0, "second-at-1"), (5.0, "late")]


class TestSchedules:
    def test_single_microreboot_window(self, rubis_model):
        (w,) = microreboot_schedule(rubis_model, ["QueryEJB"], 100.0)
        assert (w.component, w.start, w.end) == ("QueryEJB", 100.0, 1100.0)

    def test_group_microreboot_serializes_redeploys(self, rubis_model):
        ws = microreboot_schedule(rubis_model, ["UserEJB", "ItemEJB", "BidEJB"], 0.0)
        assert [(w.component, w.start, w.end) for w in ws] == [
            ("BidEJB", 0.0, 1000.0),
            ("ItemEJB", 0.0, 2000.0),
            ("UserEJB", 0.0, 3000.0),
        ]

    def test_whole_restart_windows_cover_every_component(self, rubis_model):
        app = app_restart_schedule(rubis_model, 10.0)
        srv = server_restart_schedule(rubis_model, 10.0)
        assert {w.component for w in app} == set(rubis_model.components)
        assert all(w.end == 10.0 + rubis_model.app_restart_ms for w in app)
        assert all(w.end == 10.0 + rubis_model.server_restart_ms for w in srv)

    def test_action_completion(self, rubis_model):
        action = RecoveryAction(ACTION_MICROREBOOT, 50.0, ("UserEJB", "ItemEJB", "BidEJB"))
        assert action_completion(rubis_model, action) == 3050.0

    def test_empty_microreboot_rejected(self, rubis_model):
        from rebootsim.engine import EngineConfigError

        with pytest.raises(EngineConfigError):
            microreboot_schedule(rubis_model, [], 0.0)


class TestComponentRuntime:
    def test_status_transitions(self):
        rt = runtime_with_windows([(1000.0, 2000.0, "microreboot")])
        assert rt.status_at(999.9) == ("online", None)
        assert rt.status_at(1000.0) == ("recovering", 2000.0)
        assert rt.status_at(1999.9) == ("recovering", 2000.0)
        assert rt.status_at(2000.0) == ("online", None)

    def test_overlapping_windows_merge(self):
        rt = runtime_with_windows(
            [(1000.0, 2000.0, "microreboot"), (1500.0, 3000.0, "app_restart")]
        )
        assert rt.window_at(2500.0) >= 0
        assert rt.win_starts == [1000.0]
        assert rt.win_ends == [3000.0]

    def test_estimate_remaining_recovery_examples(self):
        rt = runtime_with_windows([(0.0, 1500.0, "microreboot")])
        assert estimate_remaining_recovery(rt, 700.0) == 800.0
        assert estimate_remaining_recovery(rt, 1500.0) == 0.0
        with pytest.raises(NotRecoveringError):
            estimate_remaining_recovery(rt, 1501.0)

    def test_estimate_sweep_is_non_increasing(self):
        rt = runtime_with_windows([(0.0, 1000.0, "microreboot")])
        values = [estimate_remaining_recovery(rt, float(t)) for t in range(0, 1001)]
        assert all(a >= b for a, b in zip(values, values[1:]))
        assert values[-1] == 0.0


class TestInvoke:
    def test_online_callee_returns_ok_after_service(self):
        rt = runtime_with_windows([])
        res = invoke(rt, 100.0, NO_RETRY, random.Random(0))
        assert (res.kind, res.end, res.retries) == ("ok", 110.0, 0)

    def test_recovering_callee_signals_retry_later_with_estimate(self):
        rt = runtime_with_windows([(0.0, 1000.0, "microreboot")])
        res = invoke(rt, 500.0, NO_RETRY, random.Random(0))
        assert res.kind == "retry-later"
        assert res.signal.t == 500.0

    def test_retry_masks_recovery_with_bounded_stall(self):
        rt = runtime_with_windows([(0.0, 300.0, "microreboot")])
        res = invoke(rt, 0.0, RetryPolicy(True, max_attempts=3, pause_factor=1.0), random.Random(0))
        assert res.kind == "ok"
        assert res.retries >= 1
        assert res.end >= 300.0  # latency grew by at least the remaining recovery

    def test_short_pauses_reestimate_and_exhaust_attempts(self):
        # each pause covers only half the re-estimated remainder, so a
        # bounded attempt budget can never reach the recovery end
        rt = runtime_with_windows([(0.0, 300.0, "microreboot")])
        res = invoke(rt, 0.0, RetryPolicy(True, max_attempts=8, pause_factor=0.5), random.Random(0))
        assert res.kind == "hard-fail"
        assert res.retries == 8
        assert res.end < 300.0

    def test_single_attempt_cannot_cover_two_pauses(self):
        rt = runtime_with_windows([(0.0, 300.0, "microreboot")])
        res = invoke(rt, 0.0, RetryPolicy(True, max_attempts=1, pause_factor=0.5), random.Random(0))
        assert res.kind == "hard-fail"
        assert res.end == 150.0
        assert res.retries == 1

    def test_full_pause_lands_exactly_at_recovery_end(self):
        rt = runtime_with_windows([(0.0, 300.0, "microreboot")])
        res = invoke(rt, 40.0, RetryPolicy(True, max_attempts=1, pause_factor=1.0), random.Random(0))
        assert res.kind == "ok"
        assert res.end == 310.0  # stall to 300, then 10ms service

    def test_undeployed_callee_fails_hard(self):
        rt = runtime_with_windows([])
        rt.undeployed_from = 0.0
        res = invoke(rt, 5.0, RetryPolicy(True, 5, 1.0), random.Random(0))
        assert res.kind == "hard-fail"

    def test_mid_service_kill_without_retry_fails_at_kill_instant(self):
        rt = runtime_with_windows([(105.0, 1105.0, "microreboot")])
        res = invoke(rt, 100.0, NO_RETRY, random.Random(0))
        assert (res.kind, res.end) == ("hard-fail", 105.0)

    def test_mid_service_kill_with_retry_resumes_after_window(self):
        rt = runtime_with_windows([(105.0, 1105.0, "microreboot")])
        res = invoke(rt, 100.0, RetryPolicy(True, 3, 1.0), random.Random(0))
        assert res.kind == "ok"
        assert res.end == 1115.0  # killed at 105, stall to 1105, redo 10ms call

    def test_restart_kill_drops_connection(self):
        rt = runtime_with_windows([(105.0, 2105.0, "app_restart")])
        res = invoke(rt, 100.0, RetryPolicy(True, 3, 1.0), random.Random(0))
        assert (res.kind, res.end) == ("dropped", 105.0)

    def test_stall_interrupted_by_restart_drop(self):
        rt = runtime_with_windows([(0.0, 1000.0, "microreboot")])
        res = invoke(
            rt, 100.0, RetryPolicy(True, 3, 1.0), random.Random(0), drop_instants=[400.0]
        )
        assert (res.kind, res.end) == ("dropped", 400.0)

    def test_fault_fails_hard_without_retry_later(self):
        rt = runtime_with_windows([])
        rt.faults.append((0.0, float("inf"), "fail-stop", 1.0))
        res = invoke(rt, 50.0, RetryPolicy(True, 5, 1.0), random.Random(0))
        assert (res.kind, res.end, res.signal) == ("hard-fail", 50.0, None)


def run_mini(
    model=None,
    workload=None,
    clients=5,
    duration_ms=30000.0,
    seed=11,
    **kwargs,
):
    sim = Simulation(
        model or mini_model(),
        workload or mini_workload(),
        clients=clients,
        duration_ms=duration_ms,
        seed=seed,
        **kwargs,
    )
    return sim.run()


class TestSimulation:
    def test_failure_free_latency_is_sum_of_hop_times(self):
        records = run_mini()
        assert records, "no requests issued"
        expected = {"Home": 5.0, "UseCart": 15.0, "BrowseMisc": 15.0, "Checkout": 25.0}
        for r in records:
            assert r.outcome == OK
            assert r.end - r.start == pytest.approx(expected[r.operation])

    def test_conservation_single_terminal_outcome(self):
        records = run_mini(
            actions=[RecoveryAction("app_restart", 10000.0)],
            faults=[],
        )
        assert [r.request_id for r in records] == list(range(len(records)))
        assert all(r.outcome in TERMINAL_OUTCOMES for r in records)
        assert all(r.end >= r.start for r in records)

    def test_hit_recovering_component_without_retry_fails(self):
        records = run_mini(actions=[RecoveryAction(ACTION_MICROREBOOT, 10000.0, ("CartBean",))])
        window = [r for r in records if 10000.0 <= r.start < 10500.0 and r.operation in ("UseCart", "Checkout")]
        assert window and all(r.outcome == FAILED for r in window)

    def test_retry_masks_single_component_microreboot(self):
        records = run_mini(
            actions=[RecoveryAction(ACTION_MICROREBOOT, 10000.0, ("CartBean",))],
            retry=RetryPolicy(True, max_attempts=3, pause_factor=1.0),
        )
        assert failed_count(records) == 0
        stalled = [r for r in records if r.retries > 0]
        assert stalled
        assert all(r.end >= 10500.0 for r in stalled)
        assert any(r.outcome == OK_AFTER_RETRY for r in stalled)

    def test_app_restart_zeroes_goodput_for_window(self):
        dur = 5000.0
        model = mini_model(app_restart_ms=dur)
        records = run_mini(model=model, actions=[RecoveryAction("app_restart", 10007.0)])
        in_window = [r for r in records if 10007.0 <= r.start < 10007.0 + dur]
        assert in_window
        assert all(r.outcome not in SUCCESS_OUTCOMES for r in in_window)
        dropped = [r for r in records if r.outcome == DROPPED]
        assert dropped and all(r.end == 10007.0 for r in dropped)

    def test_server_restart_refuses_new_requests_instantly(self):
        model = mini_model(app_restart_ms=4000.0, server_restart_ms=5000.0)
        records = run_mini(model=model, actions=[RecoveryAction("server_restart", 10000.0)])
        in_window = [r for r in records if 10000.0 < r.start < 15000.0]
        assert in_window
        assert all(r.outcome == REFUSED for r in in_window)
        assert all(r.end == r.start for r in in_window)

    def test_server_fails_at_least_as_many_as_app_at_longer_window(self):
        model = mini_model(app_restart_ms=9400.0, server_restart_ms=10800.0)
        app = run_mini(model=model, duration_ms=40000.0,
                       actions=[RecoveryAction("app_restart", 10000.0)])
        srv = run_mini(model=model, duration_ms=40000.0,
                       actions=[RecoveryAction("server_restart", 10000.0)])
        assert failed_count(srv) >= failed_count(app)

    def test_zero_length_restart_only_drops_inflight(self):
        model = mini_model(app_restart_ms=0.0, server_restart_ms=0.0)
        records = run_mini(model=model, actions=[RecoveryAction("server_restart", 10007.0)])
        non_ok = [r for r in records if r.outcome != OK]
        assert all(r.outcome == DROPPED and r.end == 10007.0 for r in non_ok)
        after = [r for r in records if r.start > 10007.0]
        assert after and all(r.outcome == OK for r in after)

    def test_restart_while_idle_drops_nothing(self):
        # long think time parks the clients before the restart fires
        w = build_workload(
            [("Home", "BrowseMisc", 1.0), ("BrowseMisc", "Home", 1.0), ("End", "Home", 1.0)],
            think_time_ms=20000.0,
            homepage="Home",
        )
        records = run_mini(
            workload=w,
            model=mini_model(app_restart_ms=3000.0),
            duration_ms=50000.0,
            actions=[RecoveryAction("app_restart", 10000.0)],
        )
        assert all(r.outcome != DROPPED for r in records)

    def test_microreboot_retry_later_arithmetic(self):
        # a request reaching the bean mid-window observes the remaining time
        records = run_mini(
            actions=[RecoveryAction(ACTION_MICROREBOOT, 10000.0, ("CartBean",))],
            retry=RetryPolicy(True, max_attempts=3, pause_factor=1.0),
        )
        hit = [
            r for r in records
            if r.operation in ("UseCart", "Checkout") and 10000.0 <= r.start < 10495.0 and r.retries
        ]
        assert hit
        for r in hit:
            # stall releases exactly at the window end, then remaining hops run
            assert r.end >= 10500.0
            assert r.end - r.start >= 10500.0 - r.start

    def test_abandonment_reclassifies_and_caps_slow_requests(self):
        model = mini_model(app_restart_ms=12000.0)
        records = run_mini(
            model=model,
            duration_ms=40000.0,
            actions=[RecoveryAction("app_restart", 10000.0)],
            retry=RetryPolicy(True, max_attempts=5, pause_factor=1.0),
            abandonment_ms=8000.0,
        )
        slow = [r for r in records if r.end - r.start >= 7999.9]
        assert slow
        assert all(r.outcome == FAILED and r.end - r.start == pytest.approx(8000.0) for r in slow)
        assert all(r.end - r.start <= 8000.0 + 1e-9 for r in records)

    def test_goodput_settles_back_after_recovery(self):
        records = run_mini(
            duration_ms=60000.0,
            clients=10,
            actions=[RecoveryAction(ACTION_MICROREBOOT, 20000.0, ("CartBean", "MiscBean"))],
        )
        from rebootsim.metrics import bucket_series

        good, _ = bucket_series(records, 1000.0, 60000.0)
        pre = sum(good[2:19]) / 17
        post = sum(good[25:58]) / 33
        assert post >= 0.9 * pre

    def test_trace_is_deterministic_per_seed(self):
        a = run_mini(seed=5, actions=[RecoveryAction(ACTION_MICROREBOOT, 9000.0, ("CartBean",))])
        b = run_mini(seed=5, actions=[RecoveryAction(ACTION_MICROREBOOT, 9000.0, ("CartBean",))])
        c = run_mini(seed=6, actions=[RecoveryAction(ACTION_MICROREBOOT, 9000.0, ("CartBean",))])
        assert a == b
        assert a != c

    def test_error_pacing_bounds_failure_rate(self):
        model = mini_model(app_restart_ms=4000.0, server_restart_ms=5000.0)
        records = run_mini(
            model=model,
            clients=2,
            duration_ms=20000.0,
            actions=[RecoveryAction("server_restart", 5000.0)],
            error_pacing_ms=100.0,
        )
        refused = [r for r in records if r.outcome == REFUSED]
        # 2 clients x 5000ms window / 100ms pacing = at most ~102 attempts
        assert 80 <= len(refused) <= 104

    def test_stabilization_window_inflates_service_times(self):
        records = run_mini(
            actions=[RecoveryAction(ACTION_MICROREBOOT, 10000.0, ("CartBean",))],
            stabilization=[(10500.0, 12500.0, 3.0)],
        )
        inflated = [r for r in records if r.operation == "BrowseMisc" and 10500.0 <= r.start < 12400.0]
        normal = [r for r in records if r.operation == "BrowseMisc" and r.start < 10000.0]
        assert inflated and normal
        assert all(r.end - r.start == pytest.approx(45.0) for r in inflated)  # 3x the 15ms path
        assert all(r.end - r.start == pytest.approx(15.0) for r in normal)

    def test_queue_capacity_refuses_excess_stalls(self):
        records = run_mini(
            clients=8,
            actions=[RecoveryAction(ACTION_MICROREBOOT, 10000.0, ("CartBean",))],
            retry=RetryPolicy(True, max_attempts=3, pause_factor=1.0),
            queue_capacity=2,
        )
        outcomes = Counter(r.outcome for r in records if 10000.0 <= r.start < 10500.0)
        assert outcomes.get(REFUSED, 0) > 0


class TestSessionStatePolicies:
    def test_volatile_state_loss_marks_sessions(self):
        model = mini_model(cart_policy="in-memory-volatile")
        records = run_mini(
            model=model, actions=[RecoveryAction(ACTION_MICROREBOOT, 10000.0, ("CartBean",))]
        )
        by_session = {}
        for r in records:
            by_session.setdefault(r.session_id, []).append(r)
        lost_with_tail = 0
        for sid, reqs in by_session.items():
            bound_before = any(
                r.operation in ("UseCart", "Checkout") and r.outcome == OK and r.end <= 10000.0
                for r in reqs
            )
            if not bound_before:
                continue
            after = [r for r in reqs if r.start >= 10000.0]
            if after:
                lost_with_tail += 1
                assert all(r.outcome == FAILED for r in after), sid
        assert lost_with_tail > 0

    def test_external_store_sessions_survive(self):
        model = mini_model(cart_policy="external-store")
        records = run_mini(
            model=model, actions=[RecoveryAction(ACTION_MICROREBOOT, 10000.0, ("CartBean",))]
        )
        for r in records:
            if r.outcome not in SUCCESS_OUTCOMES:
                # only cart-path requests overlapping the window may fail
                assert r.operation in ("UseCart", "Checkout")
                assert r.end >= 10000.0 and r.start < 10500.0

    def test_next_session_recovers_after_state_loss(self):
        model = mini_model(cart_policy="in-memory-volatile")
        records = run_mini(
            model=model,
            duration_ms=60000.0,
            actions=[RecoveryAction(ACTION_MICROREBOOT, 10000.0, ("CartBean",))],
        )
        by_client = {}
        for r in records:
            by_client.setdefault(r.client_id, []).append(r)
        for reqs in by_client.values():
            tail = [r for r in reqs if r.start >= 11000.0]
            # after re-login (new session) requests succeed again
            assert any(r.outcome == OK for r in tail)
