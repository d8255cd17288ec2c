"""Deterministic discrete-event execution of client requests and reboots.

Recovery actions and fault onsets are declared up front (detection is out
of scope), so every component's availability timeline is known before the
run starts.  The event loop therefore only carries one event per request:
when a client's request completes, the client immediately takes its next
navigation step.  Requests that overlap a recovery window or an active
fault are walked hop by hop against the precomputed timetable; requests
that fit entirely inside a quiet interval complete on the fast path.

Semantics of the three reboot flavours:

* microreboot: the named components go offline together at the trigger;
  redeployment is serialized in sorted id order, so each component comes
  back at the running sum of the per-component reboot durations.  Calls in
  flight on those components fail at the trigger instant; callers that hit
  a recovering component receive the estimated remaining recovery time and,
  when retry is enabled, stall and re-issue the call transparently.
* application restart: every component goes offline for the configured
  app restart duration; in-flight requests lose their connections; new
  requests are accepted but fail on dispatch.
* server restart: as app restart, but nothing is listening, so new
  requests are refused outright for the whole window.
"""

from __future__ import annotations

import random
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from heapq import heappop, heappush
from math import inf
from typing import NamedTuple

from .faults import (
    ACTION_APP_RESTART,
    ACTION_MICROREBOOT,
    ACTION_SERVER_RESTART,
    CLEARED_BY_REBOOT,
    FAIL_STOP,
    FaultSpec,
    RecoveryAction,
)
from .metrics import (
    DROPPED,
    FAILED,
    OK,
    OK_AFTER_RETRY,
    REFUSED,
    RequestRecord,
)
from .model import AppModel, validate_model
from .workload import BACK, END, ClientState, WorkloadModel, step_client

STATUS_ONLINE = "online"
STATUS_RECOVERING = "recovering"
STATUS_UNDEPLOYED = "undeployed"

# precedence when several windows open at the same instant: a dropped
# connection beats a retryable microreboot kill
_KIND_RANK = {ACTION_SERVER_RESTART: 0, ACTION_APP_RESTART: 1, ACTION_MICROREBOOT: 2}


class EngineConfigError(Exception):
    """Scenario pieces that do not fit together (bad refs, bad options)."""


class NotRecoveringError(Exception):
    """Remaining-recovery estimate asked of a component that is online."""


@dataclass(frozen=True)
class RetryPolicy:
    """Transparent call retry performed by the calling container.

    On each attempt the pause is ``pause_factor`` times the callee's
    current remaining-recovery estimate (re-estimated per attempt).  After
    ``max_attempts`` retries the call fails hard.
    """

    enabled: bool = False
    max_attempts: int = 3
    pause_factor: float = 1.0

    def validate(self) -> None:
        if self.max_attempts < 1:
            raise EngineConfigError("retry max_attempts must be >= 1")
        if self.pause_factor <= 0:
            raise EngineConfigError("retry pause_factor must be > 0")


@dataclass(frozen=True)
class RetryLaterSignal:
    """Callee is recovering; t is its estimated remaining recovery time."""

    t: float


class RecoveryWindow(NamedTuple):
    component: str
    start: float
    end: float
    kind: str


class EventQueue:
    """Time-ordered event queue with stable FIFO tie-breaking."""

    def __init__(self):
        self._heap: list = []
        self._seq = 0

    def push(self, time: float, payload) -> None:
        heappush(self._heap, (time, self._seq, payload))
        self._seq += 1

    def pop(self):
        time, _, payload = heappop(self._heap)
        return time, payload

    def __len__(self) -> int:
        return len(self._heap)


def microreboot_schedule(model: AppModel, component_ids, at: float) -> list[RecoveryWindow]:
    """Windows for a (multi-)component microreboot triggered at ``at``.

    All components are undeployed at the trigger; redeployment runs one
    component at a time in sorted id order, so the k-th component is back
    after the cumulative reboot time of the first k.
    """
    ids = sorted(component_ids)
    if not ids:
        raise EngineConfigError("microreboot of an empty component set")
    out = []
    acc = at
    for cid in ids:
        acc += model.component(cid).microreboot_duration
        out.append(RecoveryWindow(cid, at, acc, ACTION_MICROREBOOT))
    return out


def app_restart_schedule(model: AppModel, at: float) -> list[RecoveryWindow]:
    end = at + model.app_restart_ms
    return [RecoveryWindow(cid, at, end, ACTION_APP_RESTART) for cid in model.components]


def server_restart_schedule(model: AppModel, at: float) -> list[RecoveryWindow]:
    end = at + model.server_restart_ms
    return [RecoveryWindow(cid, at, end, ACTION_SERVER_RESTART) for cid in model.components]


def action_schedule(model: AppModel, action: RecoveryAction) -> list[RecoveryWindow]:
    if action.kind == ACTION_MICROREBOOT:
        return microreboot_schedule(model, action.components, action.trigger_ms)
    if action.kind == ACTION_APP_RESTART:
        return app_restart_schedule(model, action.trigger_ms)
    if action.kind == ACTION_SERVER_RESTART:
        return server_restart_schedule(model, action.trigger_ms)
    raise EngineConfigError(f"unknown recovery action kind {action.kind!r}")


def action_completion(model: AppModel, action: RecoveryAction) -> float:
    windows = action_schedule(model, action)
    return max(w.end for w in windows)


class ComponentRuntime:
    """A component's availability timeline plus point-in-time queries."""

    __slots__ = (
        "spec", "win_starts", "win_ends", "win_kinds",
        "faults", "undeployed_from",
    )

    def __init__(self, spec):
        self.spec = spec
        self.win_starts: list[float] = []
        self.win_ends: list[float] = []
        self.win_kinds: list[str] = []
        # (onset, clear, kind, p) tuples, few per run
        self.faults: list[tuple[float, float, str, float]] = []
        self.undeployed_from: float | None = None

    def add_windows(self, windows: list[tuple[float, float, str]]) -> None:
        """Merge raw (start, end, kind) windows into the sorted timeline."""
        merged: list[list] = []
        for start, end, kind in sorted(
            windows, key=lambda w: (w[0], _KIND_RANK[w[2]])
        ):
            if end <= start:
                continue
            if merged and start <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], end)
            else:
                merged.append([start, end, kind])
        self.win_starts = [m[0] for m in merged]
        self.win_ends = [m[1] for m in merged]
        self.win_kinds = [m[2] for m in merged]

    def window_at(self, now: float) -> int:
        """Index of the recovery window covering ``now``, or -1."""
        i = bisect_right(self.win_starts, now) - 1
        if i >= 0 and now < self.win_ends[i]:
            return i
        return -1

    def next_window_start(self, after: float, inclusive: bool = False) -> float:
        i = bisect_left(self.win_starts, after) if inclusive else bisect_right(self.win_starts, after)
        return self.win_starts[i] if i < len(self.win_starts) else inf

    def status_at(self, now: float) -> tuple[str, float | None]:
        if self.undeployed_from is not None and now >= self.undeployed_from:
            return STATUS_UNDEPLOYED, None
        i = self.window_at(now)
        if i >= 0:
            return STATUS_RECOVERING, self.win_ends[i]
        return STATUS_ONLINE, None

    def fault_at(self, now: float) -> tuple[str, float] | None:
        for onset, clear, kind, p in self.faults:
            if onset <= now < clear:
                return kind, p
        return None


def estimate_remaining_recovery(runtime: ComponentRuntime, now: float) -> float:
    """Milliseconds until the component is back, floored at zero.

    The completion instant itself answers 0 rather than raising: callers
    polling a recovering component see a sequence that ends at zero.
    """
    i = bisect_right(runtime.win_starts, now) - 1
    if i >= 0 and now <= runtime.win_ends[i]:
        return max(0.0, runtime.win_ends[i] - now)
    status, _ = runtime.status_at(now)
    raise NotRecoveringError(f"component {runtime.spec.id!r} is {status} at t={now}")


class HopResult(NamedTuple):
    """Terminal result of one inter-component call, retries included."""

    kind: str  # "ok" | "retry-later" | "hard-fail" | "dropped"
    end: float
    retries: int
    signal: RetryLaterSignal | None = None


def invoke(
    runtime: ComponentRuntime,
    now: float,
    retry: RetryPolicy,
    rng: random.Random,
    drop_instants: list[float] = (),
    stab=None,
    session_lost_sink: list | None = None,
) -> HopResult:
    """Deliver one call to a component, stalling and retrying as configured.

    An invocation is atomic: either the callee processes it to completion,
    or it was never delivered (recovering callee, signalled as retry-later)
    or it dies with the callee (kill mid-service).  Fault-induced errors
    fail hard without a retry-later signal: only recovery windows carry a
    remaining-time estimate.

    ``session_lost_sink``, when given, receives the kill instant if this
    call died on a component holding volatile session state.
    """
    retries = 0
    attempts_left = retry.max_attempts if retry.enabled else 0
    volatile = runtime.spec.session_state_policy == "in-memory-volatile"

    while True:
        status, until = runtime.status_at(now)
        if status == STATUS_UNDEPLOYED:
            return HopResult("hard-fail", now, retries)
        if status == STATUS_RECOVERING:
            signal = RetryLaterSignal(max(0.0, until - now))
            if attempts_left <= 0:
                kind = "retry-later" if not retry.enabled else "hard-fail"
                return HopResult(kind, now, retries, signal)
            # stall: pause proportionally to the current estimate, re-check
            while attempts_left > 0:
                est = max(0.0, until - now)
                pause_end = now + retry.pause_factor * est
                d = _first_in(drop_instants, now, pause_end)
                if d is not None:
                    return HopResult("dropped", d, retries)
                now = pause_end
                retries += 1
                attempts_left -= 1
                status, until = runtime.status_at(now)
                if status != STATUS_RECOVERING:
                    break
            if status == STATUS_RECOVERING:
                return HopResult("hard-fail", now, retries, RetryLaterSignal(max(0.0, until - now)))
            continue

        fault = runtime.fault_at(now)
        if fault is not None:
            kind, p = fault
            if kind == FAIL_STOP or rng.random() < p:
                return HopResult("hard-fail", now, retries)

        dur = runtime.spec.service_time.sample(rng)
        if stab is not None:
            dur *= stab.factor_at(now)
        hop_end = now + dur
        kill = runtime.next_window_start(now)
        drop = _first_in(drop_instants, now, hop_end)
        if drop is not None and drop < hop_end and drop < kill:
            # instantaneous restart: the connection dies with no window to see
            if volatile and session_lost_sink is not None:
                session_lost_sink.append(drop)
            return HopResult("dropped", drop, retries)
        if kill >= hop_end:
            return HopResult("ok", hop_end, retries)

        # the component went down mid-service and took the call with it
        if volatile and session_lost_sink is not None:
            session_lost_sink.append(kill)
        killer = runtime.win_kinds[runtime.window_at(kill)]
        if killer != ACTION_MICROREBOOT:
            return HopResult("dropped", kill, retries)
        if volatile:
            return HopResult("hard-fail", kill, retries)
        if attempts_left <= 0:
            return HopResult("hard-fail", kill, retries)
        now = kill  # container re-issues the call against the recovering callee


def _first_in(sorted_values, lo: float, hi: float) -> float | None:
    """First value v with lo < v <= hi, else None."""
    i = bisect_right(sorted_values, lo)
    if i < len(sorted_values) and sorted_values[i] <= hi:
        return sorted_values[i]
    return None


class _StabWindows:
    """Post-recovery service-time inflation windows (off by default)."""

    __slots__ = ("bounds",)

    def __init__(self, windows: list[tuple[float, float, float]]):
        self.bounds = sorted(windows)

    def factor_at(self, now: float) -> float:
        for start, end, factor in self.bounds:
            if start <= now < end:
                return factor
        return 1.0


class _EngineClient:
    __slots__ = ("cs", "lost_at", "sid")

    def __init__(self, cs: ClientState):
        self.cs = cs
        self.lost_at: float | None = None
        self.sid = ""


class Simulation:
    """A single seeded run of a scenario against a validated model.

    Whole runs are pure functions of (model, workload, options, seed): the
    same inputs produce byte-identical traces.  Instances are single-use
    and not shareable mid-run; run several instances in parallel for
    replicates.
    """

    def __init__(
        self,
        model: AppModel,
        workload: WorkloadModel,
        clients: int = 20,
        duration_ms: float = 60000.0,
        seed: int = 0,
        retry: RetryPolicy = RetryPolicy(),
        faults: list[FaultSpec] = (),
        actions: list[RecoveryAction] = (),
        abandonment_ms: float = 8000.0,
        error_pacing_ms: float = 50.0,
        queue_capacity: int | None = None,
        stabilization: list[tuple[float, float, float]] = (),
    ):
        problems = validate_model(model)
        if problems:
            raise EngineConfigError("invalid model: " + "; ".join(problems))
        if clients < 1:
            raise EngineConfigError("clients must be >= 1")
        if duration_ms <= 0:
            raise EngineConfigError("duration_ms must be > 0")
        if error_pacing_ms <= 0:
            raise EngineConfigError("error_pacing_ms must be > 0")
        retry.validate()
        self._check_workload(model, workload)

        self.model = model
        self.workload = workload
        self.clients = clients
        self.duration_ms = float(duration_ms)
        self.seed = seed
        self.retry = retry
        self.abandonment_ms = float(abandonment_ms)
        self.error_pacing_ms = float(error_pacing_ms)
        self.queue_capacity = queue_capacity
        self.now = 0.0

        self._faults: list[FaultSpec] = []
        self._actions: list[RecoveryAction] = []
        self._stab_config = list(stabilization)
        for f in faults:
            self.add_fault(f)
        for a in actions:
            self.add_action(a)

    def _check_workload(self, model: AppModel, workload: WorkloadModel) -> None:
        states = set(workload.rows)
        for targets, _ in workload.rows.values():
            states.update(targets)
        states -= {BACK, END}
        unknown = sorted(s for s in states if s not in model.operations)
        if unknown:
            raise EngineConfigError(f"workload states not in model: {', '.join(unknown)}")
        if workload.homepage is not None and workload.homepage != model.homepage:
            raise EngineConfigError(
                f"workload homepage {workload.homepage!r} != model homepage {model.homepage!r}"
            )

    def add_fault(self, spec: FaultSpec) -> None:
        spec.validate(self.model)
        self._faults.append(spec)

    def add_action(self, action: RecoveryAction) -> None:
        for cid in action.components:
            self.model.component(cid)
        if action.trigger_ms < 0:
            raise EngineConfigError("recovery trigger_ms must be >= 0")
        self._actions.append(action)

    # -- timetable -----------------------------------------------------

    def _build(self):
        model = self.model
        self.runtimes: dict[str, ComponentRuntime] = {
            cid: ComponentRuntime(spec) for cid, spec in model.components.items()
        }

        raw: dict[str, list[tuple[float, float, str]]] = {cid: [] for cid in model.components}
        refuse: list[tuple[float, float]] = []
        drops: list[float] = []
        stab: list[tuple[float, float, float]] = list(self._stab_config)
        for action in self._actions:
            for w in action_schedule(model, action):
                raw[w.component].append((w.start, w.end, w.kind))
            if action.kind == ACTION_SERVER_RESTART:
                if model.server_restart_ms > 0:
                    refuse.append((action.trigger_ms, action.trigger_ms + model.server_restart_ms))
            if action.kind in (ACTION_APP_RESTART, ACTION_SERVER_RESTART):
                drops.append(action.trigger_ms)
        for cid, windows in raw.items():
            if windows:
                self.runtimes[cid].add_windows(windows)

        for spec in self._faults:
            clear = inf
            if spec.cleared_by == CLEARED_BY_REBOOT:
                completions = []
                for action in self._actions:
                    if not action.covers(spec.target):
                        continue
                    if action.kind == ACTION_MICROREBOOT:
                        done = next(
                            w.end
                            for w in microreboot_schedule(self.model, action.components, action.trigger_ms)
                            if w.component == spec.target
                        )
                    else:
                        done = action_completion(self.model, action)
                    if done > spec.onset_ms:
                        completions.append(done)
                if completions:
                    clear = min(completions)
            self.runtimes[spec.target].faults.append(
                (spec.onset_ms, clear, spec.kind, spec.p)
            )

        refuse.sort()
        self._refuse_starts = [r[0] for r in refuse]
        self._refuse_ends = [r[1] for r in refuse]
        self._drops = sorted(drops)
        self._stab = _StabWindows(stab) if stab else None

        # per-operation hot-path tables
        self._op_index: dict[str, int] = {}
        self._op_runtimes: list[tuple[ComponentRuntime, ...]] = []
        self._op_const_total: list[float | None] = []
        self._op_volatile: list[bool] = []
        self._op_is_write: list[bool] = []
        self._op_ids: list[str] = []
        for oid, op in model.operations.items():
            self._op_index[oid] = len(self._op_ids)
            self._op_ids.append(oid)
            rts = tuple(self.runtimes[cid] for cid in op.path)
            self._op_runtimes.append(rts)
            if all(rt.spec.service_time.is_constant for rt in rts):
                self._op_const_total.append(sum(rt.spec.service_time.value_ms for rt in rts))
            else:
                self._op_const_total.append(None)
            self._op_volatile.append(
                any(rt.spec.session_state_policy == "in-memory-volatile" for rt in rts)
            )
            self._op_is_write.append(op.is_db_write)

        # quiet spans: intervals where nothing is recovering, refused,
        # faulted or stabilizing, so requests complete undisturbed
        busy: list[tuple[float, float]] = []
        for rt in self.runtimes.values():
            busy.extend(zip(rt.win_starts, rt.win_ends))
            for onset, clear, _, _ in rt.faults:
                busy.extend([(onset, clear)])
        busy.extend(zip(self._refuse_starts, self._refuse_ends))
        busy.extend((s, e) for s, e, _ in (self._stab.bounds if self._stab else []))
        busy = [b for b in sorted(busy) if b[1] > b[0]]
        merged: list[list[float]] = []
        for s, e in busy:
            if merged and s <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], e)
            else:
                merged.append([s, e])
        # connection-drop instants must break quiet spans even when the
        # restart window itself has zero width
        cuts = sorted(set(self._drops))
        span_ends: list[float] = []
        span_clean: list[bool] = []

        def emit_clean(lo: float, hi: float) -> None:
            for c in cuts:
                if lo < c < hi:
                    span_ends.append(c)
                    span_clean.append(True)
                    lo = c
            span_ends.append(hi)
            span_clean.append(True)

        cursor = 0.0
        for s, e in merged:
            if s > cursor:
                emit_clean(cursor, s)
            span_ends.append(e)
            span_clean.append(False)
            cursor = e
        emit_clean(cursor, inf)
        self._span_ends = span_ends
        self._span_clean = span_clean

    # -- execution -----------------------------------------------------

    def run(self) -> list[RequestRecord]:
        self._build()
        model = self.model
        workload = self.workload
        homepage = model.homepage
        records: list[RequestRecord] = []
        duration = self.duration_ms
        pacing = self.error_pacing_ms
        think = workload.think_time_ms

        clients = []
        for i in range(self.clients):
            rng = random.Random(f"{self.seed}|client|{i}")
            cs = ClientState(client_id=i, current=homepage, rng=rng, session_seq=1)
            ec = _EngineClient(cs)
            ec.sid = f"{i}-1"
            clients.append(ec)
        self._stall_heap: list[float] = []

        span_ends = self._span_ends
        span_clean = self._span_clean
        span_idx = 0
        op_index = self._op_index
        const_total = self._op_const_total
        volatile = self._op_volatile
        is_write = self._op_is_write
        abandonment = self.abandonment_ms
        walk = self._walk
        append = records.append
        record = RequestRecord

        # raw heap of (time, seq, client) tuples: same ordering contract as
        # EventQueue, inlined for the per-request hot path
        heap: list[tuple[float, int, int]] = [(0.0, i, i) for i in range(self.clients)]
        seq = self.clients
        pending_first = [True] * self.clients

        while heap:
            now, _, ci = heappop(heap)
            if now >= duration:
                continue
            self.now = now
            ec = clients[ci]
            if pending_first[ci]:
                pending_first[ci] = False
                op, new_session = homepage, False  # session 1 opened at construction
            else:
                op, new_session = step_client(ec.cs, workload, homepage)
                if new_session:
                    ec.lost_at = None
                    ec.sid = f"{ci}-{ec.cs.session_seq}"
            oi = op_index[op]

            while now >= span_ends[span_idx]:
                span_idx += 1

            retries = 0
            if (
                span_clean[span_idx]
                and ec.lost_at is None
                and const_total[oi] is not None
                and not volatile[oi]
            ):
                end = now + const_total[oi]
                if end <= span_ends[span_idx]:
                    outcome = OK
                else:
                    end, outcome, retries = walk(ec, oi, now)
            else:
                end, outcome, retries = walk(ec, oi, now)

            # user patience bound: past it the user gives up and counts the
            # request as failed no matter how it would have ended
            if end - now > abandonment:
                end = now + abandonment
                outcome = FAILED

            append(record(len(records), ci, ec.sid, op, now, end, outcome, retries, is_write[oi]))
            next_at = end + think.get(op, 0.0) if think else end
            if outcome is not OK and outcome not in (OK, OK_AFTER_RETRY):
                next_at = max(next_at, now + pacing)
            heappush(heap, (next_at, seq, ci))
            seq += 1
        return records

    def _refusing_at(self, now: float) -> bool:
        i = bisect_right(self._refuse_starts, now) - 1
        return i >= 0 and now < self._refuse_ends[i]

    def _walk(self, ec: _EngineClient, oi: int, t0: float) -> tuple[float, str, int]:
        """Hop-by-hop execution of one request against the timetable."""
        if self._refuse_starts and self._refusing_at(t0):
            return t0, REFUSED, 0
        if ec.lost_at is not None and ec.lost_at <= t0:
            return t0, FAILED, 0

        retry = self.retry
        rng = ec.cs.rng
        drops = self._drops
        stab = self._stab
        now = t0
        retries = 0
        lost_sink: list = []

        if self.queue_capacity is not None and self._would_stall(oi, now):
            heap = self._stall_heap
            while heap and heap[0] <= now:
                heappop(heap)
            if len(heap) >= self.queue_capacity:
                return now, REFUSED, 0

        for rt in self._op_runtimes[oi]:
            res = invoke(
                rt, now, retry, rng,
                drop_instants=drops, stab=stab, session_lost_sink=lost_sink,
            )
            retries += res.retries
            if res.retries and self.queue_capacity is not None:
                heappush(self._stall_heap, res.end)
            if lost_sink:
                ec.lost_at = min(ec.lost_at, lost_sink[0]) if ec.lost_at is not None else lost_sink[0]
            if res.kind != "ok":
                outcome = DROPPED if res.kind == "dropped" else FAILED
                return res.end, outcome, retries
            now = res.end
            if rt.spec.session_state_policy == "in-memory-volatile":
                nxt = rt.next_window_start(now, inclusive=True)
                if nxt is not inf and (ec.lost_at is None or nxt < ec.lost_at):
                    ec.lost_at = nxt
        return now, OK_AFTER_RETRY if retries else OK, retries

    def _would_stall(self, oi: int, now: float) -> bool:
        return any(rt.window_at(now) >= 0 for rt in self._op_runtimes[oi])
