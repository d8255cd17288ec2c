"""Markov-chain client emulator and response classification.

Clients navigate the site by sampling a state transition table whose states
are the application operations plus two pseudo-states: Back (the browser
back button, which revisits the previous page without a server request by
default) and End (abandon the session and start over at the homepage).
Think time defaults to zero: a client fires its next request the moment the
previous one completes, successfully or not.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path

BACK = "Back"
END = "End"

DEFAULT_ERROR_KEYWORDS = ("error", "failed", "exception")


class WorkloadError(Exception):
    """Malformed workload document or transition table."""


@dataclass(frozen=True)
class WorkloadModel:
    """Transition table over operation states plus Back/End.

    ``rows`` maps each state to parallel (targets, cumulative probability)
    tuples so sampling is a single uniform draw plus a bisect.
    """

    states: tuple[str, ...]
    rows: dict[str, tuple[tuple[str, ...], tuple[float, ...]]]
    think_time_ms: dict[str, float]
    homepage: str | None = None
    back_issues_request: bool = False

    def think_for(self, state: str) -> float:
        return self.think_time_ms.get(state, 0.0)


@dataclass
class ClientState:
    """One emulated user: current page, history stack, session bookkeeping.

    The navigation stack holds previously visited operations only, never
    the Back/End pseudo-states.  Each client owns an independent rng stream
    so per-client behavior is reproducible regardless of interleaving.
    """

    client_id: int
    current: str
    rng: object
    session_seq: int = 0
    stack: list[str] = field(default_factory=list)

    @property
    def session_id(self) -> str:
        return f"{self.client_id}-{self.session_seq}"


def build_workload(
    transitions: list[tuple[str, str, float]],
    think_time_ms: float | dict[str, float] = 0.0,
    homepage: str | None = None,
    back_issues_request: bool = False,
    tol: float = 1e-9,
) -> WorkloadModel:
    """Assemble and validate a transition table from sparse (from, to, p) rows."""
    raw: dict[str, list[tuple[str, float]]] = {}
    states: list[str] = []
    for src, dst, p in transitions:
        if not 0.0 <= p <= 1.0:
            raise WorkloadError(f"transition {src}->{dst}: probability {p} outside [0, 1]")
        raw.setdefault(src, []).append((dst, float(p)))
        for s in (src, dst):
            if s not in (BACK, END) and s not in states:
                states.append(s)

    rows: dict[str, tuple[tuple[str, ...], tuple[float, ...]]] = {}
    for src, pairs in raw.items():
        total = sum(p for _, p in pairs)
        if abs(total - 1.0) > tol:
            raise WorkloadError(f"row {src!r} sums to {total!r}, expected 1.0")
        targets = tuple(dst for dst, _ in pairs)
        cum: list[float] = []
        acc = 0.0
        for _, p in pairs:
            acc += p
            cum.append(acc)
        cum[-1] = 1.0  # close the row against float drift
        rows[src] = (targets, tuple(cum))

    end_row = rows.get(END)
    if end_row is not None:
        targets, _ = end_row
        if len(targets) != 1 or (homepage is not None and targets[0] != homepage):
            raise WorkloadError("End row must transition only to the homepage operation")
        if homepage is None:
            homepage = targets[0]

    think: dict[str, float]
    if isinstance(think_time_ms, dict):
        think = {k: float(v) for k, v in think_time_ms.items()}
    else:
        t = float(think_time_ms)
        think = {s: t for s in states} if t else {}

    return WorkloadModel(
        states=tuple(states),
        rows=rows,
        think_time_ms=think,
        homepage=homepage,
        back_issues_request=back_issues_request,
    )


def workload_from_dict(doc: dict) -> WorkloadModel:
    try:
        transitions = [(str(a), str(b), float(p)) for a, b, p in doc["transitions"]]
        model = build_workload(
            transitions,
            think_time_ms=doc.get("think_time_ms", 0.0),
            homepage=doc.get("homepage"),
            back_issues_request=bool(doc.get("back_issues_request", False)),
        )
    except WorkloadError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise WorkloadError(f"bad workload document: {exc}") from exc
    declared = doc.get("states")
    if declared is not None:
        undeclared = sorted(set(model.states) - set(declared))
        if undeclared:
            raise WorkloadError(f"transitions use undeclared states: {', '.join(undeclared)}")
    return model


def load_workload(path: str | Path) -> WorkloadModel:
    with open(path, "r", encoding="utf-8") as fh:
        return workload_from_dict(json.load(fh))


def next_state(client: ClientState, model: WorkloadModel) -> str:
    """Sample the successor of the client's current state from its rng stream."""
    row = model.rows.get(client.current)
    if row is None:
        raise WorkloadError(f"no transition row for state {client.current!r}")
    targets, cum = row
    u = client.rng.random()
    return targets[bisect_right(cum, u)] if u < cum[-1] else targets[-1]


def step_client(client: ClientState, model: WorkloadModel, homepage: str) -> tuple[str, bool]:
    """Advance a client to its next request; returns (operation, new_session).

    Back pops the stack without a request (unless the replay flag is set);
    an empty stack degrades Back to End.  End abandons the session and
    issues the homepage of a fresh one; any navigation to the homepage
    likewise begins a new session.  Pseudo-states are free, so this loops
    until a request is issued.  Hot path: sampling is inlined.
    """
    rows = model.rows
    rng = client.rng
    stack = client.stack
    current = client.current
    while True:
        targets, cum = rows[current]
        state = targets[bisect_right(cum, rng.random())]
        if state == BACK:
            if stack:
                current = stack.pop()
                if model.back_issues_request:
                    if current == homepage:
                        state = END  # replaying the homepage restarts the session
                    else:
                        client.current = current
                        return current, False
                else:
                    continue
            else:
                state = END
        if state == END or state == homepage:
            client.session_seq += 1
            stack.clear()
            client.current = homepage
            return homepage, True
        stack.append(current)
        client.current = state
        return state, False


def classify_response(
    http_status: int | None = None,
    body: str = "",
    network_error: bool = False,
    keywords: tuple[str, ...] = DEFAULT_ERROR_KEYWORDS,
) -> bool:
    """True iff the response counts as correct.

    Incorrect responses are network-level errors, HTTP 4xx/5xx codes, and
    pages whose body contains any of the configured error keywords
    (case-insensitive).
    """
    if network_error:
        return False
    if http_status is not None and 400 <= int(http_status) <= 599:
        return False
    if body:
        lowered = body.lower()
        for kw in keywords:
            if kw.lower() in lowered:
                return False
    return True
