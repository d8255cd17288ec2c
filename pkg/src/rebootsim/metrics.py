"""Session-aware availability metrics over request traces.

Raw goodput counts correct responses per time bucket.  Session-weighted
goodput re-labels every request of a failed session as failed, in the
bucket where the request actually completed, so damage shows up even
before the failure instant.  A session is the per-client request sequence
bracketed by homepage accesses; it only counts as successful if every
request in it succeeded.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

OK = "ok"
OK_AFTER_RETRY = "ok-after-retry"
FAILED = "failed"
REFUSED = "connection-refused"
DROPPED = "connection-dropped"

TERMINAL_OUTCOMES = (OK, OK_AFTER_RETRY, FAILED, REFUSED, DROPPED)
SUCCESS_OUTCOMES = frozenset((OK, OK_AFTER_RETRY))

TRACE_COLUMNS = (
    "request_id",
    "client_id",
    "session_id",
    "operation",
    "start_ms",
    "end_ms",
    "outcome",
    "retries",
)


class SchemaMismatchError(Exception):
    """Reports being compared disagree on shape (e.g. bucket size)."""


class RequestRecord(NamedTuple):
    request_id: int
    client_id: int
    session_id: str
    operation: str
    start: float
    end: float
    outcome: str
    retries: int
    is_db_write: bool = False


@dataclass
class SessionRecord:
    """One homepage-bracketed request sequence for a single client.

    ``censored`` marks the trailing session of each client: the run ended
    before the session was closed by a homepage return, so it is excluded
    from session counts by default.  ``aborted`` marks closed sessions that
    contained a failure (the client's next action was a new session).
    """

    session_id: str
    client_id: int
    requests: list[RequestRecord] = field(default_factory=list)
    successful: bool = True
    aborted: bool = False
    censored: bool = False

    @property
    def first_failure_end(self) -> float | None:
        for r in self.requests:
            if r.outcome not in SUCCESS_OUTCOMES:
                return r.end
        return None


def write_trace_csv(records: list[RequestRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for r in records:
            fh.write(
                f"{r.request_id},{r.client_id},{r.session_id},{r.operation},"
                f"{r.start:.3f},{r.end:.3f},{r.outcome},{r.retries}\n"
            )


def read_trace_csv(path: str | Path, model=None) -> tuple[list[RequestRecord], int]:
    """Load a canonical trace; malformed rows are skipped and counted.

    When a model is given, per-request is_db_write flags are rejoined from
    its operation table.
    """
    records: list[RequestRecord] = []
    skipped = 0
    writes = (
        {oid: op.is_db_write for oid, op in model.operations.items()} if model is not None else {}
    )
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is not None and tuple(header) != TRACE_COLUMNS:
            raise SchemaMismatchError(f"unexpected trace header: {header}")
        for row in reader:
            try:
                rid, cid, sid, op, start, end, outcome, retries = row
                if outcome not in TERMINAL_OUTCOMES:
                    raise ValueError(outcome)
                records.append(
                    RequestRecord(
                        int(rid), int(cid), sid, op, float(start), float(end),
                        outcome, int(retries), writes.get(op, False),
                    )
                )
            except (ValueError, TypeError):
                skipped += 1
    return records, skipped


def sessionize(records: list[RequestRecord], homepage: str) -> list[SessionRecord]:
    """Split a per-client, time-ordered trace into homepage-bracketed sessions.

    A new session begins at each homepage request (and at the start of each
    client's trace).  The final session of every client is censored: the
    run ended before it was closed by a homepage return.
    """
    by_client: dict[int, list[RequestRecord]] = {}
    for r in records:
        by_client.setdefault(r.client_id, []).append(r)

    sessions: list[SessionRecord] = []
    for cid in sorted(by_client):
        chunks: list[list[RequestRecord]] = []
        for r in by_client[cid]:
            if r.operation == homepage or not chunks:
                chunks.append([])
            chunks[-1].append(r)
        for i, chunk in enumerate(chunks):
            ok = all(r.outcome in SUCCESS_OUTCOMES for r in chunk)
            censored = i == len(chunks) - 1
            sessions.append(
                SessionRecord(
                    session_id=chunk[0].session_id,
                    client_id=cid,
                    requests=chunk,
                    successful=ok,
                    aborted=(not ok) and (not censored),
                    censored=censored,
                )
            )
    return sessions


def g_ses(sessions: list[SessionRecord], include_censored: bool = False) -> int:
    """Number of sessions in which every request succeeded."""
    return sum(
        1 for s in sessions if s.successful and (include_censored or not s.censored)
    )


def _n_buckets(records, bucket_ms: float, duration_ms: float | None) -> int:
    n = int(math.ceil(duration_ms / bucket_ms)) if duration_ms else 0
    for r in records:
        n = max(n, int(r.end // bucket_ms) + 1)
    return max(n, 1)


def bucket_series(
    records: list[RequestRecord], bucket_ms: float, duration_ms: float | None = None
) -> tuple[list[int], list[int]]:
    """Raw per-bucket goodput: (good, failed) counts keyed by completion time."""
    n = _n_buckets(records, bucket_ms, duration_ms)
    good = [0] * n
    failed = [0] * n
    for r in records:
        b = int(r.end // bucket_ms)
        if r.outcome in SUCCESS_OUTCOMES:
            good[b] += 1
        else:
            failed[b] += 1
    return good, failed


def g_wop(
    records: list[RequestRecord],
    sessions: list[SessionRecord],
    bucket_ms: float,
    duration_ms: float | None = None,
) -> tuple[list[int], list[int]]:
    """Session-weighted per-bucket goodput.

    Every request belonging to a failed session counts as failed in the
    bucket of its own completion time, which retroactively marks pre-onset
    work once a session fails later on.
    """
    if bucket_ms <= 0:
        raise ValueError("bucket_ms must be > 0")
    n = _n_buckets(records, bucket_ms, duration_ms)
    good = [0] * n
    failed = [0] * n
    for s in sessions:
        target = good if s.successful else failed
        for r in s.requests:
            target[int(r.end // bucket_ms)] += 1
    return good, failed


def aborted_session_series(
    sessions: list[SessionRecord], bucket_ms: float, n_buckets: int
) -> list[int]:
    """Aborted sessions per bucket, counted at their first failed request."""
    out = [0] * n_buckets
    for s in sessions:
        if not s.aborted:
            continue
        t = s.first_failure_end
        if t is not None:
            b = int(t // bucket_ms)
            if b < n_buckets:
                out[b] += 1
    return out


def perceived_downtime(
    records: list[RequestRecord], bucket_ms: float = 1000.0
) -> tuple[float, float]:
    """(downtime_s, span_s): how long at least one user saw failures.

    Canonical downtime counts failing buckets, which is robust to isolated
    stragglers; the first-to-last span is also reported since the two
    coincide for contiguous outage windows.
    """
    if bucket_ms <= 0:
        raise ValueError("bucket_ms must be > 0")
    buckets = {
        int(r.end // bucket_ms) for r in records if r.outcome not in SUCCESS_OUTCOMES
    }
    if not buckets:
        return 0.0, 0.0
    scale = bucket_ms / 1000.0
    return len(buckets) * scale, (max(buckets) - min(buckets) + 1) * scale


def availability(mttf_ms: float, mttr_ms: float) -> float:
    return mttf_ms / (mttf_ms + mttr_ms)


@dataclass
class MetricsReport:
    bucket_ms: float
    raw_good: list[int]
    raw_failed: list[int]
    gwop_good: list[int]
    gwop_failed: list[int]
    aborted_sessions: list[int]
    requests_total: int
    failed_requests_total: int
    ok_after_retry_total: int
    g_ses: int
    sessions_total: int
    censored_sessions: int
    aborted_sessions_total: int
    perceived_downtime_s: float
    downtime_span_s: float
    availability: float | None = None
    label: str | None = None
    seed: int | None = None

    SCALARS = (
        "requests_total",
        "failed_requests_total",
        "ok_after_retry_total",
        "g_ses",
        "sessions_total",
        "censored_sessions",
        "aborted_sessions_total",
        "perceived_downtime_s",
        "downtime_span_s",
    )

    def to_dict(self) -> dict:
        per_sec = 1000.0 / self.bucket_ms
        return {
            "label": self.label,
            "seed": self.seed,
            "bucket_ms": self.bucket_ms,
            "requests_total": self.requests_total,
            "failed_requests_total": self.failed_requests_total,
            "ok_after_retry_total": self.ok_after_retry_total,
            "g_ses": self.g_ses,
            "sessions_total": self.sessions_total,
            "censored_sessions": self.censored_sessions,
            "aborted_sessions_total": self.aborted_sessions_total,
            "perceived_downtime_s": self.perceived_downtime_s,
            "downtime_span_s": self.downtime_span_s,
            "availability": self.availability,
            "series": {
                "raw_good": self.raw_good,
                "raw_failed": self.raw_failed,
                "gwop_good": self.gwop_good,
                "gwop_failed": self.gwop_failed,
                "aborted_sessions_per_sec": [round(c * per_sec, 6) for c in self.aborted_sessions],
            },
        }

    @staticmethod
    def from_dict(doc: dict) -> "MetricsReport":
        series = doc["series"]
        bucket_ms = float(doc["bucket_ms"])
        per_sec = 1000.0 / bucket_ms
        return MetricsReport(
            bucket_ms=bucket_ms,
            raw_good=list(series["raw_good"]),
            raw_failed=list(series["raw_failed"]),
            gwop_good=list(series["gwop_good"]),
            gwop_failed=list(series["gwop_failed"]),
            aborted_sessions=[int(round(c / per_sec)) for c in series["aborted_sessions_per_sec"]],
            requests_total=int(doc["requests_total"]),
            failed_requests_total=int(doc["failed_requests_total"]),
            ok_after_retry_total=int(doc["ok_after_retry_total"]),
            g_ses=int(doc["g_ses"]),
            sessions_total=int(doc["sessions_total"]),
            censored_sessions=int(doc["censored_sessions"]),
            aborted_sessions_total=int(doc["aborted_sessions_total"]),
            perceived_downtime_s=float(doc["perceived_downtime_s"]),
            downtime_span_s=float(doc["downtime_span_s"]),
            availability=doc.get("availability"),
            label=doc.get("label"),
            seed=doc.get("seed"),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def load(path: str | Path) -> "MetricsReport":
        with open(path, "r", encoding="utf-8") as fh:
            return MetricsReport.from_dict(json.load(fh))


def build_report(
    records: list[RequestRecord],
    homepage: str,
    bucket_ms: float = 1000.0,
    duration_ms: float | None = None,
    mttf_ms: float | None = None,
    mttr_ms: float | None = None,
    label: str | None = None,
    seed: int | None = None,
) -> MetricsReport:
    sessions = sessionize(records, homepage)
    raw_good, raw_failed = bucket_series(records, bucket_ms, duration_ms)
    gwop_good, gwop_failed = g_wop(records, sessions, bucket_ms, duration_ms)
    aborted = aborted_session_series(sessions, bucket_ms, len(raw_good))
    downtime, span = perceived_downtime(records, bucket_ms=1000.0)
    closed = [s for s in sessions if not s.censored]
    avail = None
    if mttf_ms is not None and mttr_ms is not None:
        avail = availability(mttf_ms, mttr_ms)
    return MetricsReport(
        bucket_ms=bucket_ms,
        raw_good=raw_good,
        raw_failed=raw_failed,
        gwop_good=gwop_good,
        gwop_failed=gwop_failed,
        aborted_sessions=aborted,
        requests_total=len(records),
        failed_requests_total=sum(
            1 for r in records if r.outcome not in SUCCESS_OUTCOMES
        ),
        ok_after_retry_total=sum(1 for r in records if r.outcome == OK_AFTER_RETRY),
        g_ses=g_ses(sessions),
        sessions_total=len(closed),
        censored_sessions=len(sessions) - len(closed),
        aborted_sessions_total=sum(1 for s in sessions if s.aborted),
        perceived_downtime_s=downtime,
        downtime_span_s=span,
        availability=avail,
        label=label,
        seed=seed,
    )


def compare(reference: MetricsReport, candidate: MetricsReport) -> dict:
    """Improvement of candidate over reference, in percent (None if undefined)."""
    if reference.bucket_ms != candidate.bucket_ms:
        raise SchemaMismatchError(
            f"bucket_ms mismatch: {reference.bucket_ms} vs {candidate.bucket_ms}"
        )

    def improvement(ref: float, cand: float) -> float | None:
        if ref == 0:
            return None
        return (ref - cand) / ref * 100.0

    return {
        "requests": improvement(
            reference.failed_requests_total, candidate.failed_requests_total
        ),
        "downtime": improvement(
            reference.perceived_downtime_s, candidate.perceived_downtime_s
        ),
    }


def write_buckets_csv(report: MetricsReport, path: str | Path) -> None:
    """Plot-ready per-bucket series (the plotting interface for figures)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t_ms,raw_good,raw_failed,gwop_good,gwop_failed,aborted_sessions\n")
        for i in range(len(report.raw_good)):
            fh.write(
                f"{i * report.bucket_ms:.0f},{report.raw_good[i]},{report.raw_failed[i]},"
                f"{report.gwop_good[i]},{report.gwop_failed[i]},{report.aborted_sessions[i]}\n"
            )
