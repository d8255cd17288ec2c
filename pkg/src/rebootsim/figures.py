"""Figure rendering for run reports and cross-run comparisons.

Renders the per-bucket series from a metrics report to PNG files next to
the delimited output: a request profile (raw good/failed throughput), a
session-weighted profile (weighted goodput plus aborted sessions), and a
bar comparison across recovery techniques.  buckets.csv stays the stable
plotting interface; these files are the quick-look rendering of it.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import MetricsReport

# pinned so rerunning a scenario yields byte-identical images
_PNG_METADATA = {"Software": "rebootsim"}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=110, metadata=_PNG_METADATA)
    plt.close(fig)
    return path


def render_request_profile(report: MetricsReport, path: str | Path) -> Path:
    """Raw goodput and failure rate per bucket."""
    t = [i * report.bucket_ms / 1000.0 for i in range(len(report.raw_good))]
    scale = 1000.0 / report.bucket_ms
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(t, [v * scale for v in report.raw_good], lw=1.0, color="#2a6f97", label="satisfied")
    ax.plot(t, [v * scale for v in report.raw_failed], lw=1.6, color="#c1121f", label="failed")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("requests / s")
    ax.set_title(report.label or "request profile")
    ax.legend(loc="center right", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, Path(path))


def render_session_profile(report: MetricsReport, path: str | Path) -> Path:
    """Session-weighted goodput on top, aborted sessions per second below."""
    t = [i * report.bucket_ms / 1000.0 for i in range(len(report.gwop_good))]
    scale = 1000.0 / report.bucket_ms
    fig, (ax1, ax2) = plt.subplots(
        2, 1, figsize=(8, 5.5), sharex=True, gridspec_kw={"height_ratios": [2, 1]}
    )
    ax1.plot(t, [v * scale for v in report.gwop_good], lw=1.0, color="#2a6f97", label="satisfied (session-weighted)")
    ax1.plot(t, [v * scale for v in report.gwop_failed], lw=1.6, color="#c1121f", label="failed (session-weighted)")
    ax1.set_ylabel("requests / s")
    ax1.set_title(report.label or "session-weighted profile")
    ax1.legend(loc="center right", fontsize=8)
    ax1.grid(alpha=0.3)
    ax2.plot(t, [v * scale for v in report.aborted_sessions], lw=1.2, color="#6a040f")
    ax2.set_ylabel("aborted sessions / s")
    ax2.set_xlabel("time [s]")
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, Path(path))


def render_run_figures(report: MetricsReport, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    return [
        render_request_profile(report, out / "request_profile.png"),
        render_session_profile(report, out / "session_profile.png"),
    ]


def render_comparison(reports: list[MetricsReport], path: str | Path) -> Path:
    """Failed requests and perceived downtime, one bar group per technique."""
    labels = [r.label or f"run {i}" for i, r in enumerate(reports)]
    x = range(len(reports))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.8))
    ax1.bar(x, [r.failed_requests_total for r in reports], color="#c1121f")
    ax1.set_xticks(list(x), labels, rotation=20, ha="right", fontsize=8)
    ax1.set_ylabel("failed requests")
    ax2.bar(x, [r.perceived_downtime_s for r in reports], color="#2a6f97")
    ax2.set_xticks(list(x), labels, rotation=20, ha="right", fontsize=8)
    ax2.set_ylabel("perceived downtime [s]")
    fig.tight_layout()
    return _save(fig, Path(path))
