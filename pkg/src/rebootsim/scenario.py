"""Scenario documents: one JSON file describing a complete experiment.

A scenario names the model and workload files, the client population,
run length, seed, retry policy, and the fault/recovery schedule.  Running
a scenario is a pure function of (document, seed), which makes replicate
sweeps and byte-for-byte reproducibility checks cheap.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .engine import RetryPolicy, Simulation, action_completion
from .faults import FaultSpec, RecoveryPlan, resolve_plan
from .metrics import MetricsReport, RequestRecord, build_report
from .model import AppModel, load_model, validate_model
from .workload import WorkloadModel, load_workload


class ScenarioError(Exception):
    """Scenario document failed validation; message lists every problem."""


@dataclass
class ScenarioDocument:
    model_path: Path
    workload_path: Path
    clients: int = 20
    duration_ms: float = 60000.0
    seed: int = 0
    bucket_ms: float = 1000.0
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    faults: list[FaultSpec] = field(default_factory=list)
    recoveries: list[RecoveryPlan] = field(default_factory=list)
    abandonment_ms: float = 8000.0
    error_pacing_ms: float = 50.0
    queue_capacity: int | None = None
    mttf_ms: float | None = None
    mttr_ms: float | None = None
    out_dir: Path | None = None
    name: str | None = None


def _unwrap(entry: dict, key: str) -> dict:
    # entries may be written bare or wrapped as {"fault": {...}} / {"recovery": {...}}
    if set(entry) == {key}:
        return entry[key]
    return entry


def scenario_from_dict(doc: dict, base_dir: Path | None = None) -> ScenarioDocument:
    base = base_dir or Path(".")

    def resolve(p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else base / p

    try:
        retry_doc = doc.get("retry", {})
        retry = RetryPolicy(
            enabled=bool(retry_doc.get("enabled", False)),
            max_attempts=int(retry_doc.get("max_attempts", 3)),
            pause_factor=float(retry_doc.get("pause_factor", 1.0)),
        )
        faults = []
        for entry in doc.get("faults", []):
            f = _unwrap(entry, "fault")
            faults.append(
                FaultSpec(
                    target=f["target"],
                    onset_ms=float(f["onset_ms"]),
                    kind=f.get("kind", "fail-stop"),
                    p=float(f.get("p", 1.0)),
                    cleared_by=f.get("cleared_by", "any-reboot-covering-target"),
                )
            )
        recoveries = []
        for entry in doc.get("recoveries", []):
            r = _unwrap(entry, "recovery")
            recoveries.append(
                RecoveryPlan(
                    policy=r["policy"],
                    trigger_ms=float(r["trigger_ms"]),
                    failing=r.get("failing"),
                    stabilization_ms=float(r.get("stabilization_ms", 0.0)),
                    stabilization_factor=float(r.get("stabilization_factor", 1.0)),
                )
            )
        return ScenarioDocument(
            model_path=resolve(doc["model"]),
            workload_path=resolve(doc["workload"]),
            clients=int(doc.get("clients", 20)),
            duration_ms=float(doc.get("duration_ms", 60000.0)),
            seed=int(doc.get("seed", 0)),
            bucket_ms=float(doc.get("bucket_ms", 1000.0)),
            retry=retry,
            faults=faults,
            recoveries=recoveries,
            abandonment_ms=float(doc.get("abandonment_ms", 8000.0)),
            error_pacing_ms=float(doc.get("error_pacing_ms", 50.0)),
            queue_capacity=doc.get("queue_capacity"),
            mttf_ms=doc.get("mttf_ms"),
            mttr_ms=doc.get("mttr_ms"),
            out_dir=resolve(doc["out"]) if "out" in doc else None,
            name=doc.get("name"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"bad scenario document: {exc}") from exc


def load_scenario(path: str | Path) -> ScenarioDocument:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    scenario = scenario_from_dict(doc, base_dir=path.parent)
    if scenario.name is None:
        scenario.name = path.stem
    return scenario


def validate_scenario(scenario: ScenarioDocument) -> list[str]:
    """Collect every problem with the scenario and its referenced files."""
    problems: list[str] = []
    if scenario.clients < 1:
        problems.append("clients must be >= 1")
    if scenario.duration_ms <= 0:
        problems.append("duration_ms must be > 0")
    if scenario.bucket_ms <= 0:
        problems.append("bucket_ms must be > 0")
    if scenario.error_pacing_ms <= 0:
        problems.append("error_pacing_ms must be > 0")
    try:
        scenario.retry.validate()
    except Exception as exc:
        problems.append(str(exc))

    model: AppModel | None = None
    for label, path in (("model", scenario.model_path), ("workload", scenario.workload_path)):
        if not Path(path).is_file():
            problems.append(f"{label} file not found: {path}")
    if problems:
        return problems

    try:
        model = load_model(scenario.model_path)
        problems.extend(validate_model(model))
    except Exception as exc:
        problems.append(f"model: {exc}")
    try:
        load_workload(scenario.workload_path)
    except Exception as exc:
        problems.append(f"workload: {exc}")
    if model is None or problems:
        return problems

    for f in scenario.faults:
        try:
            f.validate(model)
        except Exception as exc:
            problems.append(f"fault on {f.target}: {exc}")
    for r in scenario.recoveries:
        if r.trigger_ms < 0:
            problems.append(f"recovery trigger_ms must be >= 0, got {r.trigger_ms}")
        if r.failing is not None and r.failing not in model.components:
            problems.append(f"recovery references unknown component {r.failing}")
        for f in scenario.faults:
            if r.failing == f.target and r.trigger_ms < f.onset_ms:
                problems.append(
                    f"recovery for {r.failing} triggers at {r.trigger_ms} before fault onset {f.onset_ms}"
                )
    return problems


def build_simulation(
    scenario: ScenarioDocument,
    model: AppModel | None = None,
    workload: WorkloadModel | None = None,
    seed: int | None = None,
) -> Simulation:
    model = model if model is not None else load_model(scenario.model_path)
    workload = workload if workload is not None else load_workload(scenario.workload_path)
    actions = []
    stabilization = []
    for plan in scenario.recoveries:
        action = resolve_plan(model, plan)
        if action is None:
            continue
        actions.append(action)
        if plan.stabilization_ms > 0:
            done = action_completion(model, action)
            stabilization.append((done, done + plan.stabilization_ms, plan.stabilization_factor))
    return Simulation(
        model,
        workload,
        clients=scenario.clients,
        duration_ms=scenario.duration_ms,
        seed=scenario.seed if seed is None else seed,
        retry=scenario.retry,
        faults=scenario.faults,
        actions=actions,
        abandonment_ms=scenario.abandonment_ms,
        error_pacing_ms=scenario.error_pacing_ms,
        queue_capacity=scenario.queue_capacity,
        stabilization=stabilization,
    )


def run_scenario(
    scenario: ScenarioDocument,
    model: AppModel | None = None,
    workload: WorkloadModel | None = None,
    seed: int | None = None,
    bucket_ms: float | None = None,
) -> tuple[list[RequestRecord], MetricsReport]:
    model = model if model is not None else load_model(scenario.model_path)
    workload = workload if workload is not None else load_workload(scenario.workload_path)
    sim = build_simulation(scenario, model, workload, seed=seed)
    records = sim.run()
    report = build_report(
        records,
        homepage=model.homepage,
        bucket_ms=bucket_ms if bucket_ms is not None else scenario.bucket_ms,
        duration_ms=scenario.duration_ms,
        mttf_ms=scenario.mttf_ms,
        mttr_ms=scenario.mttr_ms,
        label=scenario.name,
        seed=sim.seed,
    )
    return records, report
