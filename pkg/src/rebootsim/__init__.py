"""Simulator and metrics toolkit for component-level reboot recovery.

The package models a componentized three-tier web application, drives it
with Markov-chain clients, injects faults, executes microreboots or whole
restarts with transparent call retry, and quantifies the end-user impact
through session-aware goodput metrics.
"""

from .engine import (
    EventQueue,
    RetryLaterSignal,
    RetryPolicy,
    Simulation,
    estimate_remaining_recovery,
    invoke,
)
from .faults import FaultSpec, RecoveryAction, RecoveryPlan, inject, plan_recovery
from .metrics import (
    MetricsReport,
    RequestRecord,
    SessionRecord,
    build_report,
    compare,
    g_ses,
    g_wop,
    perceived_downtime,
    sessionize,
)
from .model import (
    AppModel,
    ComponentSpec,
    OperationSpec,
    ServiceTime,
    fault_closure,
    load_model,
    route_for,
    validate_model,
)
from .scenario import ScenarioDocument, load_scenario, run_scenario, validate_scenario
from .workload import ClientState, WorkloadModel, classify_response, load_workload, next_state, step_client

__version__ = "0.1.0"

__all__ = [
    "AppModel",
    "ClientState",
    "ComponentSpec",
    "EventQueue",
    "FaultSpec",
    "MetricsReport",
    "OperationSpec",
    "RecoveryAction",
    "RecoveryPlan",
    "RequestRecord",
    "RetryLaterSignal",
    "RetryPolicy",
    "ScenarioDocument",
    "ServiceTime",
    "SessionRecord",
    "Simulation",
    "WorkloadModel",
    "build_report",
    "classify_response",
    "compare",
    "estimate_remaining_recovery",
    "fault_closure",
    "g_ses",
    "g_wop",
    "inject",
    "invoke",
    "load_model",
    "load_scenario",
    "load_workload",
    "next_state",
    "perceived_downtime",
    "plan_recovery",
    "route_for",
    "run_scenario",
    "sessionize",
    "step_client",
    "validate_model",
    "validate_scenario",
]
