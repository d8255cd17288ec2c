"""Fault injection specs and recovery planning.

Detection is deliberately bypassed: recovery actions fire at declared
trigger times, so experiments isolate the recovery mechanism itself.  A
fault plus a detection delay is expressed by setting the recovery trigger
later than the fault onset.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import AppModel, fault_closure

FAIL_STOP = "fail-stop"
DEGRADE = "degrade"

CLEARED_BY_REBOOT = "any-reboot-covering-target"
CLEARED_NEVER = "never"

POLICY_MICROREBOOT = "microreboot-closure"
POLICY_APP_RESTART = "app-restart"
POLICY_SERVER_RESTART = "server-restart"
POLICY_NONE = "none"

ACTION_MICROREBOOT = "microreboot"
ACTION_APP_RESTART = "app_restart"
ACTION_SERVER_RESTART = "server_restart"


class FaultConfigError(Exception):
    """Invalid fault or recovery declaration."""


@dataclass(frozen=True)
class FaultSpec:
    """What fails and when.

    fail-stop makes every invocation of the target fail from onset on;
    degrade fails each invocation independently with probability ``p``.
    A fault persists until a reboot covering the target completes, or
    forever when cleared_by is "never".
    """

    target: str
    onset_ms: float
    kind: str = FAIL_STOP
    p: float = 1.0
    cleared_by: str = CLEARED_BY_REBOOT

    def validate(self, model: AppModel | None = None) -> None:
        if self.kind not in (FAIL_STOP, DEGRADE):
            raise FaultConfigError(f"unknown fault kind {self.kind!r}")
        if self.cleared_by not in (CLEARED_BY_REBOOT, CLEARED_NEVER):
            raise FaultConfigError(f"unknown cleared_by {self.cleared_by!r}")
        if self.onset_ms < 0:
            raise FaultConfigError("fault onset_ms must be >= 0")
        if self.kind == DEGRADE and not 0.0 <= self.p <= 1.0:
            # p = 0 is an explicit null fault, useful as a control arm
            raise FaultConfigError(f"degrade probability must be in [0, 1], got {self.p}")
        if model is not None:
            model.component(self.target)


@dataclass(frozen=True)
class RecoveryAction:
    """A concrete reboot scheduled at a point in simulated time."""

    kind: str
    trigger_ms: float
    components: tuple[str, ...] = ()

    def covers(self, component_id: str) -> bool:
        if self.kind in (ACTION_APP_RESTART, ACTION_SERVER_RESTART):
            return True
        return component_id in self.components


@dataclass(frozen=True)
class RecoveryPlan:
    """Declarative recovery policy, resolved to an action against a model.

    The optional stabilization window inflates service times for a while
    after the action completes, approximating load-dependent settling; it
    is off (zero length) by default.
    """

    policy: str
    trigger_ms: float
    failing: str | None = None
    stabilization_ms: float = 0.0
    stabilization_factor: float = 1.0


def plan_recovery(model: AppModel, failing: str | None, policy: str, trigger_ms: float = 0.0) -> RecoveryAction | None:
    """Map a failing component and a policy to the action to schedule.

    The microreboot policy reboots the failing component's forward closure
    over the fault propagation map; whole-restart policies ignore the
    component.  Policy "none" plans nothing (baseline arms).
    """
    if policy == POLICY_NONE:
        return None
    if policy == POLICY_APP_RESTART:
        return RecoveryAction(ACTION_APP_RESTART, trigger_ms)
    if policy == POLICY_SERVER_RESTART:
        return RecoveryAction(ACTION_SERVER_RESTART, trigger_ms)
    if policy == POLICY_MICROREBOOT:
        if failing is None:
            raise FaultConfigError("microreboot-closure policy requires a failing component")
        closure = fault_closure(model, failing)
        return RecoveryAction(ACTION_MICROREBOOT, trigger_ms, tuple(sorted(closure)))
    raise FaultConfigError(f"unknown recovery policy {policy!r}")


def resolve_plan(model: AppModel, plan: RecoveryPlan) -> RecoveryAction | None:
    return plan_recovery(model, plan.failing, plan.policy, plan.trigger_ms)


def inject(engine, spec: FaultSpec) -> None:
    """Register a fault with a simulation engine before it runs."""
    spec.validate(engine.model)
    engine.add_fault(spec)
