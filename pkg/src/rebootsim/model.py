"""Componentized application model: components, operation routing, fault edges.

The model is declarative and immutable once validated.  It describes which
components exist, how each user-facing operation routes through them, and
which component failures were observed to propagate to which others.  The
propagation graph drives recovery planning: rebooting a component means
rebooting its forward transitive closure over that graph.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path


COMPONENT_KINDS = ("servlet", "stateless-bean", "stateful-session-bean", "entity-bean")
SESSION_POLICIES = ("none", "external-store", "in-memory-volatile")


class ModelError(Exception):
    """Malformed model document (bad JSON shape, bad field values)."""


class UnknownComponentError(KeyError):
    def __init__(self, component_id: str):
        super().__init__(component_id)
        self.component_id = component_id

    def __str__(self) -> str:
        return f"unknown component {self.component_id!r}"


class UnknownOperationError(KeyError):
    def __init__(self, operation_id: str):
        super().__init__(operation_id)
        self.operation_id = operation_id

    def __str__(self) -> str:
        return f"unknown operation {self.operation_id!r}"


@dataclass(frozen=True)
class ServiceTime:
    """Per-invocation service time distribution, in milliseconds.

    Supported distributions: constant (value_ms), uniform (low_ms/high_ms)
    and exponential (mean_ms).  Constant distributions never consume random
    numbers, which keeps fully deterministic fixtures cheap to simulate.
    """

    dist: str = "constant"
    value_ms: float = 0.0
    low_ms: float = 0.0
    high_ms: float = 0.0
    mean_ms: float = 0.0

    @staticmethod
    def constant(value_ms: float) -> "ServiceTime":
        return ServiceTime("constant", value_ms=float(value_ms))

    @staticmethod
    def from_json(obj) -> "ServiceTime":
        if isinstance(obj, (int, float)):
            return ServiceTime.constant(obj)
        if not isinstance(obj, dict):
            raise ModelError(f"bad service_time: {obj!r}")
        dist = obj.get("dist", "constant")
        if dist == "constant":
            return ServiceTime.constant(obj.get("value_ms", 0.0))
        if dist == "uniform":
            return ServiceTime("uniform", low_ms=float(obj["low_ms"]), high_ms=float(obj["high_ms"]))
        if dist == "exponential":
            return ServiceTime("exponential", mean_ms=float(obj["mean_ms"]))
        raise ModelError(f"unknown service_time dist {dist!r}")

    @property
    def is_constant(self) -> bool:
        return self.dist == "constant"

    def sample(self, rng) -> float:
        if self.dist == "constant":
            return self.value_ms
        if self.dist == "uniform":
            return rng.uniform(self.low_ms, self.high_ms)
        return rng.expovariate(1.0 / self.mean_ms) if self.mean_ms > 0 else 0.0

    def to_json(self):
        if self.dist == "constant":
            return self.value_ms
        if self.dist == "uniform":
            return {"dist": "uniform", "low_ms": self.low_ms, "high_ms": self.high_ms}
        return {"dist": "exponential", "mean_ms": self.mean_ms}


@dataclass(frozen=True)
class ComponentSpec:
    id: str
    kind: str
    service_time: ServiceTime
    microreboot_duration: float = 1000.0
    session_state_policy: str = "none"


@dataclass(frozen=True)
class OperationSpec:
    id: str
    path: tuple[str, ...]
    is_db_write: bool = False
    is_homepage: bool = False


@dataclass(frozen=True)
class AppModel:
    """The application under test, immutable and shareable across runs."""

    components: dict[str, ComponentSpec]
    operations: dict[str, OperationSpec]
    fault_edges: tuple[tuple[str, str], ...]
    app_restart_ms: float = 20000.0
    server_restart_ms: float = 25000.0
    _successors: dict[str, tuple[str, ...]] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        succ: dict[str, list[str]] = {}
        for src, dst in self.fault_edges:
            succ.setdefault(src, []).append(dst)
        object.__setattr__(
            self, "_successors", {k: tuple(v) for k, v in succ.items()}
        )

    @property
    def homepage(self) -> str:
        for op in self.operations.values():
            if op.is_homepage:
                return op.id
        raise ModelError("model has no homepage operation")

    def component(self, component_id: str) -> ComponentSpec:
        try:
            return self.components[component_id]
        except KeyError:
            raise UnknownComponentError(component_id) from None

    def operation(self, operation_id: str) -> OperationSpec:
        try:
            return self.operations[operation_id]
        except KeyError:
            raise UnknownOperationError(operation_id) from None


def route_for(model: AppModel, operation_id: str) -> tuple[str, ...]:
    """Ordered component path serving an operation; raises on unknown ids."""
    return model.operation(operation_id).path


def fault_closure(model: AppModel, seed: str) -> set[str]:
    """Components reachable from ``seed`` along fault edges, seed included.

    Rebooting a component requires rebooting everything its failures were
    observed to reach, so recovery planning always acts on this set.
    """
    if seed not in model.components:
        raise UnknownComponentError(seed)
    succ = model._successors
    seen = {seed}
    stack = [seed]
    while stack:
        node = stack.pop()
        for nxt in succ.get(node, ()):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def validate_model(model: AppModel) -> list[str]:
    """Structural validation; returns a list of violations (empty = ok).

    Violations are data, not exceptions: callers decide whether to abort.
    """
    problems: list[str] = []
    comps = model.components

    for cid, comp in comps.items():
        if cid != comp.id:
            problems.append(f"component key {cid!r} does not match id {comp.id!r}")
        if comp.kind not in COMPONENT_KINDS:
            problems.append(f"component {cid}: unknown kind {comp.kind!r}")
        if comp.session_state_policy not in SESSION_POLICIES:
            problems.append(f"component {cid}: unknown session_state_policy {comp.session_state_policy!r}")
        if comp.microreboot_duration <= 0:
            problems.append(f"component {cid}: microreboot_duration must be > 0")
        if comp.kind == "servlet" and comp.session_state_policy != "none":
            problems.append(f"component {cid}: servlets are stateless, session_state_policy must be 'none'")

    homepages = [op.id for op in model.operations.values() if op.is_homepage]
    if len(homepages) == 0:
        problems.append("no homepage operation")
    elif len(homepages) > 1:
        problems.append(f"multiple homepage operations: {', '.join(sorted(homepages))}")

    for oid, op in model.operations.items():
        if oid != op.id:
            problems.append(f"operation key {oid!r} does not match id {op.id!r}")
        if not op.path:
            problems.append(f"operation {oid}: empty path")
            continue
        for cid in op.path:
            if cid not in comps:
                problems.append(f"operation {oid}: unresolved component {cid}")
        first = comps.get(op.path[0])
        if first is not None and first.kind != "servlet":
            problems.append(f"operation {oid}: path must start at a servlet, got {first.kind}")

    for src, dst in model.fault_edges:
        if src == dst:
            problems.append(f"fault edge {src}->{dst}: self-edges disallowed")
        if src not in comps:
            problems.append(f"fault edge {src}->{dst}: unresolved component {src}")
        if dst not in comps:
            problems.append(f"fault edge {src}->{dst}: unresolved component {dst}")

    # a whole restart redeploys everything, so it cannot beat the slowest
    # single reboot; zero means "modeled as instantaneous" and is exempt
    max_urb = max((c.microreboot_duration for c in comps.values()), default=0.0)
    if comps and 0.0 < model.app_restart_ms < max_urb:
        problems.append(
            f"app_restart_ms {model.app_restart_ms} < largest microreboot_duration {max_urb}"
        )
    if model.server_restart_ms < model.app_restart_ms:
        problems.append(
            f"server_restart_ms {model.server_restart_ms} < app_restart_ms {model.app_restart_ms}"
        )
    return problems


def bfs_reachable(edges: list[tuple[str, str]], seed: str) -> set[str]:
    """Plain breadth-first reachability over an edge list, seed included.

    Kept separate from the adjacency-based closure so the two can check
    each other.
    """
    succ: dict[str, list[str]] = {}
    for a, b in edges:
        succ.setdefault(a, []).append(b)
    seen = {seed}
    queue = deque([seed])
    while queue:
        node = queue.popleft()
        for nxt in succ.get(node, ()):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def model_from_dict(doc: dict) -> AppModel:
    try:
        components = {}
        for c in doc["components"]:
            spec = ComponentSpec(
                id=c["id"],
                kind=c["kind"],
                service_time=ServiceTime.from_json(c.get("service_time", 0.0)),
                microreboot_duration=float(c.get("microreboot_duration", 1000.0)),
                session_state_policy=c.get("session_state_policy", "none"),
            )
            if spec.id in components:
                raise ModelError(f"duplicate component id {spec.id!r}")
            components[spec.id] = spec
        operations = {}
        for o in doc["operations"]:
            op = OperationSpec(
                id=o["id"],
                path=tuple(o["path"]),
                is_db_write=bool(o.get("is_db_write", False)),
                is_homepage=bool(o.get("is_homepage", False)),
            )
            if op.id in operations:
                raise ModelError(f"duplicate operation id {op.id!r}")
            operations[op.id] = op
        edges = tuple((str(a), str(b)) for a, b in doc.get("fault_edges", []))
        return AppModel(
            components=components,
            operations=operations,
            fault_edges=edges,
            app_restart_ms=float(doc.get("app_restart_ms", 20000.0)),
            server_restart_ms=float(doc.get("server_restart_ms", 25000.0)),
        )
    except ModelError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"bad model document: {exc}") from exc


def load_model(path: str | Path) -> AppModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
