"""Shared fixtures: the bundled application model plus small synthetic ones."""

from __future__ import annotations

import random

import pytest

from rebootsim.fixtures import load_rubis_model, load_rubis_workload
from rebootsim.metrics import SUCCESS_OUTCOMES
from rebootsim.model import AppModel, ComponentSpec, OperationSpec, ServiceTime
from rebootsim.workload import build_workload


@pytest.fixture(scope="session")
def rubis_model():
    return load_rubis_model()


@pytest.fixture(scope="session")
def rubis_workload():
    return load_rubis_workload()


def make_component(cid, kind="entity-bean", svc=10.0, urb=1000.0, policy="none"):
    return ComponentSpec(
        id=cid,
        kind=kind,
        service_time=ServiceTime.constant(svc),
        microreboot_duration=urb,
        session_state_policy=policy,
    )


def make_model(components, operations, edges=(), app_restart_ms=20000.0, server_restart_ms=25000.0):
    return AppModel(
        components={c.id: c for c in components},
        operations={o.id: o for o in operations},
        fault_edges=tuple(edges),
        app_restart_ms=app_restart_ms,
        server_restart_ms=server_restart_ms,
    )


def mini_model(cart_policy="none", app_restart_ms=20000.0, server_restart_ms=25000.0):
    """Three-operation shop: a homepage, a stateful cart path, a misc path."""
    comps = [
        make_component("Front", kind="servlet", svc=5.0),
        make_component("CartBean", kind="stateful-session-bean", svc=10.0, urb=500.0, policy=cart_policy),
        make_component("MiscBean", kind="stateless-bean", svc=10.0, urb=500.0),
    ]
    ops = [
        OperationSpec("Home", ("Front",), is_homepage=True),
        OperationSpec("UseCart", ("Front", "CartBean")),
        OperationSpec("BrowseMisc", ("Front", "MiscBean")),
        OperationSpec("Checkout", ("Front", "CartBean", "MiscBean"), is_db_write=True),
    ]
    return make_model(comps, ops, app_restart_ms=app_restart_ms, server_restart_ms=server_restart_ms)


def mini_workload():
    return build_workload(
        [
            ("Home", "UseCart", 0.5),
            ("Home", "BrowseMisc", 0.45),
            ("Home", "End", 0.05),
            ("UseCart", "UseCart", 0.25),
            ("UseCart", "BrowseMisc", 0.35),
            ("UseCart", "Checkout", 0.25),
            ("UseCart", "Home", 0.05),
            ("UseCart", "End", 0.10),
            ("BrowseMisc", "UseCart", 0.40),
            ("BrowseMisc", "BrowseMisc", 0.20),
            ("BrowseMisc", "Back", 0.30),
            ("BrowseMisc", "End", 0.10),
            ("Checkout", "UseCart", 0.40),
            ("Checkout", "BrowseMisc", 0.40),
            ("Checkout", "Home", 0.10),
            ("Checkout", "End", 0.10),
            ("End", "Home", 1.0),
        ],
        homepage="Home",
    )


def random_digraph(rng: random.Random, n_nodes: int, n_edges: int):
    nodes = [f"n{i}" for i in range(n_nodes)]
    edges = set()
    attempts = 0
    while len(edges) < n_edges and attempts < n_edges * 20:
        a, b = rng.choice(nodes), rng.choice(nodes)
        attempts += 1
        if a != b:
            edges.add((a, b))
    return nodes, sorted(edges)


def failed_count(records):
    return sum(1 for r in records if r.outcome not in SUCCESS_OUTCOMES)
