"""Accessors for the bundled fixture model, workload and scenarios.

The fixture is a reconstructed eBay-like auction application (27
operations, 9 beans, one front servlet per operation) with a hand-built
fault propagation map.  It is plain data: swap in your own JSON documents
for other applications.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .model import AppModel, load_model
from .scenario import ScenarioDocument, load_scenario
from .workload import WorkloadModel, load_workload


def _data_dir() -> Path:
    return Path(resources.files("rebootsim") / "data")


def rubis_model_path() -> Path:
    return _data_dir() / "rubis_model.json"


def rubis_workload_path() -> Path:
    return _data_dir() / "rubis_workload.json"


def scenario_path(name: str) -> Path:
    path = _data_dir() / "scenarios" / f"{name}.json"
    if not path.is_file():
        have = sorted(p.stem for p in (_data_dir() / "scenarios").glob("*.json"))
        raise FileNotFoundError(f"no bundled scenario {name!r}; available: {', '.join(have)}")
    return path


def bundled_scenarios() -> list[str]:
    return sorted(p.stem for p in (_data_dir() / "scenarios").glob("*.json"))


def load_rubis_model() -> AppModel:
    return load_model(rubis_model_path())


def load_rubis_workload() -> WorkloadModel:
    return load_workload(rubis_workload_path())


def load_bundled_scenario(name: str) -> ScenarioDocument:
    return load_scenario(scenario_path(name))
