"""Shipped scenario packs: hospital delivery and retail guidance.

Each pack is a directory with an ontology document, a scenario file, and
a run configuration.  Packs load through the same parsers and validators
as user-supplied files.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from ..errors import ConfigError
from ..orchestrator import OrchestratorConfig
from .scenario import Scenario, load_config, load_scenario

PACK_NAMES = ("hospital", "retail")


def pack_dir(name: str) -> Path:
    if name not in PACK_NAMES:
        raise ConfigError(f"unknown pack {name!r}; expected one of {', '.join(PACK_NAMES)}")
    return Path(str(resources.files("svcgov").joinpath("packs", name)))


def load_pack(name: str) -> tuple[Scenario, OrchestratorConfig]:
    base = pack_dir(name)
    scenario = load_scenario(base / "scenario.json")
    cfg = load_config(base / "config.json", scenario.schema, scenario.assertions)
    return scenario, cfg
