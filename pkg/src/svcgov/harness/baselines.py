"""The three weaker comparison stacks, produced purely by disarming
certifier gates on the full stack.

* ontology-only: conformance checking (closure) with no admissibility
  layer beyond it; single default evaluator, no memory.
* typed-planner-no-memory: closure plus regime-indexed ranking; no
  stability/capacity/invariance certificates, no store.
* heuristic-memory: store-driven scoring with a single global evaluator
  and no obligation screening at all.

There are no code forks: a baseline is exactly the full stack with a flag
set, so ablation fidelity is bit-for-bit by construction and asserted in
tests anyway.
"""

from __future__ import annotations

from ..errors import ConfigError
from ..orchestrator import GateFlags, OrchestratorConfig

FULL = "full"

BASELINE_FLAGS: dict[str, GateFlags] = {
    "full": GateFlags(),
    "ontology-only": GateFlags(
        closure=True,
        stability=False,
        capacity=False,
        invariance=False,
        substitution=False,
        memory=False,
        regime_family=False,
    ),
    "typed-planner-no-memory": GateFlags(
        closure=True,
        stability=False,
        capacity=False,
        invariance=False,
        substitution=False,
        memory=False,
        regime_family=True,
    ),
    "heuristic-memory": GateFlags(
        closure=False,
        stability=False,
        capacity=False,
        invariance=False,
        substitution=False,
        memory=True,
        regime_family=False,
    ),
}

SUBJECTS = tuple(BASELINE_FLAGS)


def configure(cfg: OrchestratorConfig, subject: str) -> OrchestratorConfig:
    """The given stack as a flag ablation of the full configuration."""
    try:
        flags = BASELINE_FLAGS[subject]
    except KeyError:
        raise ConfigError(
            f"unknown subject {subject!r}; expected one of {', '.join(SUBJECTS)}"
        ) from None
    return cfg.ablated(flags)
