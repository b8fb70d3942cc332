"""Seeded benchmark families, the five structural metrics, and the
comparison table.

The four families (substitution, regime-switch, environment-shift,
memory-reuse) perturb the two shipped scenario packs by seeded parameter
jitter rather than generating unconstrained random worlds, so every
instance stays anchored to the case-study entities.  Metrics are
recomputed by an independent scanner that replays each trace from the
scenario script, so a subject cannot grade its own homework:

* identity-preservation rate: deployed transformations scoring at or
  above the identity threshold;
* safe reconfiguration rate: runs whose deployments never violate the
  invariant core;
* bounded degradation: the largest structural drift deployed on a tick
  where the true regime changed (the declared switch allowance covers
  the regime part, so anything structural is excess);
* certificate-reuse gain: decisions where a transported certificate
  replaced a fresh computation, per run;
* structural regret: per tick, the score gap to the best fully
  admissible candidate in hindsight (exhaustive screening, memory-neutral
  scoring), summed per run.
"""

from __future__ import annotations

import csv
import io
import json
import random
from dataclasses import dataclass, replace as dc_replace
from functools import lru_cache
from typing import Mapping, Sequence

from ..certify import DriftLedger, admissible, structural_charge
from ..errors import GovernanceError, IncomparableReports
from ..evaluation import core_value, detect_regime, evaluate, identity_score
from ..memory import EMPTY_STORE, MemoryStore
from ..model import semantic_lift
from ..orchestrator import (
    DecisionTrace,
    OrchestratorConfig,
    registry_from_state,
    run,
)
from ..transform import (
    UpdateConstraint,
    apply,
    generate_candidates,
    transformation_key,
)
from . import baselines
from .packs import pack_dir, load_pack
from .scenario import Scenario, scenario_from_data, scenario_to_data

FAMILIES = ("substitution", "regime-switch", "environment-shift", "memory-reuse")

_EPS = 1e-9
_EXHAUSTIVE = 10**9


@dataclass(frozen=True)
class MetricsReport:
    family: str
    subject: str
    seeds: tuple[int, ...]
    identity_preservation_rate: float
    safe_reconfiguration_rate: float
    bounded_degradation: float
    certificate_reuse_gain: float
    structural_regret: float
    deployments: int
    runs: int

    def __post_init__(self) -> None:
        for rate in (self.identity_preservation_rate, self.safe_reconfiguration_rate):
            if not (0.0 <= rate <= 1.0):
                raise ValueError(f"rates must lie in [0, 1], got {rate}")
        if self.structural_regret < 0:
            raise ValueError("structural regret must be nonnegative")

    def metric_values(self) -> dict[str, float]:
        return {
            "identity_preservation_rate": self.identity_preservation_rate,
            "safe_reconfiguration_rate": self.safe_reconfiguration_rate,
            "bounded_degradation": self.bounded_degradation,
            "certificate_reuse_gain": self.certificate_reuse_gain,
            "structural_regret": self.structural_regret,
        }

    def to_data(self) -> dict:
        return {
            "family": self.family,
            "subject": self.subject,
            "seeds": list(self.seeds),
            "metrics": self.metric_values(),
            "deployments": self.deployments,
            "runs": self.runs,
        }

    @classmethod
    def from_data(cls, data: Mapping) -> "MetricsReport":
        m = data["metrics"]
        return cls(
            family=str(data["family"]),
            subject=str(data["subject"]),
            seeds=tuple(int(s) for s in data["seeds"]),
            identity_preservation_rate=float(m["identity_preservation_rate"]),
            safe_reconfiguration_rate=float(m["safe_reconfiguration_rate"]),
            bounded_degradation=float(m["bounded_degradation"]),
            certificate_reuse_gain=float(m["certificate_reuse_gain"]),
            structural_regret=float(m["structural_regret"]),
            deployments=int(data.get("deployments", 0)),
            runs=int(data.get("runs", 0)),
        )


#: metric name -> True when higher is better
METRIC_DIRECTIONS = {
    "identity_preservation_rate": True,
    "safe_reconfiguration_rate": True,
    "bounded_degradation": False,
    "certificate_reuse_gain": True,
    "structural_regret": False,
}


# ---------------------------------------------------------------------------
# The independent trace scanner
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunScan:
    deployments: int
    identity_ok: int
    core_violations: int
    max_switch_structural: float
    transported: int
    regret: float


def scan_run(scenario: Scenario, cfg: OrchestratorConfig, traces: Sequence[DecisionTrace]) -> RunScan:
    """Replay a run from the scenario script and recompute every metric
    ingredient against the full governance law (``cfg`` must carry full
    gates; only its schema, core, prior, and switch model are consulted)."""
    raw = scenario.initial_state
    h = scenario.initial_hypothesis
    true_regime = cfg.default_regime()
    deployments = identity_ok = violations = transported = 0
    max_switch_structural = 0.0
    regret = 0.0
    exhaustive_grammar = dc_replace(cfg.grammar, max_candidates=_EXHAUSTIVE)

    for trace in traces:
        raw, _ = scenario.patched(raw, trace.tick)
        x = dc_replace(raw, time=trace.tick)
        z = semantic_lift(x, cfg.schema, cfg.assertions)
        e_true = detect_regime(cfg.regimes, z)
        switched = e_true.label != true_regime.label
        from_true = true_regime
        true_regime = e_true

        for name, bound in trace.regime_rewrites:
            h = apply(UpdateConstraint(name, bound), h)
        h_before = h

        if trace.selected is not None:
            h = apply(trace.selected, h)
            if h.digest() != trace.deployed_digest:
                raise GovernanceError(f"trace at tick {trace.tick} does not replay")
            deployments += 1
            score = identity_score(cfg.core.identity, h_before, h, z, cfg.schema)
            if score >= cfg.core.identity.threshold - _EPS:
                identity_ok += 1
            if not core_value(cfg.core, h, z, cfg.schema).passed:
                violations += 1
            if switched:
                max_switch_structural = max(
                    max_switch_structural, structural_charge(h_before, h, cfg.switch_model)
                )
        transported += trace.transported_used

        regret += _tick_regret(
            scenario, cfg, exhaustive_grammar, x, h_before, h, z, e_true, from_true, trace
        )
    return RunScan(
        deployments=deployments,
        identity_ok=identity_ok,
        core_violations=violations,
        max_switch_structural=max_switch_structural,
        transported=transported,
        regret=regret,
    )


def _tick_regret(scenario, cfg, grammar, x, h_before, h_after, z, e_true, from_true, trace) -> float:
    """Score gap to the best admissible candidate in hindsight; the oracle
    screens every grammar candidate with full gates and memory-neutral
    scoring."""
    registry = registry_from_state(x, cfg.assertions, cfg.schema)
    candidates = generate_candidates(h_before, z, grammar, registry)
    fallback_tau = cfg.fallback
    if fallback_tau is not None and transformation_key(fallback_tau) not in {
        transformation_key(t) for t in candidates
    }:
        candidates = candidates + [fallback_tau]

    best: float | None = None
    achieved: float | None = None
    deployed_key = transformation_key(trace.selected) if trace.selected is not None else None
    for tau in candidates:
        verdict = admissible(
            tau,
            h_before,
            z,
            e_true,
            EMPTY_STORE,
            cfg,
            ledger=DriftLedger(bound=cfg.drift_bound),
            from_regime=from_true,
            tick=trace.tick,
        )
        if verdict.error:
            continue
        a2 = verdict.obligation("A2")
        source = a2.certificate or a2.violation
        charge = float(source.evidence_map().get("charge", 0.0)) if source else 0.0
        candidate_h = apply(tau, h_before)
        score = evaluate(e_true, candidate_h, z, 0.0, cfg.schema, switching_cost=charge).total
        if verdict.passed and (best is None or score > best):
            best = score
        if deployed_key is not None and transformation_key(tau) == deployed_key:
            achieved = score
    if best is None:
        return 0.0
    if achieved is None:
        if trace.selected is not None:
            charge = structural_charge(h_before, h_after, cfg.switch_model) + cfg.switch_model.cost(
                from_true.label, e_true.label
            ) + cfg.switch_model.residual(from_true.label, e_true.label)
            achieved = evaluate(e_true, h_after, z, 0.0, cfg.schema, switching_cost=charge).total
        else:
            achieved = evaluate(e_true, h_before, z, 0.0, cfg.schema).total
    return max(0.0, best - achieved)


# ---------------------------------------------------------------------------
# Seeded families
# ---------------------------------------------------------------------------


def _pack_data(name: str) -> tuple[dict, OrchestratorConfig]:
    scenario, cfg = load_pack(name)
    ontology_text = (pack_dir(name) / "ontology.txt").read_text(encoding="utf-8")
    return scenario_to_data(scenario, ontology_text), cfg


def _gen_substitution(seed: int) -> tuple[Scenario, OrchestratorConfig, MemoryStore]:
    rng = random.Random(("substitution", seed).__repr__())
    data, cfg = _pack_data("hospital")
    t0 = rng.choice((1, 2, 3))
    battery = round(rng.uniform(0.06, 0.14), 3)
    data["events"] = [
        {
            "tick": t0,
            "patches": [
                ["battery", "R1", battery],
                ["health", "r1_nav", "degraded"],
                ["health", "r1_handoff", "degraded"],
            ],
        },
        {"tick": t0 + 1, "patches": [["availability", "R1", False]]},
    ]
    data["ticks"] = t0 + 3
    data["initial_state"]["request"]["deadline"] = rng.choice((11, 12, 13))
    return scenario_from_data(data), cfg, EMPTY_STORE


def _gen_regime_switch(seed: int) -> tuple[Scenario, OrchestratorConfig, MemoryStore]:
    rng = random.Random(("regime-switch", seed).__repr__())
    data, cfg = _pack_data("retail")
    t0 = rng.choice((2, 3, 4))
    dip = round(rng.uniform(0.3, 0.6), 3)
    data["events"] = [
        {
            "tick": t0,
            "patches": [
                ["zone+", "aisle2", "env:LoudAisle"],
                ["health", "speech_unit", "degraded"],
                ["bandwidth", "aisle2", dip],
            ],
        }
    ]
    data["ticks"] = t0 + 3
    data["initial_state"]["request"]["deadline"] = rng.choice((13, 15, 17))
    return scenario_from_data(data), cfg, EMPTY_STORE


@lru_cache(maxsize=None)
def _environment_priming_store() -> MemoryStore:
    """History for the environment-shift family: a transfer to the Mk2
    navigation unit that later failed, recorded in the unshifted ward
    environment class."""
    data, cfg = _pack_data("hospital")
    data["events"] = [
        {"tick": 2, "patches": [["battery", "R1", 0.12], ["health", "r1_nav", "degraded"]]},
        {"tick": 3, "patches": [["fail", "r2_nav", "runtime-failure"]]},
    ]
    data["ticks"] = 4
    scenario = scenario_from_data(data)
    return run(scenario, cfg).store


def _gen_environment_shift(seed: int) -> tuple[Scenario, OrchestratorConfig, MemoryStore]:
    rng = random.Random(("environment-shift", seed).__repr__())
    data, cfg = _pack_data("hospital")
    shifted = rng.random() < 0.5
    events = []
    if shifted:
        events.append({"tick": 1, "patches": [["zone+", "ward", "env:RestrictedArea"]]})
    events.append(
        {
            "tick": 2,
            "patches": [
                ["battery", "R1", round(rng.uniform(0.06, 0.14), 3)],
                ["health", "r1_nav", "degraded"],
                ["health", "r1_handoff", "degraded"],
            ],
        }
    )
    events.append({"tick": 3, "patches": [["availability", "R1", False]]})
    data["events"] = events
    data["ticks"] = 5
    return scenario_from_data(data), cfg, _environment_priming_store()


@lru_cache(maxsize=None)
def _memory_priming_store() -> MemoryStore:
    """History for the memory-reuse family: the speech interface failed at
    the noisy tick; the platform recovered by substituting the touch unit,
    leaving certificates behind for transport."""
    data, cfg = _pack_data("retail")
    data["events"] = [
        {
            "tick": 3,
            "patches": [["zone+", "aisle2", "env:LoudAisle"], ["fail", "speech_unit", "runtime-failure"]],
        }
    ]
    data["ticks"] = 5
    scenario = scenario_from_data(data)
    return run(scenario, cfg).store


def _gen_memory_reuse(seed: int) -> tuple[Scenario, OrchestratorConfig, MemoryStore]:
    rng = random.Random(("memory-reuse", seed).__repr__())
    data, cfg = _pack_data("retail")
    data["events"] = [
        {
            "tick": 3,
            "patches": [["zone+", "aisle2", "env:LoudAisle"], ["health", "speech_unit", "failed"]],
        }
    ]
    data["ticks"] = 6
    data["initial_state"]["request"]["deadline"] = rng.choice((12, 15, 18))
    data["initial_state"]["request"]["params"]["priority"] = rng.choice((1, 2))
    data["assertions"]["params"] = [["req1", "priority", data["initial_state"]["request"]["params"]["priority"]]]
    return scenario_from_data(data), cfg, _memory_priming_store()


FAMILY_GENERATORS = {
    "substitution": _gen_substitution,
    "regime-switch": _gen_regime_switch,
    "environment-shift": _gen_environment_shift,
    "memory-reuse": _gen_memory_reuse,
}


# ---------------------------------------------------------------------------
# Benchmark driver
# ---------------------------------------------------------------------------


def run_benchmark(family: str, subject: str, seeds: Sequence[int]) -> MetricsReport:
    """Run one subject over seeded scenario variations of a family and
    aggregate the structural metrics.  Deterministic per seed; a run that
    errors out counts as a safety failure."""
    if family not in FAMILY_GENERATORS:
        raise IncomparableReports(f"unknown benchmark family {family!r}")
    if not seeds:
        raise IncomparableReports("at least one seed is required")
    generator = FAMILY_GENERATORS[family]

    deployments = identity_ok = violations_runs = 0
    transported_total = 0
    regret_total = 0.0
    degradation = 0.0
    runs_count = 0

    for seed in seeds:
        scenario, cfg_full, store0 = generator(seed)
        cfg = baselines.configure(cfg_full, subject)
        runs_count += 1
        try:
            result = run(scenario, cfg, store0)
            scan = scan_run(scenario, cfg_full, result.traces)
        except GovernanceError:
            violations_runs += 1
            continue
        deployments += scan.deployments
        identity_ok += scan.identity_ok
        if scan.core_violations:
            violations_runs += 1
        transported_total += scan.transported
        regret_total += scan.regret
        degradation = max(degradation, scan.max_switch_structural)

    return MetricsReport(
        family=family,
        subject=subject,
        seeds=tuple(seeds),
        identity_preservation_rate=(identity_ok / deployments) if deployments else 1.0,
        safe_reconfiguration_rate=1.0 - violations_runs / runs_count,
        bounded_degradation=degradation,
        certificate_reuse_gain=transported_total / runs_count,
        structural_regret=regret_total / runs_count,
        deployments=deployments,
        runs=runs_count,
    )


# ---------------------------------------------------------------------------
# Comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Comparison:
    csv_text: str
    verdicts: tuple[tuple[str, str], ...]  # (metric, "better"/"equal"/"worse")

    def render(self) -> str:
        lines = [self.csv_text.rstrip("\n")]
        for metric, verdict in self.verdicts:
            lines.append(f"verdict {metric}: full stack {verdict}")
        return "\n".join(lines) + "\n"


def compare(reports: Sequence[tuple[str, MetricsReport]]) -> Comparison:
    """Side-by-side table of subjects on one family, plus one verdict line
    per metric comparing the full stack against the best baseline."""
    if len(reports) < 2:
        raise IncomparableReports("need at least two reports to compare")
    families = {r.family for _, r in reports}
    seed_sets = {r.seeds for _, r in reports}
    if len(families) != 1 or len(seed_sets) != 1:
        raise IncomparableReports("reports differ in family or seeds; refusing to compare")

    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    metrics = list(METRIC_DIRECTIONS)
    writer.writerow(["subject"] + metrics)
    for subject, report in reports:
        values = report.metric_values()
        writer.writerow([subject] + [f"{values[m]:.6f}" for m in metrics])

    ref_index = next((i for i, (s, _) in enumerate(reports) if s == baselines.FULL), 0)
    reference = reports[ref_index][1]
    others = [r for i, (_, r) in enumerate(reports) if i != ref_index]
    verdicts = []
    for metric, higher_better in METRIC_DIRECTIONS.items():
        ref = reference.metric_values()[metric]
        field = [r.metric_values()[metric] for r in others]
        best = max(field) if higher_better else min(field)
        if abs(ref - best) <= 1e-12:
            verdicts.append((metric, "equal"))
        elif (ref > best) == higher_better:
            verdicts.append((metric, "better"))
        else:
            verdicts.append((metric, "worse"))
    return Comparison(csv_text=out.getvalue(), verdicts=tuple(verdicts))


def report_to_json(report: MetricsReport) -> str:
    return json.dumps(report.to_data(), indent=2, sort_keys=True)


def report_from_json(text: str) -> MetricsReport:
    return MetricsReport.from_data(json.loads(text))
