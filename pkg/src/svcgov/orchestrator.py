"""The decision loop: raw state in, certified deployment out.

Each step executes five auditable stages: semantic lift, candidate
generation, admissibility screening, memory-aware ranking, and certified
deployment.  A step that generates no candidates is a logged no-op; a step
whose candidates all fail screening falls back to the configured
supervision attachment.  Every decision is recorded in a trace complete
enough that an independent scanner can replay and re-check it.

One orchestrator instance is strictly sequential: it owns the drift ledger
and the memory store between steps.  Two instances never share mutable
state.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .canon import canonical_dumps, digest_of
from .certificates import CertContext, Certificate, environment_digest
from .certify import AdmissibilityVerdict, DriftLedger, RegimeSwitchModel, admissible
from .errors import ConfigError, TypingError
from .evaluation import (
    InvariantCore,
    Regime,
    ScoreBreakdown,
    StructuralPrior,
    detect_regime,
    evaluate,
    prior_complexity,
)
from .memory import (
    EMPTY_STORE,
    FailureSignature,
    MemoryRecord,
    MemoryStore,
    motif_from_hypothesis,
    record,
    reuse_score,
)
from .model import (
    Component,
    Hypothesis,
    RawPlatformState,
    SemanticState,
    semantic_lift,
)
from .ontology import AssertionBase, OntologySchema
from .transform import (
    AddSubservice,
    Transformation,
    TransformationGrammar,
    UpdateConstraint,
    apply,
    generate_candidates,
    transformation_to_data,
)


@dataclass(frozen=True)
class GateFlags:
    """Which certifier gates are armed.  Disarmed obligations still compute
    and record evidence; they just stop blocking, which is how the weaker
    baseline stacks are produced without forking any logic."""

    closure: bool = True
    stability: bool = True
    capacity: bool = True
    invariance: bool = True
    substitution: bool = True
    memory: bool = True
    regime_family: bool = True

    def to_data(self) -> dict:
        return {
            "closure": self.closure,
            "stability": self.stability,
            "capacity": self.capacity,
            "invariance": self.invariance,
            "substitution": self.substitution,
            "memory": self.memory,
            "regime_family": self.regime_family,
        }

    @classmethod
    def from_data(cls, data: Mapping) -> "GateFlags":
        return cls(**{k: bool(v) for k, v in data.items()})


@dataclass(frozen=True)
class OrchestratorConfig:
    schema: OntologySchema
    assertions: AssertionBase
    grammar: TransformationGrammar
    regimes: tuple[Regime, ...]
    core: InvariantCore
    prior: StructuralPrior
    capacity_budget: float
    switch_model: RegimeSwitchModel
    drift_bound: float
    reuse_bonus: float = 1.0
    reuse_penalty: float = 2.0
    transport_max_distance: int = 0
    interface_charge: float = 0.0
    fallback: AddSubservice | None = None
    flags: GateFlags = GateFlags()

    def __post_init__(self) -> None:
        defaults = [r for r in self.regimes if r.is_default()]
        if len(defaults) != 1:
            raise ConfigError(f"exactly one default regime required, found {len(defaults)}")
        if self.regimes[-1] is not defaults[0]:
            raise ConfigError("the default regime must be declared last")
        if self.capacity_budget <= 0:
            raise ConfigError("capacity budget must be positive")
        if self.drift_bound < 0:
            raise ConfigError("global drift bound must be nonnegative")
        if self.fallback is None:
            raise ConfigError("a supervision fallback subservice must be configured")
        if not self.grammar.rule("add_subservice").enabled:
            raise ConfigError("the add_subservice variant must be enabled for the fallback")
        if not self.grammar.allows(self.fallback):
            raise ConfigError("the fallback attachment must be declared in the grammar")
        if not self.fallback.part.roles:
            raise ConfigError("the fallback subservice must contribute at least one role")

    def default_regime(self) -> Regime:
        return self.regimes[-1]

    def regime_family(self) -> tuple[Regime, ...]:
        if self.flags.regime_family:
            return self.regimes
        return (self.default_regime(),)

    def ablated(self, flags: GateFlags) -> "OrchestratorConfig":
        return replace(self, flags=flags)


def fallback(h: Hypothesis, z: SemanticState, cfg: OrchestratorConfig) -> Transformation:
    """The configured supervision attachment; applying it twice is a no-op
    because the attach is idempotent."""
    if cfg.fallback is None:
        raise ConfigError("no fallback subservice configured")
    return cfg.fallback


def registry_from_state(
    x: RawPlatformState, k: AssertionBase, schema: OntologySchema
) -> tuple[Component, ...]:
    """Available components: platform components in ok health, with their
    provided functions read from the assertion base."""
    provides: dict[str, set] = {}
    for _, subject, obj in k.facts_named("providesFunction"):
        concept = k.individuals.get(obj)
        if concept is not None and schema.declares(concept):
            provides.setdefault(subject, set()).add(concept)
    out = []
    for comp in x.components:
        if comp.health != "ok":
            continue
        out.append(
            Component(comp.component_id, comp.concept, frozenset(provides.get(comp.component_id, set())))
        )
    return tuple(sorted(out, key=lambda c: c.component_id))


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CandidateTrace:
    transformation: Transformation
    verdict: AdmissibilityVerdict
    breakdown: ScoreBreakdown
    reuse: float
    complexity: float

    def to_data(self) -> dict:
        return {
            "transformation": transformation_to_data(self.transformation),
            "verdict": self.verdict.to_data(),
            "score": self.breakdown.to_data(),
            "reuse": self.reuse,
            "complexity": self.complexity,
        }


@dataclass(frozen=True)
class DecisionTrace:
    tick: int
    state_digest: str
    regime_label: str
    from_regime: str
    regime_rewrites: tuple[tuple[str, float], ...]
    candidates: tuple[CandidateTrace, ...]
    kind: str  # selected | fallback | noop | error
    selected_index: int | None
    selected: Transformation | None
    deployed_digest: str
    certificates: tuple[Certificate, ...]
    ledger_total: float
    ledger_entries: int
    transported_used: int
    error: str = ""

    def to_data(self) -> dict:
        return {
            "tick": self.tick,
            "state": self.state_digest,
            "regime": self.regime_label,
            "from_regime": self.from_regime,
            "regime_rewrites": [[n, b] for n, b in self.regime_rewrites],
            "candidates": [c.to_data() for c in self.candidates],
            "kind": self.kind,
            "selected_index": self.selected_index,
            "selected": transformation_to_data(self.selected) if self.selected else None,
            "deployed": self.deployed_digest,
            "certificates": [c.to_data() for c in self.certificates],
            "ledger_total": self.ledger_total,
            "ledger_entries": self.ledger_entries,
            "transported": self.transported_used,
            "error": self.error,
        }


@dataclass(frozen=True)
class StepResult:
    hypothesis: Hypothesis
    regime: Regime
    store: MemoryStore
    trace: DecisionTrace


class Orchestrator:
    """Owns the drift ledger across steps; strictly sequential."""

    def __init__(self, cfg: OrchestratorConfig):
        self.cfg = cfg
        self.ledger = DriftLedger(bound=cfg.drift_bound)

    def step(
        self, x: RawPlatformState, h: Hypothesis, e: Regime, store: MemoryStore
    ) -> StepResult:
        cfg = self.cfg
        tick = x.time
        try:
            z = semantic_lift(x, cfg.schema, cfg.assertions)
        except TypingError as exc:
            trace = DecisionTrace(
                tick=tick,
                state_digest="",
                regime_label=e.label,
                from_regime=e.label,
                regime_rewrites=(),
                candidates=(),
                kind="error",
                selected_index=None,
                selected=None,
                deployed_digest=h.digest(),
                certificates=(),
                ledger_total=self.ledger.total,
                ledger_entries=len(self.ledger.entries),
                transported_used=0,
                error=f"rejected: {exc}",
            )
            return StepResult(h, e, store, trace)

        e2 = detect_regime(cfg.regime_family(), z)

        rewrites: tuple[tuple[str, float], ...] = ()
        if e2.label != e.label:
            rewrites = cfg.switch_model.recipe(e.label, e2.label)
            for name, bound in rewrites:
                h = apply(UpdateConstraint(name, bound, rationale="regime-entry"), h, cfg.schema)

        registry = registry_from_state(x, cfg.assertions, cfg.schema)
        candidates = generate_candidates(h, z, cfg.grammar, registry)

        def screen(tau: Transformation) -> tuple[CandidateTrace, Hypothesis]:
            verdict = admissible(
                tau, h, z, e2, store, cfg, ledger=self.ledger, from_regime=e, tick=tick
            )
            candidate_h = h if verdict.error else apply(tau, h, cfg.schema)
            reuse = (
                reuse_score(
                    store, candidate_h, e2.label, z, cfg.schema, cfg.reuse_bonus, cfg.reuse_penalty
                )
                if cfg.flags.memory
                else 0.0
            )
            charge = 0.0
            a2 = verdict.obligation("A2")
            source = a2.certificate or a2.violation
            if source is not None:
                charge = float(source.evidence_map().get("charge", 0.0))
            breakdown = evaluate(e2, candidate_h, z, reuse, cfg.schema, switching_cost=charge)
            trace = CandidateTrace(
                tau, verdict, breakdown, reuse, prior_complexity(cfg.prior, candidate_h)
            )
            return trace, candidate_h

        screened: list[CandidateTrace] = []
        outcomes: list[Hypothesis] = []
        for tau in candidates:
            trace, candidate_h = screen(tau)
            screened.append(trace)
            outcomes.append(candidate_h)

        survivors = [i for i, c in enumerate(screened) if c.verdict.passed]
        kind = "noop"
        selected_index: int | None = None
        selected: Transformation | None = None
        deployed = h
        regime_out = e2
        certificates: tuple[Certificate, ...] = ()
        error = ""

        if candidates and not survivors:
            trace_fb, candidate_h = screen(fallback(h, z, cfg))
            screened.append(trace_fb)
            outcomes.append(candidate_h)
            if trace_fb.verdict.passed:
                kind = "fallback"
                selected_index = len(screened) - 1
                selected = trace_fb.transformation
                deployed = candidate_h
                self.ledger = trace_fb.verdict.updated_ledger
                certificates = trace_fb.verdict.certificates
            else:
                error = "fallback inadmissible; configuration violates its own guarantee"
        elif survivors:
            ranked = sorted(
                survivors,
                key=lambda i: (-screened[i].breakdown.total, screened[i].complexity, i),
            )
            selected_index = ranked[0]
            choice = screened[selected_index]
            kind = "selected"
            selected = choice.transformation
            deployed = outcomes[selected_index]
            self.ledger = choice.verdict.updated_ledger
            certificates = choice.verdict.certificates

        if selected is not None and cfg.flags.memory:
            context = CertContext(e2.label, environment_digest(z, cfg.schema))
            composite = Certificate(
                kind="composite",
                subject_digest=deployed.digest(),
                context=context,
                evidence=tuple(
                    sorted(
                        {
                            "obligations": {
                                code: result.certified
                                for code, result in screened[selected_index].verdict.obligations
                            },
                            "selected": kind,
                        }.items()
                    )
                ),
                issued_at=tick,
            )
            rec = MemoryRecord(
                regime_label=e2.label,
                hypothesis_digest=deployed.digest(),
                certificate=composite,
                outcome="success",
                failure_signature=None,
                reuse_tag=kind,
            )
            store = record(store, rec, graph=deployed, certificates=certificates)

        trace = DecisionTrace(
            tick=tick,
            state_digest=z.digest(),
            regime_label=e2.label,
            from_regime=e.label,
            regime_rewrites=rewrites,
            candidates=tuple(screened),
            kind=kind,
            selected_index=selected_index,
            selected=selected,
            deployed_digest=deployed.digest(),
            certificates=certificates,
            ledger_total=self.ledger.total,
            ledger_entries=len(self.ledger.entries),
            transported_used=sum(c.verdict.transported for c in screened),
            error=error,
        )
        return StepResult(deployed, regime_out, store, trace)


# ---------------------------------------------------------------------------
# Scenario runner
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunResult:
    traces: tuple[DecisionTrace, ...]
    store: MemoryStore
    final_hypothesis: Hypothesis
    final_regime: Regime

    def document(self, name: str, cfg: OrchestratorConfig) -> str:
        """One canonical text document per run."""
        return canonical_dumps(
            {
                "run": name,
                "flags": cfg.flags.to_data(),
                "traces": [t.to_data() for t in self.traces],
            }
        )

    def summary_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(
            ["tick", "regime", "candidates", "survivors", "kind", "selected", "score", "ledger_total"]
        )
        for t in self.traces:
            survivors = sum(1 for c in t.candidates if c.verdict.passed)
            score = ""
            name = ""
            if t.selected_index is not None:
                score = f"{t.candidates[t.selected_index].breakdown.total:.6f}"
                name = transformation_to_data(t.selected).get("variant", "") if t.selected else ""
            writer.writerow(
                [t.tick, t.regime_label, len(t.candidates), survivors, t.kind, name, score, f"{t.ledger_total:.6f}"]
            )
        return out.getvalue()


def run(scenario, cfg: OrchestratorConfig, initial_store: MemoryStore | None = None) -> RunResult:
    """Deterministically step through a scripted scenario, injecting timed
    events into the raw state before each step."""
    orch = Orchestrator(cfg)
    store = initial_store if initial_store is not None else EMPTY_STORE
    raw = scenario.initial_state
    h = scenario.initial_hypothesis
    e = cfg.default_regime()
    traces: list[DecisionTrace] = []

    for tick in range(scenario.ticks):
        raw, failures = scenario.patched(raw, tick)
        x = replace(raw, time=tick)
        if failures and cfg.flags.memory:
            store = _record_failures(store, failures, h, x, e, cfg)
        result = orch.step(x, h, e, store)
        h, e, store = result.hypothesis, result.regime, result.store
        traces.append(result.trace)
    return RunResult(tuple(traces), store, h, e)


def _record_failures(
    store: MemoryStore,
    failures: Sequence[tuple[str, str]],
    h: Hypothesis,
    x: RawPlatformState,
    e: Regime,
    cfg: OrchestratorConfig,
) -> MemoryStore:
    """Turn scripted runtime failures into failure records implicating the
    roles bound to the failing component."""
    try:
        z = semantic_lift(x, cfg.schema, cfg.assertions)
    except TypingError:
        return store
    for component_id, code in failures:
        sites = [rid for rid, comp in h.assignment if comp.component_id == component_id]
        if not sites:
            continue
        signature = FailureSignature(
            regime_label=e.label,
            environment_digest=environment_digest(z, cfg.schema),
            motif=motif_from_hypothesis(h, sites),
            obligation_code=code,
        )
        rec = MemoryRecord(
            regime_label=e.label,
            hypothesis_digest=h.digest(),
            certificate=None,
            outcome="failed",
            failure_signature=signature,
            reuse_tag="runtime",
        )
        store = record(store, rec, graph=h)
    return store


def replay_deployments(
    scenario, cfg: OrchestratorConfig, traces: Sequence[DecisionTrace]
) -> list[tuple[int, Hypothesis, SemanticState, Regime]]:
    """Independently reconstruct the deployed hypothesis and semantic state
    at each tick from the trace's recorded transformations.  Used by the
    metric scanner; raises if a trace cannot be replayed."""
    raw = scenario.initial_state
    h = scenario.initial_hypothesis
    out = []
    regimes = {r.label: r for r in cfg.regimes}
    for trace in traces:
        raw, _ = scenario.patched(raw, trace.tick)
        x = replace(raw, time=trace.tick)
        z = semantic_lift(x, cfg.schema, cfg.assertions)
        for name, bound in trace.regime_rewrites:
            h = apply(UpdateConstraint(name, bound), h, cfg.schema)
        if trace.selected is not None:
            h = apply(trace.selected, h, cfg.schema)
        if h.digest() != trace.deployed_digest:
            raise ConfigError(f"trace at tick {trace.tick} does not replay to its deployed digest")
        out.append((trace.tick, h, z, regimes[trace.regime_label]))
    return out


def digest_traces(traces: Sequence[DecisionTrace]) -> str:
    return digest_of([t.to_data() for t in traces])
