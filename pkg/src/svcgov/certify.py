"""The four obligation certifiers, the five-condition substitution check,
the drift ledger, and the capacity measure.

A transformation is admissible when, for the transformed hypothesis:

* A1 (closure): the graph stays type-sound and the transformation lies
  inside the grammar;
* A2 (stability): the charged drift fits the cumulative bound and the
  destination regime's switching budget;
* A3 (capacity): structural complexity stays within budget;
* A4 (invariance): the invariant core holds and identity is preserved at
  or above the certified threshold.

Substitutions additionally pass five conditions (S1 function class or
certified refinement, S2 dependent roles satisfiable, S3 core certified,
S4 transition cost within the regime budget, S5 no contradicting failure
memory).  All bound comparisons are inclusive.  The aggregate verdict
always reports every obligation; nothing short-circuits silently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

from .certificates import CertContext, Certificate, Violation, environment_digest
from .errors import ConfigError, UnknownSite
from .evaluation import (
    InvariantCore,
    Regime,
    StructuralPrior,
    core_value,
    identity_breakdown,
    prior_complexity,
)
from .memory import EMPTY_STORE, MemoryStore, find_transportable, match_failure
from .model import Component, Hypothesis, SemanticState, type_soundness
from .ontology import OntologySchema, is_refinement
from .transform import (
    MalformedTransformation,
    Rebind,
    Substitute,
    Transformation,
    TransformationGrammar,
    apply,
    variant_name,
)

if TYPE_CHECKING:  # pragma: no cover
    from .orchestrator import OrchestratorConfig

#: Tolerance for all inclusive bound comparisons.
BOUND_EPS = 1e-9


# ---------------------------------------------------------------------------
# Drift ledger and regime-switch model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LedgerEntry:
    from_regime: str
    to_regime: str
    cost: float
    residual: float

    def to_data(self) -> dict:
        return {"from": self.from_regime, "to": self.to_regime, "cost": self.cost, "residual": self.residual}

    @classmethod
    def from_data(cls, data: Mapping) -> "LedgerEntry":
        return cls(str(data["from"]), str(data["to"]), float(data["cost"]), float(data["residual"]))


@dataclass(frozen=True)
class DriftLedger:
    """Bookkeeping bound on cumulative drift; updated only by certificate
    issue, by replacement (the ledger itself is immutable)."""

    bound: float
    entries: tuple[LedgerEntry, ...] = ()

    @property
    def total(self) -> float:
        return sum(e.cost + e.residual for e in self.entries)

    @property
    def valid(self) -> bool:
        return self.total <= self.bound + BOUND_EPS

    def charged(self, entry: LedgerEntry) -> "DriftLedger":
        return DriftLedger(bound=self.bound, entries=self.entries + (entry,))

    def to_data(self) -> dict:
        return {"bound": self.bound, "total": self.total, "entries": [e.to_data() for e in self.entries]}


@dataclass(frozen=True)
class RegimeSwitchModel:
    """Declared switch costs C(e, e'), adaptation residuals, constraint
    rewrite recipes applied on regime entry, and the unit cost of one role
    reassignment used by the structural charge."""

    costs: tuple[tuple[str, str, float], ...] = ()
    residuals: tuple[tuple[str, str, float], ...] = ()
    recipes: tuple[tuple[str, str, tuple[tuple[str, float], ...]], ...] = ()
    reassignment_unit_cost: float = 1.0

    def __post_init__(self) -> None:
        for a, b, c in self.costs:
            if c < 0:
                raise ConfigError(f"switch cost C({a}, {b}) must be nonnegative")
            if a == b and c != 0:
                raise ConfigError(f"C({a}, {a}) must be zero")
        for a, b, r in self.residuals:
            if r < 0:
                raise ConfigError(f"residual bound for {a}->{b} must be nonnegative")
        if self.reassignment_unit_cost < 0:
            raise ConfigError("reassignment unit cost must be nonnegative")

    def cost(self, from_label: str, to_label: str) -> float:
        if from_label == to_label:
            return 0.0
        for a, b, c in self.costs:
            if (a, b) == (from_label, to_label):
                return c
        return 0.0

    def residual(self, from_label: str, to_label: str) -> float:
        if from_label == to_label:
            return 0.0
        for a, b, r in self.residuals:
            if (a, b) == (from_label, to_label):
                return r
        return 0.0

    def recipe(self, from_label: str, to_label: str) -> tuple[tuple[str, float], ...]:
        for a, b, rewrites in self.recipes:
            if (a, b) == (from_label, to_label):
                return rewrites
        return ()

    def to_data(self) -> dict:
        return {
            "costs": [[a, b, c] for a, b, c in self.costs],
            "residuals": [[a, b, r] for a, b, r in self.residuals],
            "recipes": [[a, b, [[n, v] for n, v in rw]] for a, b, rw in self.recipes],
            "reassignment_unit_cost": self.reassignment_unit_cost,
        }

    @classmethod
    def from_data(cls, data: Mapping) -> "RegimeSwitchModel":
        return cls(
            costs=tuple((str(a), str(b), float(c)) for a, b, c in data.get("costs", [])),
            residuals=tuple((str(a), str(b), float(r)) for a, b, r in data.get("residuals", [])),
            recipes=tuple(
                (str(a), str(b), tuple((str(n), float(v)) for n, v in rw))
                for a, b, rw in data.get("recipes", [])
            ),
            reassignment_unit_cost=float(data.get("reassignment_unit_cost", 1.0)),
        )


def structural_charge(h: Hypothesis, h2: Hypothesis, model: RegimeSwitchModel) -> float:
    """Constraint-vector distance plus reassignment count times the unit
    cost.  A constraint present on one side only contributes its own
    magnitude; added or removed roles count one reassignment each."""
    before = h.constraint_map()
    after = h2.constraint_map()
    distance = 0.0
    for name in sorted(set(before) | set(after)):
        if name in before and name in after:
            distance += abs(before[name] - after[name])
        else:
            distance += abs(before.get(name, after.get(name, 0.0)))
    before_roles = set(h.role_ids())
    after_roles = set(h2.role_ids())
    reassigned = len(before_roles ^ after_roles)
    before_assignment = h.assignment_map()
    after_assignment = h2.assignment_map()
    for rid in before_roles & after_roles:
        if before_assignment.get(rid) != after_assignment.get(rid):
            reassigned += 1
    return distance + reassigned * model.reassignment_unit_cost


# ---------------------------------------------------------------------------
# Obligation certifiers
# ---------------------------------------------------------------------------


def certify_closure(
    h2: Hypothesis,
    schema: OntologySchema,
    grammar: TransformationGrammar,
    tau: Transformation,
    context: CertContext,
    tick: int = 0,
) -> Certificate | Violation:
    """A1: the transformed graph is type-sound and the transformation lies
    inside the grammar."""
    report = type_soundness(h2, schema)
    in_grammar = grammar.allows(tau)
    evidence: dict[str, object] = {
        "sound": report.sound,
        "in_grammar": in_grammar,
        "variant": variant_name(tau),
    }
    if report.sound and in_grammar:
        return Certificate("closure", h2.digest(), context, tuple(sorted(evidence.items())), tick)
    evidence["violations"] = report.messages()
    if not report.sound:
        message = f"transformed graph is not type-sound: {report.messages()[0]}"
    else:
        message = f"{variant_name(tau)} transformation lies outside the grammar"
    return Violation("A1", message, tuple(sorted(evidence.items())))


def certify_stability(
    h: Hypothesis,
    h2: Hypothesis,
    ledger: DriftLedger,
    model: RegimeSwitchModel,
    e: Regime,
    e2: Regime,
    context: CertContext,
    tick: int = 0,
) -> tuple[Certificate | Violation, DriftLedger]:
    """A2: the charge (structural drift plus declared switch cost and
    residual when regimes differ) fits both the cumulative bound and the
    destination regime's switching budget.  The ledger is updated only on
    certificate issue."""
    structural = structural_charge(h, h2, model)
    switch_cost = model.cost(e.label, e2.label)
    residual = model.residual(e.label, e2.label)
    cost = structural + switch_cost
    charge = cost + residual
    budget = e2.budgets.switching_cost
    evidence: dict[str, object] = {
        "structural": structural,
        "switch_cost": switch_cost,
        "residual": residual,
        "charge": charge,
        "ledger_before": ledger.total,
        "ledger_bound": ledger.bound,
        "switching_budget": budget,
        "from_regime": e.label,
        "to_regime": e2.label,
    }
    within_bound = ledger.total + charge <= ledger.bound + BOUND_EPS
    within_budget = charge <= budget + BOUND_EPS
    if within_bound and within_budget:
        cert = Certificate("stability", h2.digest(), context, tuple(sorted(evidence.items())), tick)
        return cert, ledger.charged(LedgerEntry(e.label, e2.label, cost, residual))
    if not within_bound:
        message = f"cumulative drift {ledger.total + charge:.6g} exceeds bound {ledger.bound:.6g}"
    else:
        message = f"charge {charge:.6g} exceeds switching budget {budget:.6g}"
    return Violation("A2", message, tuple(sorted(evidence.items()))), ledger


def certify_capacity(
    h2: Hypothesis,
    prior: StructuralPrior,
    budget: float,
    context: CertContext,
    tick: int = 0,
) -> Certificate | Violation:
    """A3: structural complexity within the (inclusive) budget."""
    if budget <= 0:
        raise ConfigError("capacity budget must be positive")
    complexity = prior_complexity(prior, h2)
    evidence: dict[str, object] = {"complexity": complexity, "budget": budget}
    if complexity <= budget + BOUND_EPS:
        return Certificate("capacity", h2.digest(), context, tuple(sorted(evidence.items())), tick)
    return Violation(
        "A3", f"complexity {complexity:.6g} exceeds budget {budget:.6g}", tuple(sorted(evidence.items()))
    )


def certify_invariance(
    before: Hypothesis,
    after: Hypothesis,
    z: SemanticState,
    core: InvariantCore,
    schema: OntologySchema,
    context: CertContext,
    tick: int = 0,
) -> Certificate | Violation:
    """A4: the invariant core holds on the transformed hypothesis, and
    identity is preserved at or above the threshold whenever identity is
    part of the core."""
    report = core_value(core, after, z, schema)
    breakdown = identity_breakdown(core.identity, before, after, z, schema)
    identity_ok = (not core.include_identity) or breakdown.total >= core.identity.threshold - BOUND_EPS
    evidence: dict[str, object] = {
        "core_value": report.value,
        "core_passed": report.passed,
        "predicates": {name: ok for name, ok in report.predicate_results},
        "identity_score": breakdown.total,
        "identity_subscores": breakdown.to_data(),
        "identity_threshold": core.identity.threshold,
        "identity_gated": core.include_identity,
        "absolute_identity": report.identity_value,
    }
    if report.passed and identity_ok:
        return Certificate("invariance", after.digest(), context, tuple(sorted(evidence.items())), tick)
    failed = [name for name, ok in report.predicate_results if not ok]
    if failed:
        message = f"hard safety predicates failed: {', '.join(failed)}"
    else:
        message = (
            f"identity {breakdown.total:.6g} below threshold {core.identity.threshold:.6g}"
        )
    return Violation("A4", message, tuple(sorted(evidence.items())))


def certify_substitution(
    c1: Component,
    c2: Component,
    h: Hypothesis,
    z: SemanticState,
    store: MemoryStore,
    schema: OntologySchema,
    core: InvariantCore,
    model: RegimeSwitchModel,
    regime: Regime,
    context: CertContext,
    tick: int = 0,
) -> Certificate | Violation:
    """The five-condition typed substitution check for c1 -> c2 at every
    role currently bound to c1.  Evidence lists each condition's result."""
    sites = [rid for rid, comp in h.assignment if comp.component_id == c1.component_id]
    if not sites:
        raise UnknownSite(f"component {c1.component_id} is not assigned in the hypothesis")
    h2 = h
    for rid in sites:
        h2 = apply(Substitute(rid, c1.component_id, c2), h2)

    conditions: list[tuple[str, str, bool, str]] = []

    s1_ok = True
    for rid in sites:
        role = h.role(rid)
        assert role is not None
        for needed in sorted(role.requires):
            if not schema.declares(needed) or not any(
                schema.declares(p) and is_refinement(schema, p, needed) for p in c2.provides
            ):
                s1_ok = False
    conditions.append(
        ("S1", "function-class", s1_ok, "replacement provides the required function class or a certified refinement")
    )

    touched = set(sites)
    report2 = type_soundness(h2, schema)
    s2_ok = report2.sound
    if s2_ok:
        entities = h2.entity_vocabulary()
        events = h2.event_vocabulary()
        honored = h2.propagated_obligations()
        for edge in h2.edges:
            if edge.from_role not in touched and edge.to_role not in touched:
                continue
            if not all(
                any(schema.declares(c) and is_refinement(schema, c, t) for c in entities)
                for t in edge.contract.entity_types
                if schema.declares(t)
            ):
                s2_ok = False
            if not all(
                any(schema.declares(c) and is_refinement(schema, c, t) for c in events)
                for t in edge.contract.event_types
                if schema.declares(t)
            ):
                s2_ok = False
            if not edge.contract.obligations <= honored:
                s2_ok = False
    conditions.append(("S2", "dependent-roles", s2_ok, "all dependent service roles remain satisfiable"))

    core_report = core_value(core, h2, z, schema)
    ident = identity_breakdown(core.identity, h, h2, z, schema).total
    s3_ok = core_report.passed and (
        (not core.include_identity) or ident >= core.identity.threshold - BOUND_EPS
    )
    conditions.append(("S3", "core-certified", s3_ok, "all invariant-core constraints remain certified"))

    charge = structural_charge(h, h2, model)
    s4_ok = charge <= regime.budgets.switching_cost + BOUND_EPS
    conditions.append(("S4", "transition-budget", s4_ok, "transition cost stays within the regime budget"))

    contradictions = match_failure(store, h2, z, schema)
    s5_ok = not contradictions
    conditions.append(("S5", "memory-consistent", s5_ok, "no stored failure signature contradicts reuse here"))

    evidence: dict[str, object] = {
        "old_component": c1.component_id,
        "new_component": c2.component_id,
        "sites": sorted(sites),
        "conditions": {code: ok for code, _, ok, _ in conditions},
        "transition_charge": charge,
        "identity_score": ident,
        "matched_failures": len(contradictions),
    }
    if all(ok for _, _, ok, _ in conditions):
        return Certificate("substitution", h2.digest(), context, tuple(sorted(evidence.items())), tick)
    first = next((code, name) for code, name, ok, _ in conditions if not ok)
    return Violation(first[0], f"substitution condition {first[0]} ({first[1]}) failed", tuple(sorted(evidence.items())))


# ---------------------------------------------------------------------------
# Aggregate admissibility
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ObligationResult:
    code: str
    certified: bool
    gated: bool
    certificate: Certificate | None = None
    violation: Violation | None = None

    @property
    def passed(self) -> bool:
        """Effective result after gating: ungated obligations report their
        evidence but do not block."""
        return self.certified or not self.gated

    def to_data(self) -> dict:
        return {
            "code": self.code,
            "certified": self.certified,
            "gated": self.gated,
            "passed": self.passed,
            "certificate": self.certificate.to_data() if self.certificate else None,
            "violation": self.violation.to_data() if self.violation else None,
        }


def _as_result(code: str, outcome: Certificate | Violation, gated: bool) -> ObligationResult:
    if isinstance(outcome, Certificate):
        return ObligationResult(code, certified=True, gated=gated, certificate=outcome)
    return ObligationResult(code, certified=False, gated=gated, violation=outcome)


@dataclass(frozen=True)
class AdmissibilityVerdict:
    """Aggregated result of the four obligation certifiers plus the
    substitution certifier and the identity check; every obligation is
    reported whether or not it gates."""

    passed: bool
    obligations: tuple[tuple[str, ObligationResult], ...]
    substitution: ObligationResult | None
    identity_score: float
    identity_passed: bool
    certificates: tuple[Certificate, ...]
    updated_ledger: DriftLedger
    transported: int
    before_digest: str
    after_digest: str
    error: str = ""

    def obligation(self, code: str) -> ObligationResult:
        for key, result in self.obligations:
            if key == code:
                return result
        raise KeyError(code)

    def violation_codes(self) -> tuple[str, ...]:
        codes = [code for code, result in self.obligations if not result.certified]
        if self.substitution is not None and not self.substitution.certified:
            codes.append(self.substitution.code)
        return tuple(codes)

    def to_data(self) -> dict:
        return {
            "passed": self.passed,
            "obligations": {code: r.to_data() for code, r in self.obligations},
            "substitution": self.substitution.to_data() if self.substitution else None,
            "identity_score": self.identity_score,
            "identity_passed": self.identity_passed,
            "transported": self.transported,
            "before": self.before_digest,
            "after": self.after_digest,
            "error": self.error,
        }


def admissible(
    tau: Transformation,
    h: Hypothesis,
    z: SemanticState,
    e: Regime,
    store: MemoryStore,
    cfg: "OrchestratorConfig",
    ledger: DriftLedger | None = None,
    from_regime: Regime | None = None,
    tick: int = 0,
) -> AdmissibilityVerdict:
    """Run all four certifiers (plus the substitution certifier for
    substitution-class transformations) and aggregate.

    ``e`` is the destination regime; ``from_regime`` defaults to it when
    no switch is in flight.  The returned ledger reflects the stability
    charge and is adopted by the caller only if the candidate deploys."""
    flags = cfg.flags
    if ledger is None:
        ledger = DriftLedger(bound=cfg.drift_bound)
    if from_regime is None:
        from_regime = e
    context = CertContext(e.label, environment_digest(z, cfg.schema))
    effective_store = store if flags.memory else EMPTY_STORE

    try:
        h2 = apply(tau, h, cfg.schema)
    except (UnknownSite, MalformedTransformation) as exc:
        violation = Violation("A1", f"transformation not applicable: {exc}")
        results = tuple(
            (code, ObligationResult(code, certified=False, gated=True, violation=violation))
            for code in ("A1", "A2", "A3", "A4")
        )
        return AdmissibilityVerdict(
            passed=False,
            obligations=results,
            substitution=None,
            identity_score=0.0,
            identity_passed=False,
            certificates=(),
            updated_ledger=ledger,
            transported=0,
            before_digest=h.digest(),
            after_digest="",
            error=str(exc),
        )

    transported = 0

    closure_outcome: Certificate | Violation | None = None
    if flags.memory and cfg.transport_max_distance >= 0:
        moved = find_transportable(
            effective_store, "closure", h2, z, cfg.transport_max_distance, cfg.schema, e.label
        )
        if moved is not None:
            closure_outcome = moved
            transported += 1
    if closure_outcome is None:
        closure_outcome = certify_closure(h2, cfg.schema, cfg.grammar, tau, context, tick)
    a1 = _as_result("A1", closure_outcome, gated=flags.closure)

    stability_outcome, new_ledger = certify_stability(
        h, h2, ledger, cfg.switch_model, from_regime, e, context, tick
    )
    a2 = _as_result("A2", stability_outcome, gated=flags.stability)

    capacity_budget = min(cfg.capacity_budget, e.budgets.complexity)
    capacity_outcome: Certificate | Violation | None = None
    if flags.memory and cfg.transport_max_distance >= 0:
        moved = find_transportable(
            effective_store, "capacity", h2, z, cfg.transport_max_distance, cfg.schema, e.label
        )
        if moved is not None:
            capacity_outcome = moved
            transported += 1
    if capacity_outcome is None:
        capacity_outcome = certify_capacity(h2, cfg.prior, capacity_budget, context, tick)
    a3 = _as_result("A3", capacity_outcome, gated=flags.capacity)

    invariance_outcome = certify_invariance(h, h2, z, cfg.core, cfg.schema, context, tick)
    a4 = _as_result("A4", invariance_outcome, gated=flags.invariance)

    substitution_result: ObligationResult | None = None
    if isinstance(tau, (Substitute, Rebind)):
        current = h.binding(tau.role_id)
        if current is not None:
            outcome = certify_substitution(
                current,
                tau.new_component,
                h,
                z,
                effective_store,
                cfg.schema,
                cfg.core,
                cfg.switch_model,
                e,
                context,
                tick,
            )
            code = outcome.code if isinstance(outcome, Violation) else "S"
            substitution_result = _as_result(code, outcome, gated=flags.substitution)

    obligations = (("A1", a1), ("A2", a2), ("A3", a3), ("A4", a4))
    passed = all(result.passed for _, result in obligations)
    if substitution_result is not None:
        passed = passed and substitution_result.passed

    inv_evidence = invariance_outcome.evidence_map()
    identity_score = float(inv_evidence.get("identity_score", 0.0))
    identity_passed = identity_score >= cfg.core.identity.threshold - BOUND_EPS

    certificates = tuple(
        result.certificate
        for result in (a1, a2, a3, a4, substitution_result)
        if result is not None and result.certificate is not None
    )
    return AdmissibilityVerdict(
        passed=passed,
        obligations=obligations,
        substitution=substitution_result,
        identity_score=identity_score,
        identity_passed=identity_passed,
        certificates=certificates,
        updated_ledger=new_ledger if passed else ledger,
        transported=transported,
        before_digest=h.digest(),
        after_digest=h2.digest(),
    )


# ---------------------------------------------------------------------------
# Capacity measure and composed bounds
# ---------------------------------------------------------------------------


def capacity_measure(space: Iterable[Hypothesis]) -> int:
    """Cardinality of a finite hypothesis space (distinct digests); the
    reference complexity measure, monotone under set inclusion by
    construction."""
    return len({h.digest() for h in space})


def composed_drift_bound(local_bounds: Sequence[float], interface_term: float) -> float:
    """Global stability allowance for a composed update: the sum of local
    bounds plus one interface term per subservice boundary."""
    return float(sum(local_bounds)) + max(0, len(local_bounds) - 1) * interface_term
