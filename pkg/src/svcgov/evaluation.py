"""Regime-indexed evaluators, the identity functional, the invariant core,
and the structural prior.

An evaluator is a weighted sum of five scores: task (deadline slack against
the policy's latency annotations), safety (raised platform flags fail soft
checks), semantic (type soundness, graded for near misses), cost (switching
charge against the regime budget plus a small size term), and reuse (the
memory term, supplied externally and clamped to [-1, 1]).

The invariant core pairs the identity functional with named hard safety
predicates.  Identity aggregates four preservation sub-scores: request
class, mandatory outputs, hard safety constraints, essential interaction
obligations.  Comparing a hypothesis against itself always scores 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .errors import ConfigError
from .model import (
    Hypothesis,
    SemanticState,
    SignalCondition,
    conditions_hold,
    type_soundness,
)
from .ontology import ConceptId, OntologySchema, is_refinement

SAFETY_CONSTRAINT_PREFIX = "safety."


def _clamp(value: float, low: float = 0.0, high: float = 1.0) -> float:
    return max(low, min(high, value))


# ---------------------------------------------------------------------------
# Regimes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvaluatorWeights:
    task: float
    safety: float
    semantic: float
    cost: float
    reuse: float

    def __post_init__(self) -> None:
        values = (self.task, self.safety, self.semantic, self.cost, self.reuse)
        if any(w < 0 for w in values):
            raise ConfigError("evaluator weights must be nonnegative")
        if not any(values):
            raise ConfigError("evaluator weights must not all be zero")

    def to_data(self) -> dict:
        return {
            "task": self.task,
            "safety": self.safety,
            "semantic": self.semantic,
            "cost": self.cost,
            "reuse": self.reuse,
        }

    @classmethod
    def from_data(cls, data: Mapping) -> "EvaluatorWeights":
        return cls(*(float(data[k]) for k in ("task", "safety", "semantic", "cost", "reuse")))


@dataclass(frozen=True)
class RegimeBudgets:
    latency: float
    switching_cost: float
    complexity: float

    def __post_init__(self) -> None:
        if min(self.latency, self.switching_cost, self.complexity) <= 0:
            raise ConfigError("regime budgets must be positive")

    def to_data(self) -> dict:
        return {"latency": self.latency, "switching_cost": self.switching_cost, "complexity": self.complexity}

    @classmethod
    def from_data(cls, data: Mapping) -> "RegimeBudgets":
        return cls(float(data["latency"]), float(data["switching_cost"]), float(data["complexity"]))


@dataclass(frozen=True)
class Regime:
    """A deployment condition class.  ``entry`` is a DNF over regime
    signals; an empty DNF marks the default regime, which always matches."""

    label: str
    weights: EvaluatorWeights
    budgets: RegimeBudgets
    entry: tuple[tuple[SignalCondition, ...], ...] = ()

    def matches(self, signals: Mapping[str, float]) -> bool:
        if not self.entry:
            return True
        return any(conditions_hold(clause, signals) for clause in self.entry)

    def is_default(self) -> bool:
        return not self.entry

    def to_data(self) -> dict:
        return {
            "label": self.label,
            "weights": self.weights.to_data(),
            "budgets": self.budgets.to_data(),
            "entry": [[c.to_data() for c in clause] for clause in self.entry],
        }

    @classmethod
    def from_data(cls, data: Mapping) -> "Regime":
        return cls(
            label=str(data["label"]),
            weights=EvaluatorWeights.from_data(data["weights"]),
            budgets=RegimeBudgets.from_data(data["budgets"]),
            entry=tuple(
                tuple(SignalCondition.from_data(c) for c in clause) for clause in data.get("entry", [])
            ),
        )


def detect_regime(family: Sequence[Regime], z: SemanticState) -> Regime:
    """First regime whose entry predicate holds; ties break by declaration
    order.  Raises ConfigError when nothing matches and no default exists."""
    if not family:
        raise ConfigError("regime family is empty")
    signals = z.signals()
    for regime in family:
        if regime.matches(signals):
            return regime
    raise ConfigError("no regime matched and no default regime is declared")


# ---------------------------------------------------------------------------
# Identity functional
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IdentitySpec:
    """Weights of the four preservation sub-scores plus the certified
    threshold eta.  Threshold comparisons are inclusive."""

    request_class_weight: float
    outputs_weight: float
    safety_weight: float
    interactions_weight: float
    threshold: float

    def __post_init__(self) -> None:
        total = (
            self.request_class_weight
            + self.outputs_weight
            + self.safety_weight
            + self.interactions_weight
        )
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"identity sub-score weights must sum to 1, got {total}")
        if not (0.0 < self.threshold <= 1.0):
            raise ConfigError("identity threshold must lie in (0, 1]")

    def to_data(self) -> dict:
        return {
            "weights": {
                "request_class": self.request_class_weight,
                "outputs": self.outputs_weight,
                "safety": self.safety_weight,
                "interactions": self.interactions_weight,
            },
            "threshold": self.threshold,
        }

    @classmethod
    def from_data(cls, data: Mapping) -> "IdentitySpec":
        w = data["weights"]
        return cls(
            float(w["request_class"]),
            float(w["outputs"]),
            float(w["safety"]),
            float(w["interactions"]),
            float(data["threshold"]),
        )


def _covered(h: Hypothesis, wanted: frozenset[ConceptId], schema: OntologySchema) -> frozenset[ConceptId]:
    """Subset of ``wanted`` functions realized by some assigned component
    (up to refinement)."""
    provided: set[ConceptId] = set()
    for _, comp in h.assignment:
        provided |= comp.provides
    out = set()
    for f in wanted:
        if not schema.declares(f):
            continue
        if any(schema.declares(p) and is_refinement(schema, p, f) for p in provided):
            out.add(f)
    return frozenset(out)


def _preserved_fraction(before: frozenset, after: frozenset) -> float:
    if not before:
        return 1.0
    return len(before & after) / len(before)


def _safety_constraints(h: Hypothesis) -> dict[str, float]:
    return {n: b for n, b in h.constraints if n.startswith(SAFETY_CONSTRAINT_PREFIX)}


@dataclass(frozen=True)
class IdentityBreakdown:
    request_class: float
    outputs: float
    safety: float
    interactions: float
    total: float

    def to_data(self) -> dict:
        return {
            "request_class": self.request_class,
            "outputs": self.outputs,
            "safety": self.safety,
            "interactions": self.interactions,
            "total": self.total,
        }


def identity_breakdown(
    spec: IdentitySpec,
    before: Hypothesis,
    after: Hypothesis,
    z: SemanticState,
    schema: OntologySchema,
) -> IdentityBreakdown:
    s_request = _preserved_fraction(
        _covered(before, z.required_functions, schema), _covered(after, z.required_functions, schema)
    )
    s_outputs = _preserved_fraction(
        _covered(before, z.output_functions, schema), _covered(after, z.output_functions, schema)
    )
    before_safety = _safety_constraints(before)
    after_safety = _safety_constraints(after)
    if before_safety:
        kept = sum(
            1
            for name, bound in before_safety.items()
            if name in after_safety and after_safety[name] <= bound
        )
        s_safety = kept / len(before_safety)
    else:
        s_safety = 1.0
    s_interactions = _preserved_fraction(before.propagated_obligations(), after.propagated_obligations())
    total = (
        spec.request_class_weight * s_request
        + spec.outputs_weight * s_outputs
        + spec.safety_weight * s_safety
        + spec.interactions_weight * s_interactions
    )
    return IdentityBreakdown(s_request, s_outputs, s_safety, s_interactions, total)


def identity_score(
    spec: IdentitySpec,
    before: Hypothesis,
    after: Hypothesis,
    z: SemanticState,
    schema: OntologySchema,
) -> float:
    """Weighted mean of the four preservation sub-scores of ``after``
    against ``before`` under ``z``; always 1.0 when after equals before."""
    return identity_breakdown(spec, before, after, z, schema).total


def absolute_identity(
    spec: IdentitySpec, h: Hypothesis, z: SemanticState, schema: OntologySchema
) -> float:
    """Identity of a single hypothesis against the commitments recorded in
    the semantic state: coverage of required and output functions, honored
    pending obligations.  The hard-safety sub-score has no absolute
    reading (it is carried by the core's predicates) and counts full."""
    required = _covered(h, z.required_functions, schema)
    outputs = _covered(h, z.output_functions, schema)
    pending = frozenset(z.interaction_state.pending_obligations)
    honored = pending & h.propagated_obligations()
    s_request = len(required) / len(z.required_functions) if z.required_functions else 1.0
    s_outputs = len(outputs) / len(z.output_functions) if z.output_functions else 1.0
    s_interactions = len(honored) / len(pending) if pending else 1.0
    return (
        spec.request_class_weight * s_request
        + spec.outputs_weight * s_outputs
        + spec.safety_weight * 1.0
        + spec.interactions_weight * s_interactions
    )


# ---------------------------------------------------------------------------
# Hard safety predicates and the invariant core
# ---------------------------------------------------------------------------

PredicateFn = Callable[[Hypothesis, SemanticState, OntologySchema], bool]


def _pred_obligations_honored(params: Mapping) -> PredicateFn:
    def check(h: Hypothesis, z: SemanticState, schema: OntologySchema) -> bool:
        return frozenset(z.interaction_state.pending_obligations) <= h.propagated_obligations()

    return check


def _pred_components_live(params: Mapping) -> PredicateFn:
    def check(h: Hypothesis, z: SemanticState, schema: OntologySchema) -> bool:
        live = z.live_component_ids()
        return all(comp.component_id in live for _, comp in h.assignment)

    return check


def _pred_flag_absent(params: Mapping) -> PredicateFn:
    flag = str(params["flag"])

    def check(h: Hypothesis, z: SemanticState, schema: OntologySchema) -> bool:
        return flag not in z.safety_flags

    return check


def _pred_flag_requires_function(params: Mapping) -> PredicateFn:
    flag = str(params["flag"])
    function = ConceptId.parse(str(params["function"]))

    def check(h: Hypothesis, z: SemanticState, schema: OntologySchema) -> bool:
        if flag not in z.safety_flags:
            return True
        if not schema.declares(function):
            return False
        for _, comp in h.assignment:
            if any(schema.declares(p) and is_refinement(schema, p, function) for p in comp.provides):
                return True
        return False

    return check


PREDICATE_KINDS: dict[str, Callable[[Mapping], PredicateFn]] = {
    "obligations-honored": _pred_obligations_honored,
    "components-live": _pred_components_live,
    "flag-absent": _pred_flag_absent,
    "flag-requires-function": _pred_flag_requires_function,
}


@dataclass(frozen=True)
class SafetyPredicate:
    name: str
    kind: str
    params: tuple[tuple[str, object], ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in PREDICATE_KINDS:
            raise ConfigError(f"unknown safety predicate kind {self.kind!r}")

    def check(self, h: Hypothesis, z: SemanticState, schema: OntologySchema) -> bool:
        return PREDICATE_KINDS[self.kind](dict(self.params))(h, z, schema)

    def to_data(self) -> dict:
        return {"name": self.name, "kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_data(cls, data: Mapping) -> "SafetyPredicate":
        return cls(
            name=str(data.get("name", data["kind"])),
            kind=str(data["kind"]),
            params=tuple(sorted(data.get("params", {}).items())),
        )


@dataclass(frozen=True)
class InvariantCore:
    """The protected commitments: identity spec plus hard safety predicates.

    ``include_identity`` wires the identity functional into the core; when
    off, identity is still reported but no longer gates, which reproduces
    the identity-drift failure mode."""

    identity: IdentitySpec
    predicates: tuple[SafetyPredicate, ...]
    mode: str = "hard-fail"  # hard-fail | thresholded
    include_identity: bool = True
    value_floor: float = 1.0  # only consulted in thresholded mode

    def __post_init__(self) -> None:
        if not self.predicates:
            raise ConfigError("invariant core needs at least one hard safety predicate")
        names = [p.name for p in self.predicates]
        if len(names) != len(set(names)):
            raise ConfigError("safety predicate names must be unique")
        if self.mode not in ("hard-fail", "thresholded"):
            raise ConfigError(f"unknown core threshold mode {self.mode!r}")

    def to_data(self) -> dict:
        return {
            "identity": self.identity.to_data(),
            "predicates": [p.to_data() for p in self.predicates],
            "mode": self.mode,
            "include_identity": self.include_identity,
            "value_floor": self.value_floor,
        }

    @classmethod
    def from_data(cls, data: Mapping) -> "InvariantCore":
        return cls(
            identity=IdentitySpec.from_data(data["identity"]),
            predicates=tuple(SafetyPredicate.from_data(p) for p in data["predicates"]),
            mode=str(data.get("mode", "hard-fail")),
            include_identity=bool(data.get("include_identity", True)),
            value_floor=float(data.get("value_floor", 1.0)),
        )


@dataclass(frozen=True)
class CoreReport:
    value: float
    passed: bool
    identity_value: float
    predicate_results: tuple[tuple[str, bool], ...]

    def to_data(self) -> dict:
        return {
            "value": self.value,
            "passed": self.passed,
            "identity": self.identity_value,
            "predicates": {n: ok for n, ok in self.predicate_results},
        }


def core_value(core: InvariantCore, h: Hypothesis, z: SemanticState, schema: OntologySchema) -> CoreReport:
    """Evaluate the invariant core on a single hypothesis.

    value = identity term + hard-safety term (1 when every predicate holds,
    else 0).  In hard-fail mode the report fails on any predicate failure,
    and on identity below threshold when identity is part of the core; the
    threshold comparison is inclusive."""
    results = tuple((p.name, p.check(h, z, schema)) for p in core.predicates)
    all_safe = all(ok for _, ok in results)
    ident = absolute_identity(core.identity, h, z, schema)
    value = ident + (1.0 if all_safe else 0.0)
    identity_ok = (not core.include_identity) or ident >= core.identity.threshold - 1e-12
    if core.mode == "hard-fail":
        passed = all_safe and identity_ok
    else:
        passed = value >= core.value_floor and identity_ok
    return CoreReport(value=value, passed=passed, identity_value=ident, predicate_results=results)


# ---------------------------------------------------------------------------
# Evaluator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScoreBreakdown:
    j_task: float
    j_safety: float
    j_semantic: float
    j_cost: float
    j_reuse: float
    weights: EvaluatorWeights

    @property
    def total(self) -> float:
        w = self.weights
        return (
            w.task * self.j_task
            + w.safety * self.j_safety
            + w.semantic * self.j_semantic
            + w.cost * self.j_cost
            + w.reuse * self.j_reuse
        )

    def to_data(self) -> dict:
        return {
            "task": self.j_task,
            "safety": self.j_safety,
            "semantic": self.j_semantic,
            "cost": self.j_cost,
            "reuse": self.j_reuse,
            "total": self.total,
        }


def evaluate(
    e: Regime,
    h: Hypothesis,
    z: SemanticState,
    reuse_term: float,
    schema: OntologySchema,
    switching_cost: float = 0.0,
) -> ScoreBreakdown:
    """Score a hypothesis under a regime; the total is exactly the weighted
    sum of the five component scores.

    Pipeline latency is the sum of the policy rules' latency annotations,
    divided by the hypothesis's ``speed`` constraint when one is declared
    (an execution-rate factor, so degrading speed stretches the pipeline).
    The reuse term comes from the memory module (0 when memoryless) and is
    clamped to [-1, 1] before weighting.  ``switching_cost`` is the
    stability charge of reaching ``h`` and feeds the cost score."""
    latency = float(sum(rule.latency for rule in h.policy))
    speed = h.constraint_map().get("speed", 1.0)
    if speed > 0:
        latency = latency / speed
    deadline = z.signals().get("deadline", 0.0)
    effective = min(deadline, e.budgets.latency)
    j_task = _clamp((effective - latency) / (effective + 1.0))

    j_safety = 1.0 / (1.0 + len(z.safety_flags))

    report = type_soundness(h, schema)
    if report.sound:
        j_semantic = 1.0
    else:
        j_semantic = max(0.0, 0.5 - 0.1 * len(report.violations))

    size_term = 0.01 * (len(h.roles) + len(h.edges))
    j_cost = _clamp(1.0 - switching_cost / e.budgets.switching_cost - size_term)

    j_reuse = _clamp(reuse_term, -1.0, 1.0)
    return ScoreBreakdown(j_task, j_safety, j_semantic, j_cost, j_reuse, e.weights)


# ---------------------------------------------------------------------------
# Structural prior
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StructuralPrior:
    node_weight: float = 1.0
    edge_weight: float = 0.5
    rule_weight: float = 0.25
    constraint_weight: float = 0.25
    preferred: tuple[tuple[str, float], ...] = ()  # digest -> bonus

    def __post_init__(self) -> None:
        weights = (self.node_weight, self.edge_weight, self.rule_weight, self.constraint_weight)
        if min(weights) <= 0:
            raise ConfigError("complexity weights must be positive")
        cap = min(weights)
        for digest, bonus in self.preferred:
            if bonus < 0 or bonus >= cap:
                raise ConfigError(
                    f"preferred-structure bonus for {digest[:12]} must lie in [0, {cap}) "
                    "to keep complexity strictly increasing under growth"
                )

    def to_data(self) -> dict:
        return {
            "node": self.node_weight,
            "edge": self.edge_weight,
            "rule": self.rule_weight,
            "constraint": self.constraint_weight,
            "preferred": {d: b for d, b in self.preferred},
        }

    @classmethod
    def from_data(cls, data: Mapping) -> "StructuralPrior":
        return cls(
            node_weight=float(data.get("node", 1.0)),
            edge_weight=float(data.get("edge", 0.5)),
            rule_weight=float(data.get("rule", 0.25)),
            constraint_weight=float(data.get("constraint", 0.25)),
            preferred=tuple(sorted((str(d), float(b)) for d, b in data.get("preferred", {}).items())),
        )


def prior_complexity(prior: StructuralPrior, h: Hypothesis) -> float:
    """Weighted motif count minus any preferred-structure bonus, clamped at
    zero.  Strictly increasing in node count; monotone under subgraphs."""
    raw = (
        prior.node_weight * len(h.roles)
        + prior.edge_weight * len(h.edges)
        + prior.rule_weight * len(h.policy)
        + prior.constraint_weight * len(h.constraints)
    )
    bonus = dict(prior.preferred).get(h.digest(), 0.0)
    return max(0.0, raw - bonus)
