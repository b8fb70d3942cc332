"""Semantic states, service-graph hypotheses, and typing checks.

A hypothesis is a service realization: a DAG of subservice roles, an
assignment of components to roles, an ordered orchestration policy of
guarded rules, and a set of named constraint bounds.  The typed hypothesis
space is exactly the set of hypotheses that ``type_soundness`` accepts
against a schema.

All types here are immutable values normalized at construction (sorted
roles, edges, bindings, constraints), so structural equality and content
digests are stable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .canon import canonical_dumps, digest_of
from .errors import IncompatibleInterface, TypingError
from .ontology import (
    AssertionBase,
    Category,
    ConceptId,
    OntologySchema,
    is_refinement,
)

#: Regime-signal vocabulary produced by the semantic lift.  Policy guards,
#: regime entry predicates, and grammar triggers may reference these names
#: and no others.
SIGNAL_NAMES = (
    "bandwidth",
    "battery_margin",
    "congestion",
    "deadline",
    "deadline_pressure",
    "health_margin",
    "noise",
    "user_priority",
)

GUARD_OPS = ("<=", ">=", "<", ">", "==")

#: Environment descriptor concepts with these local names (or refinements
#: of them) drive the noise/congestion signals for zones occupied by
#: available agents.
NOISY_LOCAL_NAME = "NoisyZone"
CONGESTED_LOCAL_NAME = "CongestedZone"


# ---------------------------------------------------------------------------
# Raw platform state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AgentState:
    agent_id: str
    concept: ConceptId
    available: bool
    battery: float  # fraction in [0, 1]
    zone: str


@dataclass(frozen=True)
class ComponentState:
    component_id: str
    concept: ConceptId
    health: str  # ok | degraded | failed


@dataclass(frozen=True)
class ServiceRequest:
    request_class: ConceptId
    params: tuple[tuple[str, object], ...]  # sorted by name
    deadline: int

    @classmethod
    def build(cls, request_class: ConceptId, params: Mapping[str, object], deadline: int) -> "ServiceRequest":
        return cls(request_class, tuple(sorted(params.items())), deadline)

    def param_map(self) -> dict[str, object]:
        return dict(self.params)


@dataclass(frozen=True)
class RawPlatformState:
    time: int
    agents: tuple[AgentState, ...]
    components: tuple[ComponentState, ...]
    request: ServiceRequest
    network: tuple[tuple[str, float], ...]  # (zone, bandwidth), sorted
    safety_flags: frozenset[str]
    environment_facts: tuple[tuple[str, tuple[ConceptId, ...]], ...]  # zone -> descriptors

    def network_map(self) -> dict[str, float]:
        return dict(self.network)

    def environment_map(self) -> dict[str, tuple[ConceptId, ...]]:
        return dict(self.environment_facts)

    def to_data(self) -> dict:
        return {
            "time": self.time,
            "agents": [
                [a.agent_id, str(a.concept), a.available, a.battery, a.zone] for a in self.agents
            ],
            "components": [[c.component_id, str(c.concept), c.health] for c in self.components],
            "request": {
                "class": str(self.request.request_class),
                "params": {n: v for n, v in self.request.params},
                "deadline": self.request.deadline,
            },
            "network": {z: b for z, b in self.network},
            "safety_flags": sorted(self.safety_flags),
            "environment": {z: [str(d) for d in ds] for z, ds in self.environment_facts},
        }

    @classmethod
    def from_data(cls, data: Mapping) -> "RawPlatformState":
        req = data["request"]
        return build_raw_state(
            time=int(data.get("time", 0)),
            agents=[
                AgentState(str(i), ConceptId.parse(str(c)), bool(av), float(b), str(z))
                for i, c, av, b, z in data.get("agents", [])
            ],
            components=[
                ComponentState(str(i), ConceptId.parse(str(c)), str(h))
                for i, c, h in data.get("components", [])
            ],
            request=ServiceRequest.build(
                ConceptId.parse(str(req["class"])), dict(req.get("params", {})), int(req.get("deadline", 0))
            ),
            network={str(z): float(b) for z, b in data.get("network", {}).items()},
            safety_flags=[str(f) for f in data.get("safety_flags", [])],
            environment={
                str(z): [ConceptId.parse(str(d)) for d in ds]
                for z, ds in data.get("environment", {}).items()
            },
        )


def build_raw_state(
    time: int,
    agents: Iterable[AgentState],
    components: Iterable[ComponentState],
    request: ServiceRequest,
    network: Mapping[str, float],
    safety_flags: Iterable[str],
    environment: Mapping[str, Sequence[ConceptId]],
) -> RawPlatformState:
    return RawPlatformState(
        time=time,
        agents=tuple(sorted(agents, key=lambda a: a.agent_id)),
        components=tuple(sorted(components, key=lambda c: c.component_id)),
        request=request,
        network=tuple(sorted((z, float(b)) for z, b in network.items())),
        safety_flags=frozenset(safety_flags),
        environment_facts=tuple(
            sorted((z, tuple(sorted(ds))) for z, ds in environment.items())
        ),
    )


# ---------------------------------------------------------------------------
# Semantic state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InteractionState:
    phase: str
    pending_obligations: tuple[ConceptId, ...]  # sorted


@dataclass(frozen=True)
class SemanticState:
    """Ontology-grounded lift of a raw platform state.

    ``required_functions`` and ``output_functions`` are the request-class
    commitments read from the assertion base (``requires`` and ``executes``
    facts of request individuals); they anchor identity scoring.
    """

    request_class: ConceptId
    request_params: tuple[tuple[str, object], ...]
    available_agents: frozenset[tuple[str, ConceptId]]
    component_functions: frozenset[tuple[str, ConceptId]]
    interaction_state: InteractionState
    environment_descriptors: tuple[tuple[str, frozenset[ConceptId]], ...]
    regime_signals: tuple[tuple[str, float], ...]
    safety_flags: frozenset[str]
    required_functions: frozenset[ConceptId]
    output_functions: frozenset[ConceptId]

    def signals(self) -> dict[str, float]:
        return dict(self.regime_signals)

    def functions_of(self, component_id: str) -> frozenset[ConceptId]:
        return frozenset(f for cid, f in self.component_functions if cid == component_id)

    def live_component_ids(self) -> frozenset[str]:
        return frozenset(cid for cid, _ in self.component_functions)

    def to_data(self) -> dict:
        return {
            "request_class": str(self.request_class),
            "request_params": {n: v for n, v in self.request_params},
            "available_agents": [[a, str(c)] for a, c in sorted(self.available_agents)],
            "component_functions": [[i, str(f)] for i, f in sorted(self.component_functions)],
            "interaction": {
                "phase": self.interaction_state.phase,
                "pending": [str(o) for o in self.interaction_state.pending_obligations],
            },
            "environment": {z: [str(d) for d in sorted(ds)] for z, ds in self.environment_descriptors},
            "signals": {n: v for n, v in self.regime_signals},
            "safety_flags": sorted(self.safety_flags),
            "required_functions": [str(f) for f in sorted(self.required_functions)],
            "output_functions": [str(f) for f in sorted(self.output_functions)],
        }

    def digest(self) -> str:
        return digest_of(self.to_data())


def semantic_lift(x: RawPlatformState, schema: OntologySchema, k: AssertionBase) -> SemanticState:
    """Lift a raw platform state to a typed semantic state.

    Deterministic and total on well-formed raw states; raises TypingError
    naming the first untypable raw fact.
    """
    if not (0 <= x.request.deadline):
        raise TypingError("request deadline must be nonnegative")
    if not schema.declares(x.request.request_class):
        raise TypingError(f"unknown request class {x.request.request_class}")
    if schema.category(x.request.request_class) is not Category.SERVICE:
        raise TypingError(f"request class {x.request.request_class} is not a Service concept")

    decls = schema.params_for(x.request.request_class)
    typed_params: list[tuple[str, object]] = []
    for name, value in x.request.params:
        decl = decls.get(name)
        if decl is None:
            raise TypingError(f"request parameter {name!r} undeclared for {x.request.request_class}")
        plain, unit = _split_unit(value)
        if unit != decl.unit:
            raise TypingError(f"request parameter {name!r} unit mismatch: {unit!r} vs declared {decl.unit!r}")
        if not _value_fits(decl.kind, plain):
            raise TypingError(f"request parameter {name!r} value {plain!r} is not a {decl.kind}")
        typed_params.append((name, plain))

    env_map = x.environment_map()
    for agent in x.agents:
        if not schema.declares(agent.concept):
            raise TypingError(f"unknown agent concept {agent.concept} (agent {agent.agent_id})")
        if schema.category(agent.concept) is not Category.AGENT:
            raise TypingError(f"agent {agent.agent_id} typed by non-Agent concept {agent.concept}")
        if not (0.0 <= agent.battery <= 1.0):
            raise TypingError(f"agent {agent.agent_id} battery {agent.battery} outside [0, 1]")
        if agent.zone not in env_map:
            raise TypingError(f"agent {agent.agent_id} placed in unknown zone {agent.zone!r}")

    for comp in x.components:
        if not schema.declares(comp.concept):
            raise TypingError(f"unknown component concept {comp.concept} (component {comp.component_id})")
        if comp.health not in ("ok", "degraded", "failed"):
            raise TypingError(f"component {comp.component_id} has unknown health {comp.health!r}")

    for zone, bandwidth in x.network:
        if not (0.0 <= bandwidth <= 1.0):
            raise TypingError(f"zone {zone!r} bandwidth {bandwidth} outside [0, 1]")

    descriptors: list[tuple[str, frozenset[ConceptId]]] = []
    for zone, ds in x.environment_facts:
        for d in ds:
            if not schema.declares(d):
                raise TypingError(f"unknown environment descriptor {d} in zone {zone!r}")
            if schema.category(d) is not Category.ENVIRONMENT:
                raise TypingError(f"descriptor {d} in zone {zone!r} is not an Environment concept")
        descriptors.append((zone, frozenset(ds)))

    provides = k.facts_named("providesFunction")
    live = {c.component_id for c in x.components if c.health != "failed"}
    component_functions: set[tuple[str, ConceptId]] = set()
    for _, subject, obj in provides:
        if subject not in live:
            continue
        fn_concept = k.individuals.get(obj)
        if fn_concept is None or not schema.declares(fn_concept):
            raise TypingError(f"providesFunction({subject}, {obj}) targets untypable individual")
        component_functions.add((subject, fn_concept))

    request_individuals = sorted(
        ind
        for ind, concept in k.individuals.items()
        if schema.declares(concept) and is_refinement(schema, concept, x.request.request_class)
    )
    required = _request_commitments(request_individuals, "requires", schema, k)
    outputs = _request_commitments(request_individuals, "executes", schema, k)
    pending = _request_commitments(request_individuals, "notifies", schema, k)
    for ob in pending:
        if schema.category(ob) is not Category.INTERACTION:
            raise TypingError(f"pending obligation {ob} is not an Interaction concept")

    available = frozenset((a.agent_id, a.concept) for a in x.agents if a.available)
    signals = _lift_signals(x, schema, typed_params)

    return SemanticState(
        request_class=x.request.request_class,
        request_params=tuple(sorted(typed_params)),
        available_agents=available,
        component_functions=frozenset(component_functions),
        interaction_state=InteractionState(
            phase="requested" if x.time == 0 else "active",
            pending_obligations=tuple(sorted(pending)),
        ),
        environment_descriptors=tuple(sorted(descriptors)),
        regime_signals=tuple(sorted(signals.items())),
        safety_flags=x.safety_flags,
        required_functions=frozenset(required),
        output_functions=frozenset(outputs),
    )


def _request_commitments(
    request_individuals: Sequence[str], relation: str, schema: OntologySchema, k: AssertionBase
) -> frozenset[ConceptId]:
    out: set[ConceptId] = set()
    subjects = set(request_individuals)
    for _, subj, obj in k.facts_named(relation):
        if subj in subjects:
            concept = k.individuals.get(obj)
            if concept is None or not schema.declares(concept):
                raise TypingError(f"{relation}({subj}, {obj}) targets untypable individual")
            out.add(concept)
    return frozenset(out)


def _split_unit(value: object) -> tuple[object, str]:
    if isinstance(value, (list, tuple)) and len(value) == 2 and isinstance(value[1], str):
        return value[0], value[1]
    return value, ""


def _value_fits(kind: str, value: object) -> bool:
    if kind == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "flag":
        return isinstance(value, bool)
    return isinstance(value, str)


def _lift_signals(
    x: RawPlatformState, schema: OntologySchema, typed_params: Sequence[tuple[str, object]]
) -> dict[str, float]:
    env_map = x.environment_map()
    available = [a for a in x.agents if a.available]
    network = x.network_map()

    deadline = float(x.request.deadline)
    batteries = [a.battery for a in available]
    occupied = sorted({a.zone for a in available})
    bandwidths = [network.get(z, 1.0) for z in occupied]
    healthy = [c for c in x.components if c.health == "ok"]

    noise = _zone_signal(occupied, env_map, schema, NOISY_LOCAL_NAME)
    congestion = _zone_signal(occupied, env_map, schema, CONGESTED_LOCAL_NAME)

    priority = 0.0
    for name, value in typed_params:
        if name == "priority" and isinstance(value, (int, float)) and not isinstance(value, bool):
            priority = float(value)

    return {
        "bandwidth": min(bandwidths) if bandwidths else 1.0,
        "battery_margin": min(batteries) if batteries else 1.0,
        "congestion": congestion,
        "deadline": deadline,
        "deadline_pressure": 1.0 / (1.0 + deadline),
        "health_margin": (len(healthy) / len(x.components)) if x.components else 1.0,
        "noise": noise,
        "user_priority": priority,
    }


def _zone_signal(
    zones: Sequence[str],
    env_map: Mapping[str, tuple[ConceptId, ...]],
    schema: OntologySchema,
    sentinel_local_name: str,
) -> float:
    """1.0 when any occupied zone carries a descriptor refining a sentinel
    Environment concept (matched by local name), else 0.0."""
    sentinels = [
        c
        for c in schema.concepts_in(Category.ENVIRONMENT)
        if c.local_name == sentinel_local_name
    ]
    if not sentinels:
        return 0.0
    for zone in zones:
        for descriptor in env_map.get(zone, ()):
            if any(is_refinement(schema, descriptor, s) for s in sentinels):
                return 1.0
    return 0.0


# ---------------------------------------------------------------------------
# Hypotheses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Component:
    """A deployable component: its own concept plus the functions it provides."""

    component_id: str
    concept: ConceptId
    provides: frozenset[ConceptId]

    def to_data(self) -> dict:
        return {
            "component": self.component_id,
            "concept": str(self.concept),
            "provides": [str(f) for f in sorted(self.provides)],
        }

    @classmethod
    def from_data(cls, data: Mapping) -> "Component":
        return cls(
            component_id=str(data["component"]),
            concept=ConceptId.parse(str(data["concept"])),
            provides=frozenset(ConceptId.parse(str(f)) for f in data.get("provides", [])),
        )


@dataclass(frozen=True)
class Role:
    role_id: str
    requires: frozenset[ConceptId]

    def to_data(self) -> dict:
        return {"id": self.role_id, "requires": [str(f) for f in sorted(self.requires)]}

    @classmethod
    def from_data(cls, data: Mapping) -> "Role":
        return cls(str(data["id"]), frozenset(ConceptId.parse(str(f)) for f in data.get("requires", [])))


@dataclass(frozen=True)
class InterfaceContract:
    entity_types: frozenset[ConceptId]
    event_types: frozenset[ConceptId]
    obligations: frozenset[ConceptId]

    def to_data(self) -> dict:
        return {
            "entities": [str(c) for c in sorted(self.entity_types)],
            "events": [str(c) for c in sorted(self.event_types)],
            "obligations": [str(c) for c in sorted(self.obligations)],
        }

    @classmethod
    def from_data(cls, data: Mapping) -> "InterfaceContract":
        return cls(
            entity_types=frozenset(ConceptId.parse(str(c)) for c in data.get("entities", [])),
            event_types=frozenset(ConceptId.parse(str(c)) for c in data.get("events", [])),
            obligations=frozenset(ConceptId.parse(str(c)) for c in data.get("obligations", [])),
        )


@dataclass(frozen=True)
class Edge:
    from_role: str
    to_role: str
    contract: InterfaceContract

    def to_data(self) -> dict:
        return {"from": self.from_role, "to": self.to_role, "contract": self.contract.to_data()}

    @classmethod
    def from_data(cls, data: Mapping) -> "Edge":
        return cls(str(data["from"]), str(data["to"]), InterfaceContract.from_data(data["contract"]))


@dataclass(frozen=True)
class SignalCondition:
    signal: str
    op: str  # one of GUARD_OPS
    value: float

    def holds(self, signals: Mapping[str, float]) -> bool:
        left = float(signals.get(self.signal, 0.0))
        if self.op == "<=":
            return left <= self.value
        if self.op == ">=":
            return left >= self.value
        if self.op == "<":
            return left < self.value
        if self.op == ">":
            return left > self.value
        return left == self.value

    def to_data(self) -> dict:
        return {"signal": self.signal, "op": self.op, "value": self.value}

    @classmethod
    def from_data(cls, data: Mapping) -> "SignalCondition":
        return cls(str(data["signal"]), str(data["op"]), float(data["value"]))


def conditions_hold(conditions: Sequence[SignalCondition], signals: Mapping[str, float]) -> bool:
    return all(c.holds(signals) for c in conditions)


@dataclass(frozen=True)
class PolicyRule:
    """One guarded orchestration step: when the guard holds on the regime
    signals, ``actor_role`` performs ``relation`` on ``action_concept``.
    ``latency`` is the step's contribution to pipeline latency, in ticks."""

    guard: tuple[SignalCondition, ...]
    relation: str  # executes | notifies
    actor_role: str
    action_concept: ConceptId
    latency: int = 0

    def to_data(self) -> dict:
        return {
            "guard": [c.to_data() for c in self.guard],
            "relation": self.relation,
            "role": self.actor_role,
            "action": str(self.action_concept),
            "latency": self.latency,
        }

    @classmethod
    def from_data(cls, data: Mapping) -> "PolicyRule":
        return cls(
            guard=tuple(SignalCondition.from_data(c) for c in data.get("guard", [])),
            relation=str(data["relation"]),
            actor_role=str(data["role"]),
            action_concept=ConceptId.parse(str(data["action"])),
            latency=int(data.get("latency", 0)),
        )


@dataclass(frozen=True)
class Hypothesis:
    """A candidate service realization (graph, assignment, policy, constraints)."""

    roles: tuple[Role, ...]  # sorted by role id
    edges: tuple[Edge, ...]  # sorted
    assignment: tuple[tuple[str, Component], ...]  # sorted by role id
    policy: tuple[PolicyRule, ...]  # order significant
    constraints: tuple[tuple[str, float], ...]  # sorted by name

    @classmethod
    def build(
        cls,
        roles: Iterable[Role],
        edges: Iterable[Edge] = (),
        assignment: Mapping[str, Component] | None = None,
        policy: Sequence[PolicyRule] = (),
        constraints: Mapping[str, float] | None = None,
    ) -> "Hypothesis":
        return cls(
            roles=tuple(sorted(roles, key=lambda r: r.role_id)),
            edges=tuple(sorted(edges, key=lambda e: (e.from_role, e.to_role, canonical_dumps(e.contract.to_data())))),
            assignment=tuple(sorted((assignment or {}).items())),
            policy=tuple(policy),
            constraints=tuple(sorted((constraints or {}).items())),
        )

    # -- accessors --------------------------------------------------------

    def role_ids(self) -> tuple[str, ...]:
        return tuple(r.role_id for r in self.roles)

    def role(self, role_id: str) -> Role | None:
        for r in self.roles:
            if r.role_id == role_id:
                return r
        return None

    def assignment_map(self) -> dict[str, Component]:
        return dict(self.assignment)

    def binding(self, role_id: str) -> Component | None:
        return self.assignment_map().get(role_id)

    def constraint_map(self) -> dict[str, float]:
        return dict(self.constraints)

    def sinks(self) -> tuple[str, ...]:
        with_out = {e.from_role for e in self.edges}
        return tuple(r for r in self.role_ids() if r not in with_out)

    def sources(self) -> tuple[str, ...]:
        with_in = {e.to_role for e in self.edges}
        return tuple(r for r in self.role_ids() if r not in with_in)

    def propagated_obligations(self) -> frozenset[ConceptId]:
        """Obligations carried by contract edges plus notification actions."""
        out: set[ConceptId] = set()
        for e in self.edges:
            out |= e.contract.obligations
        for rule in self.policy:
            if rule.relation == "notifies":
                out.add(rule.action_concept)
        return frozenset(out)

    def entity_vocabulary(self) -> frozenset[ConceptId]:
        out: set[ConceptId] = set()
        for r in self.roles:
            out |= r.requires
        for e in self.edges:
            out |= e.contract.entity_types
        for _, comp in self.assignment:
            out |= comp.provides
        return frozenset(out)

    def event_vocabulary(self) -> frozenset[ConceptId]:
        out: set[ConceptId] = set()
        for e in self.edges:
            out |= e.contract.event_types
        for rule in self.policy:
            out.add(rule.action_concept)
        return frozenset(out)

    # -- serialization -----------------------------------------------------

    def to_data(self) -> dict:
        return {
            "roles": [r.to_data() for r in self.roles],
            "edges": [e.to_data() for e in self.edges],
            "assignment": {rid: comp.to_data() for rid, comp in self.assignment},
            "policy": [p.to_data() for p in self.policy],
            "constraints": {n: b for n, b in self.constraints},
        }

    @classmethod
    def from_data(cls, data: Mapping) -> "Hypothesis":
        return cls.build(
            roles=[Role.from_data(r) for r in data.get("roles", [])],
            edges=[Edge.from_data(e) for e in data.get("edges", [])],
            assignment={rid: Component.from_data(c) for rid, c in data.get("assignment", {}).items()},
            policy=[PolicyRule.from_data(p) for p in data.get("policy", [])],
            constraints={str(n): float(b) for n, b in data.get("constraints", {}).items()},
        )

    def digest(self) -> str:
        return digest_of(self.to_data())


@dataclass(frozen=True)
class SoundnessReport:
    sound: bool
    violations: tuple[tuple[str, str], ...]  # (code, message)

    def messages(self) -> list[str]:
        return [f"{code}: {msg}" for code, msg in self.violations]


def type_soundness(h: Hypothesis, schema: OntologySchema) -> SoundnessReport:
    """Check every hypothesis invariant under the schema's refinement closure."""
    violations: list[tuple[str, str]] = []
    role_ids = set(h.role_ids())
    assignment = h.assignment_map()

    def check_concept(c: ConceptId, want: Category | None, where: str) -> bool:
        if not schema.declares(c):
            violations.append(("unknown-concept", f"{where}: undeclared concept {c}"))
            return False
        if want is not None and schema.category(c) is not want:
            violations.append(
                ("category-mismatch", f"{where}: {c} is {schema.category(c).value}, expected {want.value}")
            )
            return False
        return True

    for role in h.roles:
        for f in sorted(role.requires):
            check_concept(f, Category.FUNCTION, f"role {role.role_id} requirement")

    for rid in sorted(role_ids):
        if rid not in assignment:
            violations.append(("unassigned-role", f"role {rid} has no component assigned"))
    for rid in sorted(assignment):
        if rid not in role_ids:
            violations.append(("unknown-role", f"assignment references unknown role {rid}"))

    for rid, comp in h.assignment:
        role = h.role(rid)
        if role is None:
            continue
        ok = check_concept(comp.concept, None, f"component {comp.component_id}")
        for f in sorted(comp.provides):
            ok = check_concept(f, Category.FUNCTION, f"component {comp.component_id} provides") and ok
        if not ok:
            continue
        for needed in sorted(role.requires):
            if not schema.declares(needed):
                continue
            if not any(
                schema.declares(p) and is_refinement(schema, p, needed) for p in comp.provides
            ):
                violations.append(
                    (
                        "function-unsatisfied",
                        f"role {rid}: component {comp.component_id} provides no refinement of {needed}",
                    )
                )

    for e in h.edges:
        for end in (e.from_role, e.to_role):
            if end not in role_ids:
                violations.append(("edge-endpoint-missing", f"edge {e.from_role}->{e.to_role}: unknown role {end}"))
        for c in sorted(e.contract.entity_types | e.contract.event_types):
            check_concept(c, None, f"edge {e.from_role}->{e.to_role} contract")
        for ob in sorted(e.contract.obligations):
            check_concept(ob, Category.INTERACTION, f"edge {e.from_role}->{e.to_role} obligation")

    for idx, rule in enumerate(h.policy):
        if rule.relation not in ("executes", "notifies"):
            violations.append(("bad-policy-relation", f"policy rule {idx}: unknown relation {rule.relation!r}"))
        if rule.actor_role not in role_ids:
            violations.append(("bad-policy-role", f"policy rule {idx}: unknown actor role {rule.actor_role}"))
        for cond in rule.guard:
            if cond.signal not in SIGNAL_NAMES:
                violations.append(("bad-policy-signal", f"policy rule {idx}: unknown signal {cond.signal!r}"))
            if cond.op not in GUARD_OPS:
                violations.append(("bad-policy-signal", f"policy rule {idx}: unknown operator {cond.op!r}"))
        if rule.latency < 0:
            violations.append(("bad-policy-latency", f"policy rule {idx}: negative latency"))
        want = Category.INTERACTION if rule.relation == "notifies" else Category.FUNCTION
        check_concept(rule.action_concept, want, f"policy rule {idx} action")

    violations.extend(_graph_shape_violations(h))
    return SoundnessReport(sound=not violations, violations=tuple(violations))


def _graph_shape_violations(h: Hypothesis) -> list[tuple[str, str]]:
    out: list[tuple[str, str]] = []
    role_ids = set(h.role_ids())
    adj: dict[str, set[str]] = {r: set() for r in role_ids}
    undirected: dict[str, set[str]] = {r: set() for r in role_ids}
    for e in h.edges:
        if e.from_role in role_ids and e.to_role in role_ids:
            adj[e.from_role].add(e.to_role)
            undirected[e.from_role].add(e.to_role)
            undirected[e.to_role].add(e.from_role)

    # cycle detection on service-flow edges
    WHITE, GREY, BLACK = 0, 1, 2
    color = {r: WHITE for r in role_ids}

    def has_cycle(node: str) -> bool:
        color[node] = GREY
        for nxt in sorted(adj[node]):
            if color[nxt] == GREY:
                return True
            if color[nxt] == WHITE and has_cycle(nxt):
                return True
        color[node] = BLACK
        return False

    for r in sorted(role_ids):
        if color[r] == WHITE and has_cycle(r):
            out.append(("graph-cycle", "service-flow edges form a cycle"))
            break

    if role_ids:
        start = min(role_ids)
        seen = {start}
        stack = [start]
        while stack:
            cur = stack.pop()
            for nxt in undirected[cur]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        if seen != role_ids:
            missing = ", ".join(sorted(role_ids - seen))
            out.append(("graph-disconnected", f"roles unreachable from {start}: {missing}"))
    return out


# ---------------------------------------------------------------------------
# Interface compatibility and composition
# ---------------------------------------------------------------------------


def _vocab_covers(vocab: frozenset[ConceptId], wanted: ConceptId, schema: OntologySchema) -> bool:
    if not schema.declares(wanted):
        return False
    return any(schema.declares(c) and is_refinement(schema, c, wanted) for c in vocab)


def interface_compatible(
    upstream: Hypothesis,
    downstream: Hypothesis,
    contract: InterfaceContract,
    schema: OntologySchema,
) -> bool:
    """True iff both boundaries satisfy the contract's entity, event, and
    obligation sets.  Entities and events are matched up to refinement;
    obligations must be present exactly (propagated, never dropped)."""
    for side in (upstream, downstream):
        entities = side.entity_vocabulary()
        events = side.event_vocabulary()
        if not all(_vocab_covers(entities, t, schema) for t in contract.entity_types):
            return False
        if not all(_vocab_covers(events, t, schema) for t in contract.event_types):
            return False
        if not contract.obligations <= side.propagated_obligations():
            return False
    return True


def compose(
    parts: Sequence[Hypothesis],
    contracts: Sequence[InterfaceContract],
    schema: OntologySchema,
) -> Hypothesis:
    """Compose parts in order, joining each adjacent pair with a contract
    edge from every sink of the left part to every source of the right.

    Constraints merge with the tightest bound winning per name; the
    composition never silently weakens a constraint.
    """
    if not parts:
        raise IncompatibleInterface("compose requires at least one part")
    if len(contracts) != len(parts) - 1:
        raise IncompatibleInterface(
            f"expected {len(parts) - 1} contracts for {len(parts)} parts, got {len(contracts)}"
        )
    seen_roles: set[str] = set()
    for part in parts:
        dup = seen_roles & set(part.role_ids())
        if dup:
            raise IncompatibleInterface(f"duplicate role ids across parts: {', '.join(sorted(dup))}")
        seen_roles |= set(part.role_ids())
    for i, contract in enumerate(contracts):
        if not interface_compatible(parts[i], parts[i + 1], contract, schema):
            raise IncompatibleInterface(f"boundary {i} ({i}->{i + 1}) violates its contract")

    roles: list[Role] = []
    edges: list[Edge] = []
    assignment: dict[str, Component] = {}
    policy: list[PolicyRule] = []
    constraints: dict[str, float] = {}
    for part in parts:
        roles.extend(part.roles)
        edges.extend(part.edges)
        assignment.update(part.assignment_map())
        policy.extend(part.policy)
        for name, bound in part.constraints:
            constraints[name] = min(bound, constraints.get(name, bound))
    for i, contract in enumerate(contracts):
        for sink in parts[i].sinks():
            for source in parts[i + 1].sources():
                edges.append(Edge(sink, source, contract))

    return Hypothesis.build(
        roles=roles, edges=edges, assignment=assignment, policy=policy, constraints=constraints
    )
