"""Typed vocabulary, refinement order, and structural consistency checks.

The schema stands in for an imported ontology closure: concepts classified
under five categories, a refinement partial order within each category, a
fixed five-name relation vocabulary, and per-concept parameter
declarations.  Consistency of an assertion base against the schema is
checked structurally (declared references, category discipline), not by
description-logic inference.

Ontology documents are UTF-8 text, one statement per line, order
independent::

    # comment
    prefix hsp urn:example:hospital
    concept Service hsp:DeliveryRequest
    refines hsp:IndoorNavigation hsp:Navigation
    relation providesFunction Agent Function
    param hsp:DeliveryRequest priority number
    param hsp:DeliveryRequest weight number kg
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from .errors import ParseError, UnknownConcept, ValidationError


class Category(str, Enum):
    AGENT = "Agent"
    SERVICE = "Service"
    FUNCTION = "Function"
    ENVIRONMENT = "Environment"
    INTERACTION = "Interaction"


#: The closed relation vocabulary.  Schema authors choose each relation's
#: domain/range categories but may not invent new names or arities.
RELATION_NAMES = ("executes", "notifies", "requires", "providesFunction", "locatedIn")

PARAM_KINDS = ("number", "flag", "enum", "text")


@dataclass(frozen=True, order=True)
class ConceptId:
    """Namespaced concept identifier; equality and ordering are exact."""

    namespace: str
    local_name: str

    def __post_init__(self) -> None:
        if not self.namespace or not self.local_name:
            raise ValueError("concept id needs a non-empty namespace and local name")

    def __str__(self) -> str:
        return f"{self.namespace}:{self.local_name}"

    @classmethod
    def parse(cls, text: str) -> "ConceptId":
        ns, sep, local = text.partition(":")
        if not sep or not ns or not local:
            raise ValueError(f"malformed concept id {text!r}, expected <prefix>:<LocalName>")
        return cls(ns, local)


@dataclass(frozen=True)
class ParamDecl:
    name: str
    kind: str  # one of PARAM_KINDS
    unit: str = ""


@dataclass(frozen=True)
class RelationDecl:
    name: str
    domain: Category
    range: Category


@dataclass(frozen=True)
class OntologySchema:
    """Immutable typed vocabulary; safe to share across readers."""

    concepts: Mapping[ConceptId, Category]
    refinements: frozenset[tuple[ConceptId, ConceptId]]  # (child, parent)
    relations: Mapping[str, RelationDecl]
    parameter_decls: Mapping[ConceptId, tuple[ParamDecl, ...]]
    prefixes: Mapping[str, str] = field(default_factory=dict)

    def category(self, concept: ConceptId) -> Category:
        try:
            return self.concepts[concept]
        except KeyError:
            raise UnknownConcept(f"undeclared concept {concept}") from None

    def declares(self, concept: ConceptId) -> bool:
        return concept in self.concepts

    def parents(self, concept: ConceptId) -> tuple[ConceptId, ...]:
        return tuple(sorted(p for (c, p) in self.refinements if c == concept))

    def ancestors(self, concept: ConceptId) -> frozenset[ConceptId]:
        """Reflexive-transitive up-closure of the refinement order."""
        seen: set[ConceptId] = set()
        stack = [concept]
        while stack:
            cur = stack.pop()
            if cur in seen:
                continue
            seen.add(cur)
            stack.extend(p for (c, p) in self.refinements if c == cur)
        return frozenset(seen)

    def concepts_in(self, category: Category) -> tuple[ConceptId, ...]:
        return tuple(sorted(c for c, cat in self.concepts.items() if cat is category))

    def params_for(self, concept: ConceptId) -> dict[str, ParamDecl]:
        """Parameter declarations of a concept, inherited along refinement."""
        out: dict[str, ParamDecl] = {}
        for anc in sorted(self.ancestors(concept), reverse=True):
            for decl in self.parameter_decls.get(anc, ()):
                out[decl.name] = decl
        # own declarations win over inherited ones
        for decl in self.parameter_decls.get(concept, ()):
            out[decl.name] = decl
        return out


@dataclass(frozen=True)
class AssertionBase:
    """Instance-level facts checked against a schema.

    ``individuals`` maps ids to concepts; ``relation_facts`` and
    ``parameter_facts`` are kept in declaration order for deterministic
    reporting.
    """

    individuals: Mapping[str, ConceptId]
    relation_facts: tuple[tuple[str, str, str], ...]  # (relation, subject, object)
    parameter_facts: tuple[tuple[str, str, object], ...]  # (individual, param, value)

    def typed(self, category: Category, schema: OntologySchema) -> tuple[tuple[str, ConceptId], ...]:
        return tuple(
            sorted(
                (ind, c)
                for ind, c in self.individuals.items()
                if schema.declares(c) and schema.category(c) is category
            )
        )

    def facts_named(self, relation: str) -> tuple[tuple[str, str, str], ...]:
        return tuple(f for f in self.relation_facts if f[0] == relation)


EMPTY_ASSERTIONS = AssertionBase(individuals={}, relation_facts=(), parameter_facts=())


@dataclass(frozen=True)
class ConformanceReport:
    consistent: bool
    violations: tuple[tuple[str, str], ...]  # (code, message)

    def messages(self) -> list[str]:
        return [f"{code}: {msg}" for code, msg in self.violations]


# ---------------------------------------------------------------------------
# Document loading
# ---------------------------------------------------------------------------


def load_schema(document: str) -> OntologySchema:
    """Parse an ontology document and validate all schema invariants.

    Raises ParseError on malformed syntax and ValidationError on semantic
    problems (dangling references, cross-category refinement, refinement
    cycles); either error lists every violation found.
    """
    statements: list[tuple[int, list[str]]] = []
    parse_errors: list[str] = []
    for lineno, raw in enumerate(document.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        statements.append((lineno, line.split()))
    if not statements:
        raise ParseError(["empty document: no statements"])

    prefixes: dict[str, str] = {}
    for lineno, tokens in statements:
        if tokens[0] == "prefix":
            if len(tokens) != 3:
                parse_errors.append(f"line {lineno}: prefix takes <p> <namespace>")
            elif tokens[1] in prefixes and prefixes[tokens[1]] != tokens[2]:
                parse_errors.append(f"line {lineno}: prefix {tokens[1]} redeclared")
            else:
                prefixes[tokens[1]] = tokens[2]

    def parse_concept(lineno: int, text: str) -> ConceptId | None:
        try:
            cid = ConceptId.parse(text)
        except ValueError as exc:
            parse_errors.append(f"line {lineno}: {exc}")
            return None
        if cid.namespace not in prefixes:
            parse_errors.append(f"line {lineno}: undeclared prefix {cid.namespace!r}")
            return None
        return cid

    concepts: dict[ConceptId, Category] = {}
    refinements: list[tuple[int, ConceptId, ConceptId]] = []
    relations: dict[str, RelationDecl] = {}
    params: dict[ConceptId, list[ParamDecl]] = {}

    for lineno, tokens in statements:
        kind = tokens[0]
        if kind == "prefix":
            continue
        if kind == "concept":
            if len(tokens) != 3:
                parse_errors.append(f"line {lineno}: concept takes <category> <id>")
                continue
            try:
                cat = Category(tokens[1])
            except ValueError:
                parse_errors.append(f"line {lineno}: unknown category {tokens[1]!r}")
                continue
            cid = parse_concept(lineno, tokens[2])
            if cid is None:
                continue
            if cid in concepts and concepts[cid] is not cat:
                parse_errors.append(f"line {lineno}: concept {cid} redeclared with new category")
            concepts[cid] = cat
        elif kind == "refines":
            if len(tokens) != 3:
                parse_errors.append(f"line {lineno}: refines takes <child> <parent>")
                continue
            child = parse_concept(lineno, tokens[1])
            parent = parse_concept(lineno, tokens[2])
            if child is not None and parent is not None:
                refinements.append((lineno, child, parent))
        elif kind == "relation":
            if len(tokens) != 4:
                parse_errors.append(f"line {lineno}: relation takes <name> <domainCat> <rangeCat>")
                continue
            name = tokens[1]
            if name not in RELATION_NAMES:
                parse_errors.append(f"line {lineno}: unknown relation name {name!r}")
                continue
            try:
                dom, rng = Category(tokens[2]), Category(tokens[3])
            except ValueError:
                parse_errors.append(f"line {lineno}: unknown category in relation {name}")
                continue
            if name in relations and relations[name] != RelationDecl(name, dom, rng):
                parse_errors.append(f"line {lineno}: relation {name} redeclared differently")
            relations[name] = RelationDecl(name, dom, rng)
        elif kind == "param":
            if len(tokens) not in (4, 5):
                parse_errors.append(f"line {lineno}: param takes <concept> <name> <kind> [unit]")
                continue
            cid = parse_concept(lineno, tokens[1])
            if cid is None:
                continue
            if tokens[3] not in PARAM_KINDS:
                parse_errors.append(f"line {lineno}: unknown param kind {tokens[3]!r}")
                continue
            unit = tokens[4] if len(tokens) == 5 else ""
            params.setdefault(cid, []).append(ParamDecl(tokens[2], tokens[3], unit))
        else:
            parse_errors.append(f"line {lineno}: unknown statement {kind!r}")

    if parse_errors:
        raise ParseError(parse_errors)

    violations: list[str] = []
    for lineno, child, parent in refinements:
        for end in (child, parent):
            if end not in concepts:
                violations.append(f"line {lineno}: refinement references undeclared concept {end}")
        if child in concepts and parent in concepts and concepts[child] is not concepts[parent]:
            violations.append(
                f"line {lineno}: cross-category refinement {child} -> {parent} "
                f"({concepts[child].value} vs {concepts[parent].value})"
            )
    for cid in params:
        if cid not in concepts:
            violations.append(f"param declared on undeclared concept {cid}")

    pair_set = frozenset((c, p) for _, c, p in refinements)
    cycle = _find_refinement_cycle(pair_set)
    if cycle:
        names = ", ".join(str(c) for c in cycle)
        violations.append(f"refinement cycle through {{{names}}}")

    if violations:
        raise ValidationError(violations)

    return OntologySchema(
        concepts=dict(sorted(concepts.items())),
        refinements=pair_set,
        relations=dict(sorted(relations.items())),
        parameter_decls={c: tuple(ps) for c, ps in sorted(params.items())},
        prefixes=dict(sorted(prefixes.items())),
    )


def _find_refinement_cycle(
    pairs: frozenset[tuple[ConceptId, ConceptId]]
) -> tuple[ConceptId, ...]:
    """Return the members of one refinement cycle, or () when acyclic."""
    children: dict[ConceptId, list[ConceptId]] = {}
    for child, parent in sorted(pairs):
        children.setdefault(child, []).append(parent)
    WHITE, GREY, BLACK = 0, 1, 2
    color: dict[ConceptId, int] = {}

    def visit(node: ConceptId, path: list[ConceptId]) -> tuple[ConceptId, ...]:
        color[node] = GREY
        path.append(node)
        for nxt in children.get(node, ()):
            if color.get(nxt, WHITE) == GREY:
                return tuple(path[path.index(nxt):])
            if color.get(nxt, WHITE) == WHITE:
                found = visit(nxt, path)
                if found:
                    return found
        path.pop()
        color[node] = BLACK
        return ()

    for start in sorted(children):
        if color.get(start, WHITE) == WHITE:
            found = visit(start, [])
            if found:
                return found
    return ()


# ---------------------------------------------------------------------------
# Structural checks
# ---------------------------------------------------------------------------


def is_refinement(schema: OntologySchema, a: ConceptId, b: ConceptId) -> bool:
    """True iff ``b`` is reachable from ``a`` in the reflexive-transitive
    closure of the refinement pairs (``a`` is ``b`` or a refinement of it)."""
    if not schema.declares(a):
        raise UnknownConcept(f"undeclared concept {a}")
    if not schema.declares(b):
        raise UnknownConcept(f"undeclared concept {b}")
    return b in schema.ancestors(a)


def check_consistency(schema: OntologySchema, k: AssertionBase) -> ConformanceReport:
    """Structurally validate an assertion base against the schema.

    Violations are report content, not faults; each offending fact is
    listed with a stable code.  The check is per fact, so adding a fact
    can only ever add violations.
    """
    violations: list[tuple[str, str]] = []

    for ind, concept in sorted(k.individuals.items()):
        if not schema.declares(concept):
            violations.append(("unknown-concept", f"individual {ind} typed by undeclared {concept}"))

    def category_of(ind: str) -> Category | None:
        concept = k.individuals.get(ind)
        if concept is None or not schema.declares(concept):
            return None
        return schema.category(concept)

    for relation, subj, obj in k.relation_facts:
        decl = schema.relations.get(relation)
        if decl is None:
            violations.append(("unknown-relation", f"fact {relation}({subj}, {obj}) uses undeclared relation"))
            continue
        sides = (
            ("subject", subj, decl.domain, "domain-category-mismatch"),
            ("object", obj, decl.range, "range-category-mismatch"),
        )
        for role_name, ind, want, code in sides:
            if ind not in k.individuals:
                violations.append(
                    ("unknown-individual", f"fact {relation}({subj}, {obj}) references unknown {role_name} {ind}")
                )
                continue
            got = category_of(ind)
            if got is not None and got is not want:
                violations.append(
                    (code, f"fact {relation}({subj}, {obj}): {role_name} {ind} is {got.value}, requires {want.value}")
                )

    for ind, name, value in k.parameter_facts:
        concept = k.individuals.get(ind)
        if concept is None:
            violations.append(("unknown-individual", f"parameter {name} on unknown individual {ind}"))
            continue
        if not schema.declares(concept):
            continue  # already reported above
        decl = schema.params_for(concept).get(name)
        if decl is None:
            violations.append(("unknown-param", f"parameter {name} undeclared for {concept} (individual {ind})"))
            continue
        if not _kind_matches(decl.kind, value):
            violations.append(
                ("param-kind-mismatch", f"parameter {name} on {ind}: value {value!r} is not a {decl.kind}")
            )

    return ConformanceReport(consistent=not violations, violations=tuple(violations))


def _kind_matches(kind: str, value: object) -> bool:
    if kind == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "flag":
        return isinstance(value, bool)
    return isinstance(value, str)  # enum and text


def assertions_from_data(data: Mapping, schema: OntologySchema) -> AssertionBase:
    """Build an assertion base from plain data (scenario files)."""
    individuals = {str(i): ConceptId.parse(str(c)) for i, c in data.get("individuals", [])}
    facts = tuple((str(r), str(s), str(o)) for r, s, o in data.get("facts", []))
    params = tuple((str(i), str(n), v) for i, n, v in data.get("params", []))
    return AssertionBase(individuals=individuals, relation_facts=facts, parameter_facts=params)


def assertions_to_data(k: AssertionBase) -> dict:
    return {
        "individuals": [[i, str(c)] for i, c in sorted(k.individuals.items())],
        "facts": [list(f) for f in k.relation_facts],
        "params": [list(p) for p in k.parameter_facts],
    }


def merge_assertions(base: AssertionBase, extra: AssertionBase) -> AssertionBase:
    individuals = dict(base.individuals)
    for ind, concept in extra.individuals.items():
        individuals.setdefault(ind, concept)
    facts = base.relation_facts + tuple(
        f for f in extra.relation_facts if f not in set(base.relation_facts)
    )
    params = base.parameter_facts + tuple(
        p for p in extra.parameter_facts if p not in set(base.parameter_facts)
    )
    return AssertionBase(individuals=individuals, relation_facts=facts, parameter_facts=params)
