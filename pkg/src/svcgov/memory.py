"""The structured memory operator: outcome records, reuse scoring,
failure-motif quarantine, and controlled certificate transport.

The store is append-only.  Records follow the tuple
(regime, hypothesis digest, certificate, outcome, failure signature,
reuse tag); failure signatures quarantine a graph motif within the
environment class it failed in, never globally.  Certificates of kind
closure or capacity may be transported to nearby graphs in a matching
context; stability and invariance certificates are state-dependent and
never transport.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .canon import canonical_dumps, sha256_hex
from .certificates import Certificate, CertRefusal, environment_digest
from .errors import CorruptStore, MalformedRecord, NotReachable
from .model import Hypothesis, SemanticState
from .ontology import ConceptId, OntologySchema
from .transform import edit_distance

OUTCOMES = ("success", "degraded", "failed")

#: Certificate kinds eligible for transport; the rest are state-dependent.
TRANSPORTABLE_KINDS = ("closure", "capacity")


@dataclass(frozen=True)
class Motif:
    """The minimal implicated subgraph of a failure: slots labeled with the
    assigned component concepts, plus the edges among them.  A motif
    matches a hypothesis when some injective slot-to-role map preserves
    concepts exactly and maps motif edges onto hypothesis edges."""

    nodes: tuple[tuple[str, ConceptId], ...]  # (slot, component concept), sorted by slot
    edges: tuple[tuple[str, str], ...]  # (from slot, to slot), sorted

    def __post_init__(self) -> None:
        if not self.nodes:
            raise MalformedRecord("failure motif must name at least one slot")

    def to_data(self) -> dict:
        return {
            "nodes": [[s, str(c)] for s, c in self.nodes],
            "edges": [list(e) for e in self.edges],
        }

    @classmethod
    def from_data(cls, data: Mapping) -> "Motif":
        return cls(
            nodes=tuple(sorted((str(s), ConceptId.parse(str(c))) for s, c in data["nodes"])),
            edges=tuple(sorted((str(a), str(b)) for a, b in data.get("edges", []))),
        )

    @classmethod
    def build(cls, nodes: Mapping[str, ConceptId], edges: Iterable[tuple[str, str]] = ()) -> "Motif":
        return cls(nodes=tuple(sorted(nodes.items())), edges=tuple(sorted(edges)))

    def matches(self, h: Hypothesis) -> bool:
        """Exact-label subgraph check, brute force; motifs stay small."""
        slots = [s for s, _ in self.nodes]
        concept_of = dict(self.nodes)
        candidates: dict[str, list[str]] = {}
        for slot in slots:
            fits = [
                rid for rid, comp in h.assignment if comp.concept == concept_of[slot]
            ]
            if not fits:
                return False
            candidates[slot] = fits
        h_edges = {(e.from_role, e.to_role) for e in h.edges}
        for picks in itertools.product(*(candidates[s] for s in slots)):
            if len(set(picks)) != len(picks):
                continue
            mapping = dict(zip(slots, picks))
            if all((mapping[a], mapping[b]) in h_edges for a, b in self.edges):
                return True
        return False


def motif_from_hypothesis(h: Hypothesis, role_ids: Iterable[str]) -> Motif:
    """The induced motif of the given roles in a hypothesis."""
    wanted = sorted(set(role_ids))
    assignment = h.assignment_map()
    nodes = {}
    for rid in wanted:
        comp = assignment.get(rid)
        if comp is None:
            raise MalformedRecord(f"role {rid} is unassigned; cannot build a failure motif")
        nodes[rid] = comp.concept
    edges = [
        (e.from_role, e.to_role)
        for e in h.edges
        if e.from_role in nodes and e.to_role in nodes
    ]
    return Motif.build(nodes, edges)


@dataclass(frozen=True)
class FailureSignature:
    regime_label: str
    environment_digest: str
    motif: Motif
    obligation_code: str

    def __post_init__(self) -> None:
        allowed = {"A1", "A2", "A3", "A4", "S1", "S2", "S3", "S4", "S5", "runtime-failure"}
        if self.obligation_code not in allowed:
            raise MalformedRecord(f"unknown obligation code {self.obligation_code!r}")

    def to_data(self) -> dict:
        return {
            "regime": self.regime_label,
            "environment": self.environment_digest,
            "motif": self.motif.to_data(),
            "code": self.obligation_code,
        }

    @classmethod
    def from_data(cls, data: Mapping) -> "FailureSignature":
        return cls(
            regime_label=str(data["regime"]),
            environment_digest=str(data["environment"]),
            motif=Motif.from_data(data["motif"]),
            obligation_code=str(data["code"]),
        )


@dataclass(frozen=True)
class MemoryRecord:
    regime_label: str
    hypothesis_digest: str
    certificate: Certificate | None
    outcome: str  # success | degraded | failed
    failure_signature: FailureSignature | None
    reuse_tag: str = ""

    def __post_init__(self) -> None:
        if self.outcome not in OUTCOMES:
            raise MalformedRecord(f"unknown outcome {self.outcome!r}")
        if self.outcome == "failed" and self.failure_signature is None:
            raise MalformedRecord("failed records must carry a failure signature")
        if self.outcome != "failed" and self.failure_signature is not None:
            raise MalformedRecord("only failed records carry a failure signature")

    def to_data(self) -> dict:
        return {
            "regime": self.regime_label,
            "hypothesis": self.hypothesis_digest,
            "certificate": self.certificate.to_data() if self.certificate else None,
            "outcome": self.outcome,
            "failure_signature": self.failure_signature.to_data() if self.failure_signature else None,
            "reuse_tag": self.reuse_tag,
        }

    @classmethod
    def from_data(cls, data: Mapping) -> "MemoryRecord":
        cert = data.get("certificate")
        sig = data.get("failure_signature")
        return cls(
            regime_label=str(data["regime"]),
            hypothesis_digest=str(data["hypothesis"]),
            certificate=Certificate.from_data(cert) if cert else None,
            outcome=str(data["outcome"]),
            failure_signature=FailureSignature.from_data(sig) if sig else None,
            reuse_tag=str(data.get("reuse_tag", "")),
        )


@dataclass(frozen=True)
class MemoryStore:
    """Append-only record log plus side tables for subject graphs and
    loose certificates; indexes are derived and always consistent."""

    records: tuple[MemoryRecord, ...] = ()
    graphs: tuple[tuple[str, Hypothesis], ...] = ()  # digest -> hypothesis, sorted
    certificates: tuple[Certificate, ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    def graph_map(self) -> dict[str, Hypothesis]:
        return dict(self.graphs)

    def by_digest(self, digest: str) -> tuple[MemoryRecord, ...]:
        return tuple(r for r in self.records if r.hypothesis_digest == digest)

    def by_regime(self, label: str) -> tuple[MemoryRecord, ...]:
        return tuple(r for r in self.records if r.regime_label == label)

    def by_environment(self, env_digest: str) -> tuple[MemoryRecord, ...]:
        return tuple(
            r
            for r in self.records
            if (r.failure_signature is not None and r.failure_signature.environment_digest == env_digest)
            or (r.certificate is not None and r.certificate.context.environment_digest == env_digest)
        )

    def failure_signatures(self) -> tuple[FailureSignature, ...]:
        return tuple(r.failure_signature for r in self.records if r.failure_signature is not None)

    def has_certificate(self, cert: Certificate) -> bool:
        if cert in self.certificates:
            return True
        return any(r.certificate == cert for r in self.records)


EMPTY_STORE = MemoryStore()


def record(
    store: MemoryStore,
    rec: MemoryRecord,
    graph: Hypothesis | None = None,
    certificates: Sequence[Certificate] = (),
) -> MemoryStore:
    """Append one record (plus optional subject graph and loose
    certificates) and return the grown store; prior records are untouched."""
    if not isinstance(rec, MemoryRecord):
        raise MalformedRecord(f"expected a MemoryRecord, got {type(rec).__name__}")
    graphs = store.graphs
    if graph is not None:
        if graph.digest() != rec.hypothesis_digest:
            raise MalformedRecord("graph digest does not match the record's hypothesis digest")
        table = store.graph_map()
        table.setdefault(rec.hypothesis_digest, graph)
        graphs = tuple(sorted(table.items()))
    return MemoryStore(
        records=store.records + (rec,),
        graphs=graphs,
        certificates=store.certificates + tuple(certificates),
    )


def reuse_score(
    store: MemoryStore,
    h: Hypothesis,
    e_label: str,
    z: SemanticState,
    schema: OntologySchema,
    bonus: float = 1.0,
    penalty: float = 2.0,
) -> float:
    """Positive reuse of matching prior successes, negative reuse of
    failure motifs present in ``h`` within the current environment class.
    An empty store scores 0."""
    if not store.records:
        return 0.0
    digest = h.digest()
    env = environment_digest(z, schema)
    score = 0.0
    for rec in store.records:
        if rec.outcome == "success" and rec.hypothesis_digest == digest and rec.regime_label == e_label:
            if rec.certificate is None or rec.certificate.context.environment_digest == env:
                score += bonus
    for sig in store.failure_signatures():
        if sig.environment_digest == env and sig.motif.matches(h):
            score -= penalty
    return score


def match_failure(
    store: MemoryStore, h: Hypothesis, z: SemanticState, schema: OntologySchema
) -> list[FailureSignature]:
    """All stored signatures whose motif occurs in ``h`` and whose
    environment class matches ``z``; log order."""
    env = environment_digest(z, schema)
    return [
        sig
        for sig in store.failure_signatures()
        if sig.environment_digest == env and sig.motif.matches(h)
    ]


def transport_certificate(
    store: MemoryStore,
    cert: Certificate,
    h2: Hypothesis,
    z: SemanticState,
    max_distance: int,
    schema: OntologySchema,
    regime_label: str,
) -> Certificate | CertRefusal:
    """Copy a stored closure/capacity certificate onto a nearby graph in a
    matching context.  Stability and invariance certificates never
    transport."""
    if not store.has_certificate(cert):
        return CertRefusal("certificate is not present in the store")
    if cert.kind not in TRANSPORTABLE_KINDS:
        return CertRefusal(f"non-transportable kind {cert.kind!r}")
    if cert.context.regime_label != regime_label:
        return CertRefusal(
            f"regime mismatch: certificate is for {cert.context.regime_label!r}, current is {regime_label!r}"
        )
    if cert.context.environment_digest != environment_digest(z, schema):
        return CertRefusal("environment class mismatch")
    target_digest = h2.digest()
    if cert.subject_digest == target_digest:
        distance = 0
    else:
        subject = store.graph_map().get(cert.subject_digest)
        if subject is None:
            return CertRefusal("subject graph unknown; cannot measure distance")
        try:
            distance = edit_distance(subject, h2)
        except NotReachable:
            return CertRefusal("target graph unreachable from subject within the grammar")
    if distance > max_distance:
        return CertRefusal(f"distance {distance} exceeds maximum {max_distance}")
    return cert.as_transported(target_digest, distance)


def find_transportable(
    store: MemoryStore,
    kind: str,
    h2: Hypothesis,
    z: SemanticState,
    max_distance: int,
    schema: OntologySchema,
    regime_label: str,
) -> Certificate | None:
    """First stored certificate of ``kind`` that transports onto ``h2``."""
    if kind not in TRANSPORTABLE_KINDS:
        return None
    seen: set[str] = set()
    pool = list(store.certificates) + [r.certificate for r in store.records if r.certificate]
    for cert in pool:
        key = canonical_dumps(cert.to_data())
        if cert.kind != kind or key in seen:
            continue
        seen.add(key)
        moved = transport_certificate(store, cert, h2, z, max_distance, schema, regime_label)
        if isinstance(moved, Certificate):
            return moved
    return None


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

_HEADER = "svcgov-memory v1"


def persist(store: MemoryStore, path: str | Path) -> None:
    """Write the store as canonical text with a trailing checksum line."""
    lines = [_HEADER]
    graph_map = store.graph_map()
    emitted: set[str] = set()
    for rec in store.records:
        entry: dict = {"record": rec.to_data()}
        graph = graph_map.get(rec.hypothesis_digest)
        if graph is not None and rec.hypothesis_digest not in emitted:
            entry["graph"] = graph.to_data()
            emitted.add(rec.hypothesis_digest)
        lines.append(canonical_dumps(entry))
    for digest in sorted(set(graph_map) - emitted):
        lines.append(canonical_dumps({"graph_only": graph_map[digest].to_data()}))
    for cert in store.certificates:
        lines.append(canonical_dumps({"certificate": cert.to_data()}))
    body = "\n".join(lines) + "\n"
    text = body + f"checksum sha256:{sha256_hex(body)}\n"
    Path(path).write_text(text, encoding="utf-8")


def load(path: str | Path) -> MemoryStore:
    """Read a persisted store; raises CorruptStore on checksum mismatch,
    truncation, or malformed content."""
    import json

    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CorruptStore(f"cannot read store: {exc}") from exc
    lines = text.splitlines()
    if len(lines) < 2 or not lines[-1].startswith("checksum sha256:"):
        raise CorruptStore("missing checksum line")
    body = "\n".join(lines[:-1]) + "\n"
    expected = lines[-1].removeprefix("checksum sha256:").strip()
    if sha256_hex(body) != expected:
        raise CorruptStore("checksum mismatch")
    if lines[0] != _HEADER:
        raise CorruptStore(f"unknown store header {lines[0]!r}")

    store = MemoryStore()
    records: list[MemoryRecord] = []
    graphs: dict[str, Hypothesis] = {}
    certs: list[Certificate] = []
    for line in lines[1:-1]:
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorruptStore(f"malformed store line: {exc}") from exc
        if "record" in entry:
            rec = MemoryRecord.from_data(entry["record"])
            records.append(rec)
            if "graph" in entry:
                graphs[rec.hypothesis_digest] = Hypothesis.from_data(entry["graph"])
        elif "graph_only" in entry:
            graph = Hypothesis.from_data(entry["graph_only"])
            graphs[graph.digest()] = graph
        elif "certificate" in entry:
            certs.append(Certificate.from_data(entry["certificate"]))
        else:
            raise CorruptStore(f"unknown store entry keys {sorted(entry)}")
    return MemoryStore(
        records=tuple(records), graphs=tuple(sorted(graphs.items())), certificates=tuple(certs)
    )
