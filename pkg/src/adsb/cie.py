"""Common-sense inferencing over a hand-editable traffic knowledge base.

Knowledge lives as (head event, relation, tail event) triples with slot
variables.  Inference unifies a query event against head patterns with
exact token matching (no embeddings), chains hops breadth-first, and
flags chains that terminate in hazard-tagged events or in trigger events
reported by the experience engine.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .scene_model import Event, Scene, is_variable, parse_event

logger = logging.getLogger(__name__)

_VAR_BUCKET = "\x00var"
_HAZARD_TAG = "hazard"


class KBError(Exception):
    """Knowledge-base file or query defect."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


# ---------------------------------------------------------------------------
# Relations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Relation:
    id: str
    directed: bool = True
    temporal: bool = False
    inverse: str | None = None
    description: str = ""


@dataclass(frozen=True)
class RelationCatalog:
    relations: tuple[Relation, ...]

    def __post_init__(self) -> None:
        ids = [r.id for r in self.relations]
        if len(set(ids)) != len(ids):
            raise KBError("duplicate relation ids in catalog")

    def get(self, relation_id: str) -> Relation:
        for r in self.relations:
            if r.id == relation_id:
                return r
        raise KBError(f"relation {relation_id!r} is not registered")

    def has(self, relation_id: str) -> bool:
        return any(r.id == relation_id for r in self.relations)

    def extended(self, relation: Relation) -> "RelationCatalog":
        if self.has(relation.id):
            return self
        return RelationCatalog(self.relations + (relation,))


DEFAULT_RELATIONS = RelationCatalog(
    (
        Relation("HappensBefore", temporal=True, inverse="HappensAfter",
                 description="the result event precedes the head event"),
        Relation("HappensAfter", temporal=True, inverse="HappensBefore",
                 description="the result event follows the head event"),
        Relation("XWant", description="what the subject wants next"),
        Relation("XNeed", description="what the subject needed beforehand"),
        Relation("XEffect", description="effect exerted on the subject"),
    )
)


# ---------------------------------------------------------------------------
# Unification
# ---------------------------------------------------------------------------


def unify(
    pattern: Sequence[str], query: Sequence[str], binding: Mapping[str, tuple[str, ...]] | None = None
) -> dict[str, tuple[str, ...]] | None:
    """Match a token pattern against query tokens.

    Slot variables bind non-empty contiguous token spans, consistently
    across repeated occurrences; every other token must match exactly.
    Returns the binding, or None when no consistent match exists.
    """
    return _match(tuple(pattern), tuple(query), 0, 0, dict(binding or {}))


def _match(p, q, i, j, binding):
    if i == len(p):
        return dict(binding) if j == len(q) else None
    tok = p[i]
    if is_variable(tok):
        if tok in binding:
            bound = binding[tok]
            if tuple(q[j : j + len(bound)]) == bound:
                return _match(p, q, i + 1, j + len(bound), binding)
            return None
        remaining = len(p) - i - 1
        for span in range(1, len(q) - j - remaining + 1):
            binding[tok] = tuple(q[j : j + span])
            result = _match(p, q, i + 1, j + span, binding)
            if result is not None:
                return result
            del binding[tok]
        return None
    if j < len(q) and q[j] == tok:
        return _match(p, q, i + 1, j + 1, binding)
    return None


def substitute(event: Event, binding: Mapping[str, tuple[str, ...]]) -> Event:
    """Replace bound slot variables and re-parse for a clean S/P/O split."""
    if not binding:
        return event
    out: list[str] = []
    for tok in event.tokens():
        if is_variable(tok) and tok in binding:
            out.extend(binding[tok])
        else:
            out.append(tok)
    return parse_event(" ".join(out))


# ---------------------------------------------------------------------------
# Triples and the knowledge base
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KnowledgeTriple:
    head: Event
    relation: str
    tail: Event
    provenance: str = "handcrafted"  # "handcrafted" | "imported"
    source_tag: str = ""
    tags: tuple[str, ...] = ()

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.head.normalized, self.relation, self.tail.normalized)


@dataclass(frozen=True)
class InferResult:
    event: Event
    binding: Mapping[str, tuple[str, ...]]
    triple: KnowledgeTriple


@dataclass(frozen=True)
class Chain:
    events: tuple[Event, ...]  # query first, then one event per hop
    triples: tuple[KnowledgeTriple, ...]

    @property
    def hops(self) -> int:
        return len(self.triples)

    @property
    def terminal(self) -> Event:
        return self.events[-1]


def _bucket_token(tokens: tuple[str, ...]) -> str:
    if not tokens or is_variable(tokens[0]):
        return _VAR_BUCKET
    return tokens[0]


class KnowledgeBase:
    """Immutable triple store with first-token indexes.

    Edits go through :func:`add_triple`, which returns a new value; loaded
    bases are therefore safe to share across threads.
    """

    def __init__(self, triples: Iterable[KnowledgeTriple] = (), relations: RelationCatalog = DEFAULT_RELATIONS):
        self.relations = relations
        unique: dict[tuple[str, str, str], KnowledgeTriple] = {}
        for t in triples:
            if not relations.has(t.relation):
                raise KBError(f"relation {t.relation!r} is not registered")
            unique.setdefault(t.key, t)
        self.triples: tuple[KnowledgeTriple, ...] = tuple(unique.values())
        self._head_index: dict[tuple[str, str], list[KnowledgeTriple]] = {}
        self._tail_index: dict[tuple[str, str], list[KnowledgeTriple]] = {}
        self._hazard_patterns: list[Event] = []
        for t in self.triples:
            self._head_index.setdefault((t.relation, _bucket_token(t.head.tokens())), []).append(t)
            self._tail_index.setdefault((t.relation, _bucket_token(t.tail.tokens())), []).append(t)
            if _HAZARD_TAG in t.tags:
                self._hazard_patterns.append(t.tail)

    def __len__(self) -> int:
        return len(self.triples)

    def _candidates(self, index, relation_id: str, first: str) -> list[KnowledgeTriple]:
        out = list(index.get((relation_id, first), ()))
        if first != _VAR_BUCKET:
            out.extend(index.get((relation_id, _VAR_BUCKET), ()))
        return out

    def infer(self, query: Event | str, relation_id: str) -> list[InferResult]:
        """All tails whose head pattern unifies with the query.

        Inverse-closed: a triple (A, HappensBefore, B) also answers
        infer(B, HappensAfter) with A.  An empty list simply means the
        base holds no knowledge about the query.
        """
        relation = self.relations.get(relation_id)
        event = parse_event(query) if isinstance(query, str) else query
        q = event.tokens()
        first = _bucket_token(q)

        results: list[InferResult] = []
        for t in self._candidates(self._head_index, relation_id, first):
            binding = unify(t.head.tokens(), q)
            if binding is not None:
                results.append(InferResult(substitute(t.tail, binding), binding, t))
        if relation.inverse is not None:
            for t in self._candidates(self._tail_index, relation.inverse, first):
                binding = unify(t.tail.tokens(), q)
                if binding is not None:
                    results.append(InferResult(substitute(t.head, binding), binding, t))
        results.sort(key=lambda r: (r.triple.source_tag, r.event.normalized, r.triple.key))
        return results

    def chain(self, start: Event | str, relation_id: str, max_hops: int) -> list[Chain]:
        """Breadth-first expansion of infer up to max_hops.

        Cycles are cut by a visited-event set; every discovered prefix is
        itself a chain, so results grow monotonically with max_hops.
        """
        if max_hops < 1:
            raise ValueError(f"max_hops must be >= 1, got {max_hops}")
        start_event = parse_event(start) if isinstance(start, str) else start
        visited = {start_event.normalized}
        frontier: list[tuple[Event, tuple[Event, ...], tuple[KnowledgeTriple, ...]]] = [
            (start_event, (start_event,), ())
        ]
        chains: list[Chain] = []
        for _ in range(max_hops):
            next_frontier = []
            for event, events, triples in frontier:
                for result in self.infer(event, relation_id):
                    norm = result.event.normalized
                    if norm in visited:
                        continue
                    visited.add(norm)
                    grown = Chain(events + (result.event,), triples + (result.triple,))
                    chains.append(grown)
                    next_frontier.append((result.event, grown.events, grown.triples))
            frontier = next_frontier
            if not frontier:
                break
        return chains

    def is_hazard(self, event: Event) -> bool:
        tokens = event.tokens()
        return any(unify(p.tokens(), tokens) is not None for p in self._hazard_patterns)


def add_triple(kb: KnowledgeBase, triple: KnowledgeTriple) -> KnowledgeBase:
    """Copy-on-write insert; re-adding an existing triple is a no-op."""
    return KnowledgeBase(kb.triples + (triple,), kb.relations)


# ---------------------------------------------------------------------------
# Triple file
# ---------------------------------------------------------------------------


def _parse_relation_directive(tokens: list[str], line: int) -> Relation:
    if len(tokens) < 2:
        raise KBError("relation directive needs an id", line)
    rel_id = tokens[1]
    kwargs: dict = {}
    for tok in tokens[2:]:
        if tok == "temporal":
            kwargs["temporal"] = True
        elif tok == "undirected":
            kwargs["directed"] = False
        elif tok.startswith("inverse="):
            kwargs["inverse"] = tok.split("=", 1)[1]
        else:
            raise KBError(f"unknown relation option {tok!r}", line)
    return Relation(rel_id, **kwargs)


def load_kb(
    path: str | Path,
    relations: RelationCatalog = DEFAULT_RELATIONS,
    provenance: str = "handcrafted",
) -> KnowledgeBase:
    """Load a tab-separated triple file.

    Line format: ``head <TAB> relation <TAB> tail [<TAB> tag,tag]``.
    ``relation <id> [temporal] [inverse=<id>] [undirected]`` lines register
    additional relations; ``#`` starts a comment.  Duplicate triples are
    idempotent.
    """
    path = Path(path)
    triples: list[KnowledgeTriple] = []
    catalog = relations
    source_tag = path.stem
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            if line.startswith("relation ") or line.startswith("relation\t"):
                catalog = catalog.extended(_parse_relation_directive(line.split(), lineno))
                continue
            parts = [p.strip() for p in line.split("\t")]
            if len(parts) < 3:
                raise KBError("expected `head<TAB>relation<TAB>tail`", lineno)
            head_text, relation_id, tail_text = parts[0], parts[1], parts[2]
            if not head_text or not tail_text:
                raise KBError("head and tail events must be non-empty", lineno)
            if not catalog.has(relation_id):
                raise KBError(f"unknown relation id {relation_id!r}", lineno)
            tags = tuple(
                t for chunk in parts[3:] for t in chunk.replace(",", " ").split() if t
            )
            triples.append(
                KnowledgeTriple(
                    head=parse_event(head_text),
                    relation=relation_id,
                    tail=parse_event(tail_text),
                    provenance=provenance,
                    source_tag=source_tag,
                    tags=tags,
                )
            )
    return KnowledgeBase(triples, catalog)


# ---------------------------------------------------------------------------
# Scene assessment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Foreseen:
    hazard: Event
    chain: Chain
    hops: int
    matched: str  # "hazard-tag" or the trigger text the terminal unified with


@dataclass(frozen=True)
class CieAssessment:
    foreseen: tuple[Foreseen, ...] = ()
    available: bool = True


def scene_candidate_events(scene: Scene) -> list[Event]:
    """Events implied by the scene: parsed actor states and relation
    descriptions.  Actor states without an explicit subject get the actor
    class as one."""
    candidates: list[Event] = []
    for actor in scene.actors:
        if not actor.state:
            continue
        event = parse_event(actor.state)
        if not event.subject:
            event = parse_event(f"a {actor.actor_class.value} {actor.state}")
        candidates.append(event)
    for edge in scene.relations:
        if edge.description:
            candidates.append(parse_event(edge.description))
    return candidates


def cie_assess(
    kb: KnowledgeBase,
    scene: Scene,
    ere_triggers: Sequence[str | Event] = (),
    max_hops: int = 3,
) -> CieAssessment:
    """Foresee hazards maturing out of the current scene.

    Chains scene events forward through temporal knowledge and flags every
    chain whose terminal event is hazard-tagged or unifies with a trigger
    event of a matched historical accident.  Fail-soft: internal faults
    yield an unavailable assessment, never an exception.
    """
    try:
        triggers: list[Event] = []
        for t in ere_triggers:
            if isinstance(t, Event):
                triggers.append(t)
            elif t and t != "unknown":
                triggers.append(parse_event(t.replace("_", " ")))

        if not kb.relations.has("HappensAfter"):
            return CieAssessment(foreseen=())

        foreseen: list[Foreseen] = []
        seen: set[tuple[str, int]] = set()
        for candidate in scene_candidate_events(scene):
            for chain in kb.chain(candidate, "HappensAfter", max_hops):
                terminal = chain.terminal
                matched = None
                if kb.is_hazard(terminal):
                    matched = "hazard-tag"
                else:
                    for trigger in triggers:
                        if (
                            unify(trigger.tokens(), terminal.tokens()) is not None
                            or unify(terminal.tokens(), trigger.tokens()) is not None
                        ):
                            matched = trigger.normalized
                            break
                if matched is None:
                    continue
                dedupe_key = (terminal.normalized, chain.hops)
                if dedupe_key in seen:
                    continue
                seen.add(dedupe_key)
                foreseen.append(Foreseen(hazard=terminal, chain=chain, hops=chain.hops, matched=matched))
        foreseen.sort(key=lambda f: (f.hops, f.hazard.normalized))
        return CieAssessment(foreseen=tuple(foreseen))
    except Exception:
        logger.exception("common-sense assessment failed; flagged unavailable")
        return CieAssessment(available=False)
