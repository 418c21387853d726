"""Domain knowledge base and the temporal knowledge graph.

The KB is static domain configuration: entity types, relations, question
templates, context priors, and named event patterns.  The KG is the live,
epoch-segmented store of extracted facts; build() folds inference responses
into it with near-duplicate merging, and reset() archives the current epoch.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

from .patterns import EventPattern, QueryMatcher, parse_pattern_body

if TYPE_CHECKING:
    from .inference import InferenceResponse

log = logging.getLogger(__name__)

KB_VERSION = 1
DEDUP_WINDOW_MS = 2000.0


class KBSchemaError(Exception):
    """Invalid KB file: unknown entity type, missing template, bad line."""


@dataclass(frozen=True)
class QuestionTemplate:
    predicate: str
    text: str
    expected_tokens: int


@dataclass
class KnowledgeBase:
    name: str
    version: int
    entity_types: set[str]
    # relation predicate -> list of (subject_type, object_type) signatures
    relations: dict[str, list[tuple[str, str]]]
    # entity type -> attribute predicates
    attributes: dict[str, set[str]]
    templates: dict[str, QuestionTemplate]
    # (context label, entity type) -> prior in [0, 1]
    priors: dict[tuple[str, str], float]
    event_patterns: dict[str, EventPattern]
    baseline_predicates: list[str]
    # predicate -> regex with named groups subject/object, for free-text backends
    extractors: dict[str, re.Pattern]

    @property
    def predicates(self) -> set[str]:
        preds = set(self.relations)
        for attrs in self.attributes.values():
            preds |= attrs
        return preds

    def prior(self, context_label: str, entity_type: str, default: float = 0.5) -> float:
        return self.priors.get((context_label, entity_type), default)

    def attribute_predicates(self, entity_type: str) -> set[str]:
        return self.attributes.get(entity_type, set())


def init_kb(path: str | Path) -> KnowledgeBase:
    """Load and validate a .kb domain file."""
    path = Path(path)
    name = None
    version = None
    entity_types: set[str] = set()
    relations: dict[str, list[tuple[str, str]]] = {}
    attributes: dict[str, set[str]] = {}
    templates: dict[str, QuestionTemplate] = {}
    priors: dict[tuple[str, str], float] = {}
    baseline: list[str] = []
    extractors: dict[str, re.Pattern] = {}
    pattern_lines: list[tuple[int, str, str]] = []

    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                kind, rest = line.split(None, 1)
            except ValueError:
                raise KBSchemaError(f"{path}:{line_no}: bare directive {line!r}")
            if kind == "kb":
                fields = [f.strip() for f in line.split(";")]
                name = fields[0].split()[1]
                kv = dict(f.split() for f in fields[1:])
                version = int(kv.get("version", "1"))
                if version != KB_VERSION:
                    raise KBSchemaError(f"{path}: unsupported kb version {version}")
            elif kind == "entity_type":
                entity_types.add(rest.strip())
            elif kind == "relation":
                parts = rest.split()
                if len(parts) != 3:
                    raise KBSchemaError(f"{path}:{line_no}: relation needs <subj_type> <pred> <obj_type>")
                subj_t, pred, obj_t = parts
                for t in (subj_t, obj_t):
                    if t not in entity_types:
                        raise KBSchemaError(f"{path}:{line_no}: unknown entity type {t!r}")
                relations.setdefault(pred, []).append((subj_t, obj_t))
            elif kind == "attribute":
                parts = rest.split()
                if len(parts) != 2:
                    raise KBSchemaError(f"{path}:{line_no}: attribute needs <entity_type> <name>")
                etype, attr = parts
                if etype not in entity_types:
                    raise KBSchemaError(f"{path}:{line_no}: unknown entity type {etype!r}")
                attributes.setdefault(etype, set()).add(attr)
            elif kind == "template":
                m = re.match(r'(\S+)\s+"([^"]+)"\s+tokens=(\d+)$', rest)
                if not m:
                    raise KBSchemaError(f'{path}:{line_no}: template must be <pred> "<text>" tokens=<n>')
                templates[m.group(1)] = QuestionTemplate(m.group(1), m.group(2), int(m.group(3)))
            elif kind == "prior":
                parts = rest.split()
                if len(parts) != 3:
                    raise KBSchemaError(f"{path}:{line_no}: prior needs <context> <entity_type> <p>")
                label, etype, p = parts[0], parts[1], float(parts[2])
                if etype not in entity_types:
                    raise KBSchemaError(f"{path}:{line_no}: unknown entity type {etype!r}")
                if not 0.0 <= p <= 1.0:
                    raise KBSchemaError(f"{path}:{line_no}: prior {p} outside [0, 1]")
                priors[(label, etype)] = p
            elif kind == "baseline":
                baseline.extend(rest.split())
            elif kind == "extract":
                m = re.match(r"(\S+)\s+/(.+)/$", rest)
                if not m:
                    raise KBSchemaError(f"{path}:{line_no}: extract must be <pred> /<regex>/")
                extractors[m.group(1)] = re.compile(m.group(2))
            elif kind == "pattern":
                m = re.match(r"(\S+)\s+(.*)$", rest)
                if not m:
                    raise KBSchemaError(f"{path}:{line_no}: bad pattern line")
                pattern_lines.append((line_no, m.group(1), m.group(2)))
            else:
                raise KBSchemaError(f"{path}:{line_no}: unknown directive {kind!r}")

    if name is None:
        raise KBSchemaError(f"{path}: missing kb header")

    kb = KnowledgeBase(
        name=name,
        version=version or KB_VERSION,
        entity_types=entity_types,
        relations=relations,
        attributes=attributes,
        templates=templates,
        priors=priors,
        event_patterns={},
        baseline_predicates=baseline,
        extractors=extractors,
    )

    predicates = kb.predicates
    for line_no, pname, body in pattern_lines:
        try:
            kb.event_patterns[pname] = parse_pattern_body(pname, body, entity_types, predicates)
        except Exception as exc:
            raise KBSchemaError(f"{path}:{line_no}: {exc}") from exc

    for pred in baseline:
        if pred not in predicates:
            raise KBSchemaError(f"{path}: baseline predicate {pred!r} is not a relation or attribute")
        if pred not in templates:
            raise KBSchemaError(f"{path}: baseline predicate {pred!r} has no question template")
    return kb


@dataclass
class SemanticTriple:
    uid: str
    subject: str
    predicate: str
    object: str
    confidence: float
    observed_at_ms: float
    frame_seq: int
    model_id: str
    epoch: int
    subject_type: str | None = None
    object_type: str | None = None
    boxes: tuple[tuple[float, float, float, float], ...] | None = None

    def dedup_key(self) -> tuple[str, str, str]:
        return (self.subject, self.predicate, self.object)


def dedup_triples(triples: list[SemanticTriple]) -> list[SemanticTriple]:
    """Collapse (subject, predicate, object, observed_at) duplicates keeping
    the highest confidence, ordered chronologically.  This is the merge rule
    shared by interactive answering and by serving snapshot plus log."""
    best: dict[tuple, SemanticTriple] = {}
    for t in triples:
        key = (t.subject, t.predicate, t.object, t.observed_at_ms)
        held = best.get(key)
        if held is None or t.confidence > held.confidence:
            best[key] = t
    out = list(best.values())
    out.sort(key=lambda t: (t.observed_at_ms, t.uid))
    return out


@dataclass
class TemporalKnowledgeGraph:
    epoch: int = 0
    triples: list[SemanticTriple] = field(default_factory=list)
    entity_index: dict[str, list[SemanticTriple]] = field(default_factory=dict)
    entity_types: dict[str, str] = field(default_factory=dict)
    archived_count: int = 0

    def insert(self, triple: SemanticTriple) -> None:
        self.triples.append(triple)
        self.entity_index.setdefault(triple.subject, []).append(triple)
        if triple.object_type is not None:
            self.entity_index.setdefault(triple.object, []).append(triple)
        if triple.subject_type:
            self.entity_types[triple.subject] = triple.subject_type
        if triple.object_type:
            self.entity_types[triple.object] = triple.object_type

    def rebuild_index(self) -> dict[str, list[SemanticTriple]]:
        """Recompute the entity index from the triple list (test oracle)."""
        index: dict[str, list[SemanticTriple]] = {}
        for t in self.triples:
            index.setdefault(t.subject, []).append(t)
            if t.object_type is not None:
                index.setdefault(t.object, []).append(t)
        return index


class KnowledgeBuilder:
    """Folds inference responses into the KG and allocates triple uids."""

    def __init__(self, kb: KnowledgeBase, kg: TemporalKnowledgeGraph | None = None,
                 dedup_window_ms: float = DEDUP_WINDOW_MS) -> None:
        self.kb = kb
        self.kg = kg if kg is not None else TemporalKnowledgeGraph()
        self.dedup_window_ms = dedup_window_ms
        self._uid_counter = 0
        # dedup key -> (stored triple, last time the fact was observed)
        self._recent: dict[tuple[str, str, str], tuple[SemanticTriple, float]] = {}
        self.skipped_unknown_predicates = 0

    def _next_uid(self) -> str:
        self._uid_counter += 1
        return f"t{self._uid_counter:06d}"

    def build(self, response: InferenceResponse) -> list[SemanticTriple]:
        """Insert the response's facts; returns the delta.

        The delta contains newly inserted triples and re-delivers updated
        ones (a duplicate fact within the dedup window bumps the stored
        confidence to the max instead of inserting).  Facts with a predicate
        the KB does not know are logged and skipped, never fatal.
        """
        known = self.kb.predicates
        delta: list[SemanticTriple] = []
        observed_at = response.frame_ts_ms
        for answer in response.answers:
            for fact in answer.facts:
                if fact.predicate not in known:
                    self.skipped_unknown_predicates += 1
                    log.warning("skipping fact with unknown predicate %r at frame %d",
                                fact.predicate, response.frame_seq)
                    continue
                key = (fact.subject, fact.predicate, fact.object)
                held = self._recent.get(key)
                if held is not None and observed_at - held[1] <= self.dedup_window_ms:
                    stored = held[0]
                    stored.confidence = max(stored.confidence, answer.confidence)
                    self._recent[key] = (stored, observed_at)
                    delta.append(stored)
                    continue
                triple = SemanticTriple(
                    uid=self._next_uid(),
                    subject=fact.subject,
                    predicate=fact.predicate,
                    object=fact.object,
                    confidence=answer.confidence,
                    observed_at_ms=observed_at,
                    frame_seq=response.frame_seq,
                    model_id=response.model_id,
                    epoch=self.kg.epoch,
                    subject_type=fact.subject_type,
                    object_type=fact.object_type,
                    boxes=fact.boxes,
                )
                self.kg.insert(triple)
                self._recent[key] = (triple, observed_at)
                delta.append(triple)
        return delta

    def reset(self, reason: str) -> tuple[int, list[SemanticTriple]]:
        """Archive the live epoch and start a fresh one.

        Returns (closing epoch, archived triples).  The caller is
        responsible for handing the archived triples to durable storage.
        """
        archived = list(self.kg.triples)
        closing = self.kg.epoch
        self.kg.archived_count += len(archived)
        self.kg.triples = []
        self.kg.entity_index = {}
        self.kg.epoch = closing + 1
        self._recent.clear()
        log.info("kg reset (%s): epoch %d closed with %d triples", reason, closing, len(archived))
        return closing, archived


def query_kg(
    kg: TemporalKnowledgeGraph,
    matcher: QueryMatcher,
    window: tuple[float, float],
) -> list[SemanticTriple]:
    """Triples matching the filter inside the closed interval [start, end]."""
    start, end = window
    if start > end:
        raise ValueError(f"window start {start} after end {end}")
    # The index narrows the scan only for subject pins: subjects are always
    # indexed, while objects enter the index only when typed, so an entity
    # filter cannot rely on it.
    if matcher.subject is not None:
        candidates = kg.entity_index.get(matcher.subject, [])
    else:
        candidates = kg.triples
    out = [
        t for t in candidates
        if start <= t.observed_at_ms <= end and matcher.matches(t)
    ]
    out.sort(key=lambda t: (t.observed_at_ms, t.uid))
    return out
