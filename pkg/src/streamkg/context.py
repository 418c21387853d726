"""Temporal context identification and question generation.

A context opens when the first step of a registered event pattern shows up
in the live KG and closes when the event concludes (an alert fired) or the
signal goes quiet.  While a context is active, question generation targets
the next unmatched step of every partially matched pattern, then fills the
set with attribute questions about the highest-scored entities.  When the
scene is steady, a rotating baseline question set keeps coverage over the
KB's question bank.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .inference import Question
from .knowledge import KnowledgeBase, TemporalKnowledgeGraph

MAX_QUESTIONS = 5

STEADY_LABEL = "steady"


class MissingTemplate(Exception):
    def __init__(self, predicate: str) -> None:
        super().__init__(f"no question template for predicate {predicate!r}")
        self.predicate = predicate


@dataclass(frozen=True)
class ContextConfig:
    context_window_ms: float = 10_000.0
    recency_tau_ms: float = 5_000.0
    steady_window_ms: float = 30_000.0
    question_set_size: int = 4


@dataclass(frozen=True)
class NextStep:
    """The next unmatched step of a partially matched pattern."""

    query_id: str
    pattern: str
    step_index: int
    predicate: str
    target_type: str | None


@dataclass
class TemporalContext:
    label: str
    active: bool
    opened_at_ms: float
    last_signal_ms: float
    triggering_query: str | None = None
    scored_entities: list[tuple[str, float]] = field(default_factory=list)
    next_steps: list[NextStep] = field(default_factory=list)


@dataclass
class QuestionSet:
    questions: list[Question]
    for_horizon_k: int
    created_at_ms: float
    context_label: str

    def __post_init__(self) -> None:
        if len(self.questions) > MAX_QUESTIONS:
            raise ValueError(f"question set exceeds {MAX_QUESTIONS} questions")
        seen = set()
        for q in self.questions:
            key = (q.target_type, q.predicate, q.text)
            if key in seen:
                raise ValueError(f"duplicate question {key}")
            seen.add(key)


def score_entities(
    kg: TemporalKnowledgeGraph,
    kb: KnowledgeBase,
    label: str,
    predicates: set[str],
    now_ms: float,
    config: ContextConfig,
) -> list[tuple[str, float]]:
    """Score entities by prior * recency decay * match count, normalized.

    Matches are live triples inside the context window whose predicate is
    one the active queries need.  Ties break on entity id so the ordering
    is reproducible.
    """
    window_start = now_ms - config.context_window_ms
    counts: dict[str, int] = {}
    latest: dict[str, float] = {}
    for t in kg.triples:
        if t.observed_at_ms < window_start or t.observed_at_ms > now_ms:
            continue
        if t.predicate not in predicates:
            continue
        parties = [t.subject]
        if t.object_type is not None:
            parties.append(t.object)
        for e in parties:
            counts[e] = counts.get(e, 0) + 1
            latest[e] = max(latest.get(e, 0.0), t.observed_at_ms)

    raw: dict[str, float] = {}
    for e, n in counts.items():
        etype = kg.entity_types.get(e, "")
        prior = kb.prior(label, etype)
        decay = math.exp(-(now_ms - latest[e]) / config.recency_tau_ms)
        raw[e] = prior * decay * n
    if not raw:
        return []
    top = max(raw.values())
    if top <= 0:
        return [(e, 0.0) for e in sorted(raw)]
    scored = [(e, raw[e] / top) for e in raw]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored


def identify(
    kg: TemporalKnowledgeGraph,
    active_queries: list,
    progress: list[NextStep],
    kb: KnowledgeBase,
    now_ms: float,
    config: ContextConfig | None = None,
    current: TemporalContext | None = None,
    signal: bool = False,
) -> TemporalContext:
    """Determine the temporal context at `now_ms`.

    `progress` lists the next unmatched step of every partially matched
    registered pattern, in query registration order.  A context activates on
    the first such query and stays pinned to it while it remains partial;
    additional pattern hits queue behind it (their next steps still appear
    in `next_steps` so question generation covers them).  `signal` says
    whether this evaluation round actually advanced a pattern; merely
    holding stale partials does not refresh the quiet timer.
    """
    config = config or ContextConfig()
    if current is not None and current.active:
        trigger = next((p for p in progress if p.query_id == current.triggering_query), None)
        if trigger is not None:
            label, triggering = current.label, current.triggering_query
            opened_at = current.opened_at_ms
        elif progress:
            # The pinned query completed or expired; the next queued pattern
            # takes over without dropping the active context.
            label, triggering = progress[0].pattern, progress[0].query_id
            opened_at = current.opened_at_ms
        else:
            label, triggering, opened_at = STEADY_LABEL, None, now_ms
    elif progress:
        label, triggering = progress[0].pattern, progress[0].query_id
        opened_at = now_ms
    else:
        label, triggering, opened_at = STEADY_LABEL, None, now_ms

    active = triggering is not None
    needed: set[str] = set()
    for q in active_queries:
        for step in q.pattern.steps:
            if step.matcher.predicate != "*":
                needed.add(step.matcher.predicate)
    scored = score_entities(kg, kb, label, needed, now_ms, config)

    if signal or current is None or not current.active:
        last_signal = now_ms
    else:
        last_signal = current.last_signal_ms
    return TemporalContext(
        label=label,
        active=active,
        opened_at_ms=opened_at,
        last_signal_ms=last_signal,
        triggering_query=triggering,
        scored_entities=scored,
        next_steps=list(progress),
    )


def close_context(
    context: TemporalContext,
    now_ms: float,
    alert_fired: bool,
    config: ContextConfig | None = None,
) -> tuple[bool, str]:
    """(concluded, reason).  A context concludes when its event completed
    (an alert fired) or no matching signal arrived for the steady window."""
    config = config or ContextConfig()
    if not context.active:
        return False, ""
    if alert_fired:
        return True, "event_concluded"
    if now_ms - context.last_signal_ms > config.steady_window_ms:
        return True, "signal_quiet"
    return False, ""


class QuestionGenerator:
    """Builds the per-frame question batch (one admitted-frame horizon).

    Active context: one question per partially matched pattern's next step
    (the triggering pattern first), then attribute questions about the
    highest-scored entities.  Steady: round-robin rotation over the KB's
    baseline question bank.  Sets never exceed MAX_QUESTIONS and are
    deduplicated by (target, text).
    """

    def __init__(self, kb: KnowledgeBase, config: ContextConfig | None = None) -> None:
        self.kb = kb
        self.config = config or ContextConfig()
        self._rotation = 0
        self._qid = 0
        for pred in kb.baseline_predicates:
            if pred not in kb.templates:
                raise MissingTemplate(pred)

    def _next_qid(self) -> str:
        self._qid += 1
        return f"q{self._qid:05d}"

    def _template_question(self, predicate: str, target_type: str | None,
                           priority: float) -> Question:
        tpl = self.kb.templates.get(predicate)
        if tpl is None:
            raise MissingTemplate(predicate)
        return Question(
            qid=self._next_qid(),
            text=tpl.text,
            predicate=predicate,
            target_type=target_type,
            expected_tokens=tpl.expected_tokens,
            priority=priority,
        )

    def _default_target_type(self, predicate: str) -> str | None:
        sigs = self.kb.relations.get(predicate)
        if sigs:
            return sigs[0][0]
        for etype, attrs in sorted(self.kb.attributes.items()):
            if predicate in attrs:
                return etype
        return None

    def generate(self, context: TemporalContext, now_ms: float,
                 entity_types: dict[str, str] | None = None) -> QuestionSet:
        entity_types = entity_types or {}
        size = min(self.config.question_set_size, MAX_QUESTIONS)
        candidates: list[Question] = []
        seen: set[tuple[str | None, str, str]] = set()

        def push(q: Question) -> None:
            key = (q.target_type, q.predicate, q.text)
            if key not in seen:
                seen.add(key)
                candidates.append(q)

        if context.active:
            for step in context.next_steps:
                priority = 1.0 if step.query_id == context.triggering_query else 0.9
                push(self._template_question(step.predicate, step.target_type, priority))
            for entity, score in context.scored_entities:
                etype = entity_types.get(entity)
                if etype is None:
                    continue
                for attr in sorted(self.kb.attribute_predicates(etype)):
                    if attr in self.kb.templates:
                        push(self._template_question(attr, etype, 0.8 * score))
            # Stable sort: step questions stay ahead of same-priority
            # attribute questions in insertion order.
            candidates.sort(key=lambda q: -q.priority)
            chosen = candidates[:size]
        else:
            chosen = []
            bank = self.kb.baseline_predicates
            if bank:
                take = min(size, len(bank))
                for j in range(take):
                    pred = bank[(self._rotation + j) % len(bank)]
                    q = self._template_question(pred, self._default_target_type(pred), 0.5)
                    key = (q.target_type, q.predicate, q.text)
                    if key not in seen:
                        seen.add(key)
                        chosen.append(q)
                self._rotation = (self._rotation + take) % len(bank)

        return QuestionSet(
            questions=chosen,
            for_horizon_k=1,
            created_at_ms=now_ms,
            context_label=context.label,
        )
