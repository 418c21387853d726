"""User queries: parsing, standing-pattern matching, interactive answers.

Standing queries watch the triple delta stream for their event pattern and
fire exactly one alert per completed sequence.  The matcher keeps every
viable partial match (gap and window pruning keep the set small); when a
triple completes a pattern, the earliest completion in arrival order wins
and that query's partial state is cleared.  Interactive queries run against
a point-in-time union of the live KG and the durable store, and can be
refined into narrower child queries.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .context import NextStep
from .knowledge import KnowledgeBase, SemanticTriple, dedup_triples
from .patterns import EventPattern, QueryMatcher, PatternSyntaxError, parse_pattern_body

KIND_STANDING = "standing"
KIND_INTERACTIVE = "interactive"

DEFAULT_INTERACTIVE_WINDOW_MS = 60_000.0


class QuerySyntaxError(Exception):
    pass


class UnknownPredicate(Exception):
    def __init__(self, predicate: str) -> None:
        super().__init__(f"unknown predicate {predicate!r}")
        self.predicate = predicate


class UnknownQuery(Exception):
    pass


@dataclass
class UserQuery:
    query_id: str
    kind: str
    text: str
    name: str | None = None
    pattern: EventPattern | None = None
    window_ms: float | None = None
    about: str | None = None
    focus: str | None = None
    refinement_of: str | None = None
    # Absolute [start, end] window fixed when the query is answered, so a
    # refinement chain evaluates against a stable interval.
    resolved_window: tuple[float, float] | None = None
    impossible: bool = False

    def matcher(self) -> QueryMatcher:
        return QueryMatcher(predicate=self.focus, entity=self.about)


_KV_RE = re.compile(r"(window|about|focus)=(\S+)")


def _parse_kv(text: str, kb: KnowledgeBase) -> tuple[str, dict[str, object]]:
    """Pull window=/about=/focus= fields out of free text."""
    fields: dict[str, object] = {}
    def grab(m: re.Match) -> str:
        key, value = m.group(1), m.group(2)
        if key == "window":
            if not value.endswith("s"):
                raise QuerySyntaxError(f"window must look like window=60s, got {value!r}")
            try:
                fields["window_ms"] = float(value[:-1]) * 1000.0
            except ValueError:
                raise QuerySyntaxError(f"bad window value {value!r}") from None
        elif key == "about":
            fields["about"] = value
        else:
            if value not in kb.predicates:
                raise UnknownPredicate(value)
            fields["focus"] = value
        return ""

    rest = _KV_RE.sub(grab, text).strip()
    return rest, fields


def parse(text: str, kb: KnowledgeBase, query_id: str = "q0") -> UserQuery:
    """Parse the query DSL.

    standing <name>: (subj pred obj) then<Ns> (...) [within<Ns>]
    alert <name> when (...) then<Ns> (...)          -- keyword alias
    interactive <free text> [window=<N>s] [about=<entity>] [focus=<pred>]
    """
    raw = text.strip()
    if not raw:
        raise QuerySyntaxError("empty query")
    head, _, rest = raw.partition(" ")

    if head in ("standing", "alert"):
        if head == "standing":
            m = re.match(r"(\S+?):\s*(.+)$", rest.strip())
            if not m:
                raise QuerySyntaxError("standing query must be: standing <name>: <pattern>")
            name, body = m.group(1), m.group(2)
        else:
            # alert <name> when <pattern>  -- template keyword form
            m = re.match(r"(\S+?):?\s+when\s+(.+)$", rest.strip())
            if not m:
                raise QuerySyntaxError("alert query must be: alert <name> when <pattern>")
            name, body = m.group(1), m.group(2)
        try:
            pattern = parse_pattern_body(name, body, kb.entity_types, kb.predicates)
        except PatternSyntaxError as exc:
            if "unknown predicate" in str(exc):
                pred = str(exc).split("'")[-2] if "'" in str(exc) else "?"
                raise UnknownPredicate(pred) from exc
            raise QuerySyntaxError(str(exc)) from exc
        return UserQuery(
            query_id=query_id,
            kind=KIND_STANDING,
            text=raw,
            name=name,
            pattern=pattern,
            window_ms=pattern.window_ms,
        )

    if head == "interactive":
        free_text, fields = _parse_kv(rest, kb)
        return UserQuery(
            query_id=query_id,
            kind=KIND_INTERACTIVE,
            text=free_text or rest.strip(),
            window_ms=fields.get("window_ms", DEFAULT_INTERACTIVE_WINDOW_MS),
            about=fields.get("about"),
            focus=fields.get("focus"),
        )

    raise QuerySyntaxError(f"query must start with standing/alert/interactive, got {head!r}")


@dataclass(frozen=True)
class _Partial:
    indices: tuple[int, ...]          # arrival indices of matched triples
    triples: tuple[SemanticTriple, ...]
    binding: tuple[tuple[str, str], ...]  # sorted variable bindings
    first_ts: float
    last_ts: float

    def binding_dict(self) -> dict[str, str]:
        return dict(self.binding)


@dataclass
class Alert:
    alert_id: str
    query_id: str
    pattern_name: str
    fired_at_ms: float
    matched: tuple[SemanticTriple, ...]
    bindings: dict[str, str]

    def key(self) -> tuple:
        return (self.query_id, tuple(t.uid for t in self.matched))


class StandingMatcher:
    """Incremental pattern matcher over the triple delta stream.

    Feeding the same triple twice is a no-op (uid-level idempotency), so
    dedup updates re-delivered by the knowledge builder never re-trigger
    matching.  State survives KG resets by construction: nothing here
    references the live graph.
    """

    def __init__(self) -> None:
        self.queries: list[UserQuery] = []
        self._partials: dict[str, list[_Partial]] = {}
        self._processed: set[str] = set()
        self._arrival = 0
        self._alert_seq = 0
        # Bumped whenever a triple extends or completes a pattern; lets the
        # engine tell fresh signal apart from stale partials.
        self.activity = 0

    def register(self, query: UserQuery) -> None:
        if query.kind != KIND_STANDING:
            raise ValueError("only standing queries are registered with the matcher")
        if any(q.query_id == query.query_id for q in self.queries):
            raise ValueError(f"duplicate query id {query.query_id}")
        self.queries.append(query)
        self._partials[query.query_id] = []

    def unregister(self, query_id: str) -> None:
        self.queries = [q for q in self.queries if q.query_id != query_id]
        self._partials.pop(query_id, None)

    def evaluate(self, delta: list[SemanticTriple]) -> list[Alert]:
        alerts: list[Alert] = []
        for triple in delta:
            if triple.uid in self._processed:
                continue
            self._processed.add(triple.uid)
            index = self._arrival
            self._arrival += 1
            for query in self.queries:
                fired = self._feed(query, triple, index)
                if fired is not None:
                    alerts.append(fired)
        return alerts

    def _feed(self, query: UserQuery, triple: SemanticTriple, index: int) -> Alert | None:
        pattern = query.pattern
        partials = self._partials[query.query_id]
        completions: list[_Partial] = []
        extensions: list[_Partial] = []

        for p in [None, *partials]:
            length = 0 if p is None else len(p.indices)
            if length >= pattern.length:
                continue
            step = pattern.steps[length]
            binding = {} if p is None else p.binding_dict()
            if p is not None:
                gap = triple.observed_at_ms - p.last_ts
                if gap < 0 or gap > pattern.steps[length - 1].max_gap_ms:
                    continue
                if triple.observed_at_ms - p.first_ts > pattern.window_ms and pattern.length > 1:
                    continue
            if not step.matcher.matches(triple, binding):
                continue
            new_binding = step.matcher.bind(triple, binding)
            grown = _Partial(
                indices=(*(p.indices if p else ()), index),
                triples=(*(p.triples if p else ()), triple),
                binding=tuple(sorted(new_binding.items())),
                first_ts=p.first_ts if p else triple.observed_at_ms,
                last_ts=triple.observed_at_ms,
            )
            if len(grown.indices) == pattern.length:
                completions.append(grown)
            else:
                extensions.append(grown)

        if completions:
            winner = min(completions, key=lambda c: c.indices)
            self._partials[query.query_id] = []
            self._alert_seq += 1
            self.activity += 1
            return Alert(
                alert_id=f"a{self._alert_seq:05d}",
                query_id=query.query_id,
                pattern_name=pattern.name,
                fired_at_ms=triple.observed_at_ms,
                matched=winner.triples,
                bindings=winner.binding_dict(),
            )

        if extensions:
            partials.extend(extensions)
            self.activity += 1
        self._prune(query, triple.observed_at_ms)
        return None

    def _prune(self, query: UserQuery, now_ms: float) -> None:
        pattern = query.pattern
        kept = []
        for p in self._partials[query.query_id]:
            next_gap = pattern.steps[len(p.indices) - 1].max_gap_ms
            if next_gap is not None and now_ms - p.last_ts > next_gap:
                continue
            if pattern.length > 1 and now_ms - p.first_ts > pattern.window_ms:
                continue
            kept.append(p)
        self._partials[query.query_id] = kept

    def progress(self) -> list[NextStep]:
        """Per partially matched query: its next unmatched step, in
        registration order.  Feeds context identification and question
        generation."""
        out = []
        for query in self.queries:
            partials = self._partials.get(query.query_id, [])
            if not partials:
                continue
            longest = max(len(p.indices) for p in partials)
            step = query.pattern.steps[longest]
            subject = step.matcher.subject
            out.append(
                NextStep(
                    query_id=query.query_id,
                    pattern=query.pattern.name,
                    step_index=longest,
                    predicate=step.matcher.predicate,
                    target_type=subject.entity_type if subject.kind == "type" else None,
                )
            )
        return out

    def partial_counts(self) -> dict[str, int]:
        return {qid: len(ps) for qid, ps in self._partials.items()}

    def prune_now(self, now_ms: float) -> None:
        """Time-based pruning independent of triple arrival, so partials
        expire during quiet stretches too."""
        for query in self.queries:
            self._prune(query, now_ms)

    def clear_partials(self, query_id: str | None = None) -> None:
        """Drop partial matches (all queries, or one).  Used when a quiet
        context closes so its stale partials cannot reopen it."""
        if query_id is None:
            for qid in self._partials:
                self._partials[qid] = []
        else:
            self._partials[query_id] = []


@dataclass
class InteractiveAnswer:
    query_id: str
    text: str
    supporting: list[SemanticTriple]
    window: tuple[float, float]


def _sentence(triple: SemanticTriple) -> str:
    verb = triple.predicate.replace("_", " ")
    return f"At {triple.observed_at_ms / 1000.0:.1f}s, {triple.subject} {verb} {triple.object}."


def answer_interactive(
    query: UserQuery,
    triples: list[SemanticTriple],
    now_ms: float,
) -> InteractiveAnswer:
    """Build the narrative answer from the already-gathered triple pool.

    The query's window is resolved to an absolute interval here (ending at
    `now_ms`, or inside the parent's interval for refinements) and recorded
    on the query for later refinement chains.
    """
    if query.resolved_window is None:
        end = now_ms
        start = max(0.0, end - (query.window_ms or DEFAULT_INTERACTIVE_WINDOW_MS))
        query.resolved_window = (start, end)
    start, end = query.resolved_window

    if query.impossible:
        supporting: list[SemanticTriple] = []
    else:
        matcher = query.matcher()
        supporting = dedup_triples(
            [t for t in triples if start <= t.observed_at_ms <= end and matcher.matches(t)]
        )
    if supporting:
        text = " ".join(_sentence(t) for t in supporting)
    else:
        text = "No matching observations in this window."
    return InteractiveAnswer(
        query_id=query.query_id,
        text=text,
        supporting=supporting,
        window=(start, end),
    )


def refine(
    parent: UserQuery,
    refinement: str,
    kb: KnowledgeBase,
    query_id: str,
) -> UserQuery:
    """Narrow a parent interactive query: constraints intersect, so a child's
    results are always a subset of the parent's on the same store state."""
    if parent.kind != KIND_INTERACTIVE:
        raise ValueError("only interactive queries can be refined")
    if parent.resolved_window is None:
        raise ValueError("parent must be answered before refining")
    free_text, fields = _parse_kv(refinement, kb)

    impossible = parent.impossible
    about = parent.about
    if "about" in fields:
        if about is not None and fields["about"] != about:
            impossible = True
        else:
            about = fields["about"]
    focus = parent.focus
    if "focus" in fields:
        if focus is not None and fields["focus"] != focus:
            impossible = True
        else:
            focus = fields["focus"]

    p_start, p_end = parent.resolved_window
    if "window_ms" in fields:
        start = max(p_start, p_end - fields["window_ms"])
        window = (start, p_end)
    else:
        window = (p_start, p_end)

    return UserQuery(
        query_id=query_id,
        kind=KIND_INTERACTIVE,
        text=free_text or parent.text,
        window_ms=window[1] - window[0],
        about=about,
        focus=focus,
        refinement_of=parent.query_id,
        resolved_window=window,
        impossible=impossible,
    )
