"""Triple matchers and event-pattern definitions.

An event pattern is an ordered list of steps, each a triple matcher plus the
maximum gap allowed before the following step.  Subject/object atoms may be a
literal entity id, an entity type (optionally suffixed with digits so two
steps can reference distinct entities of the same type), or '*'.  A bare
type token used across steps refers to the same bound entity.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

_GAP_RE = re.compile(r"then<(\d+(?:\.\d+)?)s>")
_STEP_RE = re.compile(r"\(\s*(\S+)\s+(\S+)\s+(\S+)\s*\)")
_WINDOW_RE = re.compile(r"within<(\d+(?:\.\d+)?)s>")


class PatternSyntaxError(Exception):
    pass


@dataclass(frozen=True)
class Atom:
    """One subject/object slot of a matcher."""

    token: str          # literal text from the pattern
    kind: str           # "any" | "type" | "id"
    entity_type: str | None = None  # for kind == "type": the resolved type
    var_key: str | None = None      # binding key shared across steps

    def matches(self, value: str, value_type: str | None, binding: dict[str, str]) -> bool:
        if self.kind == "any":
            return True
        if self.kind == "id":
            return value == self.token
        # kind == "type": the value must be an entity of that type, and must
        # agree with any previous binding of the same variable.
        if value_type != self.entity_type:
            return False
        bound = binding.get(self.var_key)
        return bound is None or bound == value

    def bind(self, value: str, binding: dict[str, str]) -> None:
        if self.kind == "type" and self.var_key not in binding:
            binding[self.var_key] = value


@dataclass(frozen=True)
class TripleMatcher:
    subject: Atom
    predicate: str  # concrete predicate or "*"
    object: Atom

    def matches(self, triple, binding: dict[str, str]) -> bool:
        if self.predicate != "*" and triple.predicate != self.predicate:
            return False
        if not self.subject.matches(triple.subject, triple.subject_type, binding):
            return False
        # The object check must see the subject's tentative binding so a
        # variable repeated within one step pins the same entity.
        trial = dict(binding)
        self.subject.bind(triple.subject, trial)
        return self.object.matches(triple.object, triple.object_type, trial)

    def bind(self, triple, binding: dict[str, str]) -> dict[str, str]:
        out = dict(binding)
        self.subject.bind(triple.subject, out)
        self.object.bind(triple.object, out)
        return out


@dataclass(frozen=True)
class PatternStep:
    matcher: TripleMatcher
    # Max gap between this step's triple and the next step's triple.
    # The final step carries None.
    max_gap_ms: float | None


@dataclass(frozen=True)
class EventPattern:
    name: str
    steps: tuple[PatternStep, ...]
    window_ms: float

    @property
    def length(self) -> int:
        return len(self.steps)


def _classify_atom(token: str, entity_types: set[str], var_key: str | None = None) -> Atom:
    if token == "*":
        return Atom(token=token, kind="any")
    if token in entity_types:
        return Atom(token=token, kind="type", entity_type=token, var_key=var_key or token)
    stem = token.rstrip("0123456789")
    if stem and stem in entity_types and stem != token:
        # Suffixed type token: a named variable of that type, e.g. vehicle2.
        return Atom(token=token, kind="type", entity_type=stem, var_key=token)
    return Atom(token=token, kind="id")


def parse_pattern_body(
    name: str,
    body: str,
    entity_types: set[str],
    known_predicates: set[str] | None = None,
) -> EventPattern:
    """Parse '(subj pred obj) then<Ns> (subj pred obj) ... [within<Ns>]'.

    A bare type token (e.g. 'person') names the same entity in every step
    where it appears, except that using it for both subject and object of a
    single step binds the two slots independently.  Use suffixed tokens
    (person1, person2) for explicit identities.
    """
    window_ms = None
    wm = _WINDOW_RE.search(body)
    if wm:
        window_ms = float(wm.group(1)) * 1000.0
        body = body[: wm.start()] + body[wm.end():]

    steps_raw = _STEP_RE.findall(body)
    if not steps_raw:
        raise PatternSyntaxError(f"pattern {name!r}: no steps found in {body!r}")
    gaps = [float(g) * 1000.0 for g in _GAP_RE.findall(body)]
    if len(gaps) != len(steps_raw) - 1:
        raise PatternSyntaxError(
            f"pattern {name!r}: {len(steps_raw)} steps need {len(steps_raw) - 1} "
            f"then<..> connectors, found {len(gaps)}"
        )
    leftover = _WINDOW_RE.sub("", _GAP_RE.sub("", _STEP_RE.sub("", body))).strip()
    if leftover:
        raise PatternSyntaxError(f"pattern {name!r}: unparsed text {leftover!r}")

    steps = []
    for i, (subj, pred, obj) in enumerate(steps_raw):
        if known_predicates is not None and pred != "*" and pred not in known_predicates:
            raise PatternSyntaxError(f"pattern {name!r}: unknown predicate {pred!r}")
        subj_atom = _classify_atom(subj, entity_types)
        # The same bare type in both slots of one step binds two separate
        # variables (the two parties of a collision); use suffixed tokens to
        # correlate a specific party across steps.
        obj_key = f"{obj}:obj" if obj == subj and obj in entity_types else None
        obj_atom = _classify_atom(obj, entity_types, var_key=obj_key)
        steps.append(
            PatternStep(
                matcher=TripleMatcher(subject=subj_atom, predicate=pred, object=obj_atom),
                max_gap_ms=gaps[i] if i < len(gaps) else None,
            )
        )
    if window_ms is None:
        window_ms = sum(g for g in gaps) if gaps else 0.0
    return EventPattern(name=name, steps=tuple(steps), window_ms=window_ms)


@dataclass(frozen=True)
class QueryMatcher:
    """Flat triple filter used by interactive queries, the KG query surface,
    and the serving layer.  `entity` matches either the subject or object
    slot; the other fields pin their slot exactly.  None means wildcard."""

    subject: str | None = None
    predicate: str | None = None
    object: str | None = None
    entity: str | None = None

    def matches(self, triple) -> bool:
        if self.subject is not None and triple.subject != self.subject:
            return False
        if self.predicate is not None and triple.predicate != self.predicate:
            return False
        if self.object is not None and triple.object != self.object:
            return False
        if self.entity is not None and self.entity not in (triple.subject, triple.object):
            return False
        return True
