"""Model profiles, backends, and the tiered inference engine.

Latency is simulated from the profile: base_latency_ms plus per_token_ms
times the total expected output tokens of the prompt's question batch.  The
mock backend answers from the scenario's scripted facts; the remote backend
speaks a small HTTP protocol and runs shipped regex extractors over the
returned free text.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from .clock import Clock
from .ingest import FrameRef, GroundFact

log = logging.getLogger(__name__)

TIER_LIGHTWEIGHT = "lightweight"
TIER_HEAVYWEIGHT = "heavyweight"

# Wildcard capability/predicate: the model answers any question, and a
# question with this predicate asks for everything visible in the frame.
WILDCARD = "*"

MAX_QUESTIONS_PER_PROMPT = 5


class DuplicateModel(Exception):
    pass


class UnknownModel(Exception):
    pass


class BackendUnavailable(Exception):
    pass


class Timeout(Exception):
    pass


@dataclass(frozen=True)
class ModelProfile:
    model_id: str
    tier: str
    base_latency_ms: float
    per_token_ms: float
    footprint_mb: float
    cost_per_call: float
    capabilities: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.tier not in (TIER_LIGHTWEIGHT, TIER_HEAVYWEIGHT):
            raise ValueError(f"unknown tier {self.tier!r}")
        if self.base_latency_ms < 0 or self.per_token_ms < 0 or self.footprint_mb < 0:
            raise ValueError(f"negative latency/footprint in profile {self.model_id}")

    def can_answer(self, predicate: str) -> bool:
        return WILDCARD in self.capabilities or predicate in self.capabilities


@dataclass(frozen=True)
class Question:
    qid: str
    text: str
    predicate: str
    target_type: str | None = None  # entity type the question is about, if any
    expected_tokens: int = 2
    priority: float = 0.5


@dataclass
class Prompt:
    frame: FrameRef
    questions: list[Question]
    model_id: str

    def __post_init__(self) -> None:
        if not 1 <= len(self.questions) <= MAX_QUESTIONS_PER_PROMPT:
            raise ValueError(f"prompt must carry 1..{MAX_QUESTIONS_PER_PROMPT} questions")

    @property
    def expected_tokens(self) -> int:
        return sum(q.expected_tokens for q in self.questions)


@dataclass
class Answer:
    qid: str
    facts: list[GroundFact]
    text: str
    confidence: float = 1.0


@dataclass
class InferenceResponse:
    frame_seq: int
    frame_ts_ms: float
    answers: list[Answer]
    simulated_latency_ms: float
    model_id: str


def simulated_latency_ms(profile: ModelProfile, prompt: Prompt) -> float:
    return profile.base_latency_ms + profile.per_token_ms * prompt.expected_tokens


def _render_fact(fact: GroundFact) -> str:
    return f"{fact.subject} {fact.predicate.replace('_', ' ')} {fact.object}"


class MockBackend:
    """Answers questions from the scripted frame payload.

    A question matches a fact when the predicate agrees (or the question is
    the wildcard) and, if the question names a target entity type, the
    fact's subject has that type.  Questions outside the model's
    capabilities return empty answers; latency is charged regardless.
    """

    def answer(self, profile: ModelProfile, prompt: Prompt) -> list[Answer]:
        answers = []
        for q in prompt.questions:
            if not profile.can_answer(q.predicate):
                answers.append(Answer(qid=q.qid, facts=[], text=""))
                continue
            facts = [
                f for f in prompt.frame.payload.facts
                if (q.predicate == WILDCARD or f.predicate == q.predicate)
                and (q.target_type is None or f.subject_type == q.target_type)
            ]
            text = "; ".join(_render_fact(f) for f in facts) if facts else "nothing observed"
            answers.append(Answer(qid=q.qid, facts=facts, text=text))
        return answers


class RemoteBackend:
    """HTTP backend: POST {endpoint}/infer with the question batch.

    Free-text answers are turned into facts by the KB's per-predicate
    extractor regexes (named groups `subject` and `object`)."""

    def __init__(self, endpoint: str, extractors: dict[str, re.Pattern] | None = None) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.extractors = extractors or {}
        self._client = None

    def _http(self):
        if self._client is None:
            import httpx

            self._client = httpx.Client()
        return self._client

    def _extract(self, question: Question, text: str) -> list[GroundFact]:
        pattern = self.extractors.get(question.predicate)
        if pattern is None:
            return []
        facts = []
        for m in pattern.finditer(text):
            groups = m.groupdict()
            facts.append(
                GroundFact(
                    subject=groups.get("subject", ""),
                    predicate=question.predicate,
                    object=groups.get("object", ""),
                )
            )
        return facts

    def answer(self, profile: ModelProfile, prompt: Prompt) -> tuple[list[Answer], float]:
        import httpx

        predicted = simulated_latency_ms(profile, prompt)
        body = {
            "model_id": profile.model_id,
            "frame_payload": {
                "source_id": prompt.frame.source_id,
                "seq": prompt.frame.seq,
                "timestamp_ms": prompt.frame.timestamp_ms,
            },
            "questions": [{"qid": q.qid, "text": q.text} for q in prompt.questions],
        }
        try:
            resp = self._http().post(
                f"{self.endpoint}/infer",
                json=body,
                timeout=max(0.001, 10.0 * predicted / 1000.0),
            )
            resp.raise_for_status()
        except httpx.TimeoutException as exc:
            raise Timeout(f"{profile.model_id}: no reply within 10x predicted latency") from exc
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"{profile.model_id}: {exc}") from exc
        payload = resp.json()
        by_qid = {a["qid"]: a.get("text", "") for a in payload.get("answers", [])}
        answers = []
        for q in prompt.questions:
            text = by_qid.get(q.qid, "")
            answers.append(Answer(qid=q.qid, facts=self._extract(q, text), text=text))
        return answers, float(payload.get("latency_ms", predicted))


@dataclass
class _Registration:
    profile: ModelProfile
    backend: object


class InferenceEngine:
    """Registry of model backends; charges simulated latency on the clock."""

    def __init__(self, clock: Clock) -> None:
        self.clock = clock
        self._models: dict[str, _Registration] = {}
        self.calls: dict[str, int] = {}
        self.total_latency_ms: dict[str, float] = {}

    def register_backend(self, profile: ModelProfile, backend: object) -> None:
        if profile.model_id in self._models:
            raise DuplicateModel(profile.model_id)
        self._models[profile.model_id] = _Registration(profile, backend)

    def profile(self, model_id: str) -> ModelProfile:
        try:
            return self._models[model_id].profile
        except KeyError:
            raise UnknownModel(model_id) from None

    def profiles(self) -> list[ModelProfile]:
        return [r.profile for r in self._models.values()]

    def lightweight_models(self) -> list[ModelProfile]:
        return [r.profile for r in self._models.values() if r.profile.tier == TIER_LIGHTWEIGHT]

    def infer(self, prompt: Prompt) -> InferenceResponse:
        reg = self._models.get(prompt.model_id)
        if reg is None:
            raise UnknownModel(prompt.model_id)
        result = reg.backend.answer(reg.profile, prompt)
        if isinstance(result, tuple):
            answers, latency = result
        else:
            answers, latency = result, simulated_latency_ms(reg.profile, prompt)
        self.clock.advance_ms(latency)
        self.calls[prompt.model_id] = self.calls.get(prompt.model_id, 0) + 1
        self.total_latency_ms[prompt.model_id] = (
            self.total_latency_ms.get(prompt.model_id, 0.0) + latency
        )
        return InferenceResponse(
            frame_seq=prompt.frame.seq,
            frame_ts_ms=prompt.frame.timestamp_ms,
            answers=answers,
            simulated_latency_ms=latency,
            model_id=prompt.model_id,
        )

    def tier_filter(self, frame: FrameRef, filter_questions: list[Question],
                    model_id: str | None = None) -> tuple[bool, InferenceResponse]:
        """Run a cheap relevance check before heavyweight analysis.

        Returns (relevant, response); relevant is True when any answer came
        back non-empty.  Requires a registered lightweight model.
        """
        if model_id is None:
            lights = self.lightweight_models()
            if not lights:
                raise UnknownModel("tier_filter requires a lightweight model")
            model_id = lights[0].model_id
        elif self.profile(model_id).tier != TIER_LIGHTWEIGHT:
            raise ValueError(f"tier_filter model {model_id} is not lightweight")
        response = self.infer(Prompt(frame=frame, questions=filter_questions, model_id=model_id))
        relevant = any(a.facts for a in response.answers)
        return relevant, response
