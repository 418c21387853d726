from __future__ import annotations

import pytest

from streamkg.clock import VirtualClock
from streamkg.inference import (
    MAX_QUESTIONS_PER_PROMPT,
    WILDCARD,
    DuplicateModel,
    InferenceEngine,
    MockBackend,
    ModelProfile,
    Prompt,
    Question,
    UnknownModel,
    simulated_latency_ms,
)
from streamkg.ingest import FrameRef, FrameSpec, GroundFact


def profile(model_id="light", tier="lightweight", base=80.0, per_token=4.0,
            footprint=8000.0, cost=0.0, caps=("*",)):
    return ModelProfile(
        model_id=model_id,
        tier=tier,
        base_latency_ms=base,
        per_token_ms=per_token,
        footprint_mb=footprint,
        cost_per_call=cost,
        capabilities=frozenset(caps),
    )


def frame(facts=(), seq=0):
    spec = FrameSpec(seq=seq, motion_score=0.5, scene_detail_score=0.5)
    spec.facts.extend(facts)
    return FrameRef(
        source_id="s", seq=seq, timestamp_ms=seq * 125.0, payload=spec,
        motion_score=0.5, scene_detail_score=0.5,
    )


def question(qid="q1", predicate="damaged", target_type=None, tokens=2):
    return Question(qid=qid, text="?", predicate=predicate,
                    target_type=target_type, expected_tokens=tokens)


def test_latency_formula():
    p = profile()
    prompt = Prompt(frame=frame(), questions=[question(tokens=2)] * 4, model_id="light")
    # 80 + 4 * (4 questions * 2 tokens) = 112
    assert simulated_latency_ms(p, prompt) == pytest.approx(112.0)


def test_prompt_enforces_question_cap():
    qs = [question(qid=f"q{i}") for i in range(MAX_QUESTIONS_PER_PROMPT + 1)]
    with pytest.raises(ValueError):
        Prompt(frame=frame(), questions=qs, model_id="light")
    with pytest.raises(ValueError):
        Prompt(frame=frame(), questions=[], model_id="light")


def test_mock_backend_filters_by_predicate_and_type():
    facts = [
        GroundFact("car1", "damaged", "true", subject_type="vehicle"),
        GroundFact("p1", "lying_on", "road", subject_type="person", object_type="road_object"),
    ]
    backend = MockBackend()
    answers = backend.answer(profile(), Prompt(
        frame=frame(facts), questions=[
            question(qid="q1", predicate="damaged"),
            question(qid="q2", predicate="lying_on", target_type="vehicle"),
            question(qid="q3", predicate=WILDCARD),
        ], model_id="light"))
    assert [f.predicate for f in answers[0].facts] == ["damaged"]
    assert answers[1].facts == []  # type filter excludes the person fact
    assert answers[1].text == "nothing observed"
    assert len(answers[2].facts) == 2  # wildcard sees everything


def test_mock_backend_incapable_model_returns_empty():
    narrow = profile(caps=("lying_on",))
    facts = [GroundFact("car1", "damaged", "true", subject_type="vehicle")]
    answers = MockBackend().answer(narrow, Prompt(
        frame=frame(facts), questions=[question(predicate="damaged")], model_id="light"))
    assert answers[0].facts == []


def test_engine_advances_clock_and_tallies():
    clock = VirtualClock()
    engine = InferenceEngine(clock)
    engine.register_backend(profile(), MockBackend())
    prompt = Prompt(frame=frame(), questions=[question()] * 4, model_id="light")
    resp = engine.infer(prompt)
    assert resp.simulated_latency_ms == pytest.approx(112.0)
    assert clock.now_ms() == pytest.approx(112.0)
    assert engine.calls["light"] == 1
    engine.infer(prompt)
    assert engine.calls["light"] == 2
    assert engine.total_latency_ms["light"] == pytest.approx(224.0)


def test_engine_rejects_duplicate_and_unknown_models():
    engine = InferenceEngine(VirtualClock())
    engine.register_backend(profile(), MockBackend())
    with pytest.raises(DuplicateModel):
        engine.register_backend(profile(), MockBackend())
    with pytest.raises(UnknownModel):
        engine.infer(Prompt(frame=frame(), questions=[question()], model_id="ghost"))


def test_lightweight_listing():
    engine = InferenceEngine(VirtualClock())
    engine.register_backend(profile(), MockBackend())
    engine.register_backend(profile(model_id="heavy", tier="heavyweight"), MockBackend())
    assert [p.model_id for p in engine.lightweight_models()] == ["light"]


def test_tier_filter_prefers_lightweight_and_reports_relevance():
    clock = VirtualClock()
    engine = InferenceEngine(clock)
    engine.register_backend(profile(), MockBackend())
    facts = [GroundFact("car1", "damaged", "true", subject_type="vehicle")]
    relevant, resp = engine.tier_filter(
        frame(facts), [question(predicate="damaged"), question(qid="q2", predicate="fleeing")])
    assert relevant is True
    assert resp.model_id == "light"
    empty_relevant, _ = engine.tier_filter(frame(), [question(predicate="damaged")])
    assert empty_relevant is False
