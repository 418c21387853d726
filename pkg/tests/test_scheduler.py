from __future__ import annotations

import random

import pytest

from streamkg.inference import ModelProfile
from streamkg.ingest import FrameRef, FrameSpec
from streamkg.scheduler import (
    DROP_BACKLOG,
    DROP_BUDGET,
    DROP_PACE,
    ConstraintSpec,
    FramePacer,
    Infeasible,
    PipelineState,
    Scheduler,
    SchedulerConfig,
    SchedulePlan,
    grid_floor,
    predicted_latency_ms,
    resolve,
)

from oracles import oracle_resolve, random_resolve_instance


def profile(model_id="light", base=80.0, per_token=4.0, footprint=8000.0,
            cost=0.0, caps=("*",), tier="lightweight"):
    return ModelProfile(
        model_id=model_id, tier=tier, base_latency_ms=base, per_token_ms=per_token,
        footprint_mb=footprint, cost_per_call=cost, capabilities=frozenset(caps),
    )


def constraints(target=8.0, latency=1000.0, memory=10000.0, cost=1000.0):
    return ConstraintSpec(
        target_fps=target, max_latency_ms=latency,
        memory_budget_mb=memory, cost_budget=cost,
    )


def frame(seq, motion=0.5, detail=0.5):
    spec = FrameSpec(seq=seq, motion_score=motion, scene_detail_score=detail)
    return FrameRef(
        source_id="s", seq=seq, timestamp_ms=seq * 1000.0 / 24.0, payload=spec,
        motion_score=motion, scene_detail_score=detail,
    )


# --- resolve -------------------------------------------------------------


def test_lightweight_latency_profile_value():
    # 80 + 4 * (4 questions * 2 tokens) + 10 = 122 ms
    p = profile()
    assert predicted_latency_ms(p, 4.0, SchedulerConfig()) == pytest.approx(122.0)


def test_heavyweight_latency_profile_value():
    p = profile(model_id="heavy", base=2500.0, per_token=30.0, footprint=18000.0,
                tier="heavyweight")
    cfg = SchedulerConfig(tokens_per_question=120.0)
    assert predicted_latency_ms(p, 1.0, cfg) == pytest.approx(6110.0)


def test_resolve_latency_capped_rate():
    plan = resolve(constraints(target=8.0), [profile()], 4.0)
    assert plan.admit_rate == pytest.approx(8.0)
    assert plan.predicted_latency_ms == pytest.approx(122.0)
    # Escalated target above the latency cap lands on the cap.
    plan16 = resolve(constraints(target=16.0, latency=8000.0), [profile()], 4.0)
    assert plan16.admit_rate == pytest.approx(1000.0 / 122.0)


def test_resolve_heavyweight_below_a_third_fps():
    p = profile(model_id="heavy", base=2500.0, per_token=30.0, footprint=18000.0,
                tier="heavyweight")
    cfg = SchedulerConfig(tokens_per_question=120.0)
    plan = resolve(constraints(target=8.0, latency=8000.0, memory=18000.0),
                   [p], 1.0, config=cfg)
    assert plan.admit_rate < 1.0 / 3.0
    assert plan.admit_rate == pytest.approx(1000.0 / 6110.0)


def test_resolve_prefers_higher_rate_then_latency_then_cost():
    fast = profile(model_id="fast", base=80.0)
    slow = profile(model_id="slow", base=400.0, per_token=6.0, footprint=2000.0)
    plan = resolve(constraints(), [slow, fast], 4.0)
    assert plan.frame_model == "fast"
    # Equal achievable rate, lower latency wins.
    a = profile(model_id="a", base=80.0)
    b = profile(model_id="b", base=90.0)
    plan = resolve(constraints(target=4.0), [b, a], 4.0)
    assert plan.frame_model == "a"


def test_resolve_aux_models_always_loaded():
    aux = profile(model_id="summarizer", base=400.0, footprint=2000.0, caps=())
    plan = resolve(constraints(), [profile(), aux], 4.0)
    assert plan.loaded_models == ("light", "summarizer")
    assert plan.loaded_footprint_mb == pytest.approx(10000.0)
    assert plan.model_assignment["summary"] == "summarizer"


def test_resolve_memory_excludes_model():
    heavy = profile(model_id="heavy", footprint=18000.0, tier="heavyweight")
    plan = resolve(constraints(memory=10000.0), [heavy, profile()], 4.0)
    assert plan.frame_model == "light"


def test_infeasible_precedence():
    with pytest.raises(Infeasible) as err:
        resolve(constraints(memory=500.0), [profile()], 4.0)
    assert err.value.binding_constraint == "memory"
    with pytest.raises(Infeasible) as err:
        resolve(constraints(latency=50.0), [profile()], 4.0)
    assert err.value.binding_constraint == "latency"
    with pytest.raises(Infeasible) as err:
        resolve(constraints(cost=0.01), [profile(cost=5.0)], 4.0)
    assert err.value.binding_constraint == "cost"
    with pytest.raises(Infeasible) as err:
        resolve(constraints(), [profile(caps=())], 4.0)
    assert err.value.binding_constraint == "capabilities"


def test_cost_binding_floors_to_grid():
    # Budget 1.0/s at 0.3/call allows 3.33 calls/s -> grid floor 3.25.
    plan = resolve(constraints(cost=1.0), [profile(cost=0.3)], 4.0)
    assert plan.admit_rate == pytest.approx(3.25)
    assert plan.cost_rate <= 1.0 + 1e-9


def test_grid_floor_exact_boundaries():
    assert grid_floor(3.25) == pytest.approx(3.25)
    assert grid_floor(3.249) == pytest.approx(3.0)
    assert grid_floor(0.16366612) == pytest.approx(0.0)


def test_resolve_matches_bruteforce_oracle_sample():
    rng = random.Random(202)
    checked = 0
    for _ in range(60):
        cons, profiles, load, config = random_resolve_instance(rng)
        expected = oracle_resolve(cons, profiles, load, config)
        if expected is None:
            with pytest.raises(Infeasible):
                resolve(cons, profiles, load, config=config)
            continue
        plan = resolve(cons, profiles, load, config=config)
        assert plan.utility() == expected
        assert plan.predicted_latency_ms <= cons.max_latency_ms
        assert plan.loaded_footprint_mb <= cons.memory_budget_mb
        checked += 1
    assert checked > 20  # the generator must produce plenty of feasible cases


# --- scheduler wrapper ----------------------------------------------------


def make_scheduler(source_fps=24.0):
    return Scheduler(constraints(), [profile()], source_fps)


def test_scheduler_caps_target_at_source_fps():
    sched = Scheduler(constraints(target=40.0), [profile()], source_fps=24.0)
    plan = sched.resolve(4.0)
    assert plan.admit_rate <= 24.0


def test_escalate_doubles_target_with_cap():
    sched = make_scheduler()
    state = PipelineState()
    base = sched.resolve(4.0)
    assert base.admit_rate == pytest.approx(8.0)
    up = sched.escalate(4.0, state, context_active=True)
    assert up.escalated
    # Doubled target 16 collides with the 122 ms latency cap.
    assert up.admit_rate == pytest.approx(1000.0 / 122.0)
    down = sched.escalate(4.0, state, context_active=False)
    assert not down.escalated
    assert down.admit_rate == base.admit_rate


# --- pacer ----------------------------------------------------------------


def run_pacer(pacer, seqs, state=None, cost_per_call=0.0):
    state = state or PipelineState()
    admitted = []
    for s in seqs:
        d = pacer.admit(frame(s), state, cost_per_call)
        if d.admitted:
            admitted.append(d.frame.seq)
    return admitted, state


def plan_with_rate(rate):
    return SchedulePlan(
        admit_rate=rate, model_assignment={"frame": "light"},
        predicted_latency_ms=122.0, loaded_models=("light",),
        loaded_footprint_mb=8000.0, cost_rate=0.0,
    )


def test_full_rate_admits_every_frame():
    pacer = FramePacer(24.0, plan_with_rate(24.0), cost_budget=1000.0)
    admitted, _ = run_pacer(pacer, range(48))
    assert admitted == list(range(48))


def test_exact_third_rate_admits_every_third_frame():
    pacer = FramePacer(24.0, plan_with_rate(8.0), cost_budget=1000.0)
    admitted, state = run_pacer(pacer, range(96))
    assert admitted == list(range(0, 96, 3))
    assert state.drops[DROP_PACE] == 96 - len(admitted)


def test_fractional_rate_stays_within_one_frame_of_ideal():
    rate = 1000.0 / 122.0  # 8.197 fps
    pacer = FramePacer(24.0, plan_with_rate(rate), cost_budget=1000.0)
    admitted, _ = run_pacer(pacer, range(24 * 50))
    assert abs(len(admitted) - rate * 50.0) <= 1.0
    # No one-second stretch may exceed ceil(rate) admissions.
    for start in range(0, 24 * 49, 24):
        in_window = [s for s in admitted if start <= s < start + 24]
        assert len(in_window) <= 9


def test_slot_buffer_prefers_high_scoring_frame():
    pacer = FramePacer(24.0, plan_with_rate(8.0), cost_budget=1000.0)
    state = PipelineState()
    assert pacer.admit(frame(0), state).admitted
    # Two held offers accumulate; the slot arms on the third.
    assert not pacer.admit(frame(1, motion=0.9, detail=0.9), state).admitted
    assert not pacer.admit(frame(2, motion=0.1, detail=0.1), state).admitted
    d = pacer.admit(frame(3, motion=0.2, detail=0.2), state)
    assert d.admitted
    assert d.frame.seq == 1  # the buffered high-motion frame wins the slot


def test_set_plan_rebases_for_immediate_admission():
    pacer = FramePacer(24.0, plan_with_rate(8.0), cost_budget=1000.0)
    state = PipelineState()
    assert pacer.admit(frame(0), state).admitted
    assert not pacer.admit(frame(1), state).admitted
    pacer.set_plan(plan_with_rate(1000.0 / 122.0))
    assert pacer.admit(frame(2), state).admitted


def test_long_stall_does_not_burst():
    pacer = FramePacer(24.0, plan_with_rate(8.0), cost_budget=1000.0)
    state = PipelineState()
    assert pacer.admit(frame(0), state).admitted
    # 50 source frames pass unoffered; only one admission fires immediately,
    # with at most one source frame's credit carried forward.
    assert pacer.admit(frame(50), state).admitted
    assert not pacer.admit(frame(51), state).admitted
    assert pacer.admit(frame(52), state).admitted


def test_backlog_drop_when_queue_full():
    pacer = FramePacer(24.0, plan_with_rate(24.0), cost_budget=1000.0)
    state = PipelineState(queue_depths={"inference": 4})
    d = pacer.admit(frame(0), state)
    assert not d.admitted and d.reason == DROP_BACKLOG
    state.queue_depths["inference"] = 0
    assert pacer.admit(frame(1), state).admitted


def test_budget_drop_within_cost_window():
    pacer = FramePacer(24.0, plan_with_rate(24.0), cost_budget=1.0)
    state = PipelineState()
    admitted, state = run_pacer(pacer, range(48), state=state, cost_per_call=0.4)
    # 1.0/s budget at 0.4/call affords 2 calls per one-second window.
    assert len([s for s in admitted if s < 24]) == 2
    assert len(admitted) == 4
    assert state.drops[DROP_BUDGET] == 44


def test_ewma_latency_update():
    state = PipelineState()
    state.observe_latency("m", 100.0, alpha=0.2)
    assert state.latency_ewma_ms["m"] == pytest.approx(100.0)
    state.observe_latency("m", 200.0, alpha=0.2)
    assert state.latency_ewma_ms["m"] == pytest.approx(0.2 * 200.0 + 0.8 * 100.0)
