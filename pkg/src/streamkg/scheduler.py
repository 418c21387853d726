"""Constraint resolution and frame admission.

resolve() picks the model assignment and admission rate that maximize
(admit_rate, -predicted_latency, -cost) lexicographically under latency,
memory, and cost budgets.  Admission itself runs through an error-diffusion
pacer kept in integer milli-fps units so exact rate ratios (8 of 24) never
hit float boundary noise, with a per-slot buffer that prefers the
highest-scoring frame when several frames compete for one admission slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .inference import ModelProfile
from .ingest import FrameRef

RATE_GRID_STEP = 0.25

DROP_PACE = "pace"
DROP_BACKLOG = "backlog"
DROP_BUDGET = "budget"


class Infeasible(Exception):
    """No model satisfies the constraints; carries the binding one."""

    def __init__(self, binding_constraint: str, detail: str) -> None:
        super().__init__(f"infeasible ({binding_constraint}): {detail}")
        self.binding_constraint = binding_constraint


@dataclass(frozen=True)
class ConstraintSpec:
    target_fps: float
    max_latency_ms: float
    memory_budget_mb: float
    cost_budget: float  # abstract cost units per second

    def __post_init__(self) -> None:
        for name in ("target_fps", "max_latency_ms", "memory_budget_mb", "cost_budget"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class SchedulerConfig:
    tokens_per_question: float = 2.0
    pipeline_overhead_ms: float = 10.0
    escalation_factor: float = 2.0
    queue_capacity: int = 4
    ewma_alpha: float = 0.2


@dataclass
class SchedulePlan:
    admit_rate: float
    model_assignment: dict[str, str]
    predicted_latency_ms: float
    loaded_models: tuple[str, ...]
    loaded_footprint_mb: float
    cost_rate: float
    escalated: bool = False

    @property
    def frame_model(self) -> str:
        return self.model_assignment["frame"]

    def utility(self) -> tuple[float, float, float]:
        return (self.admit_rate, -self.predicted_latency_ms, -self.cost_rate)


@dataclass
class PipelineState:
    queue_depths: dict[str, int] = field(default_factory=dict)
    latency_ewma_ms: dict[str, float] = field(default_factory=dict)
    active_context: bool = False
    drops: dict[str, int] = field(default_factory=dict)

    def observe_latency(self, model_id: str, latency_ms: float, alpha: float = 0.2) -> None:
        prev = self.latency_ewma_ms.get(model_id)
        if prev is None:
            self.latency_ewma_ms[model_id] = latency_ms
        else:
            self.latency_ewma_ms[model_id] = alpha * latency_ms + (1 - alpha) * prev

    def count_drop(self, reason: str) -> None:
        self.drops[reason] = self.drops.get(reason, 0) + 1


def predicted_latency_ms(profile: ModelProfile, question_load: float,
                         config: SchedulerConfig) -> float:
    tokens = question_load * config.tokens_per_question
    return profile.base_latency_ms + profile.per_token_ms * tokens + config.pipeline_overhead_ms


def grid_floor(rate: float, step: float = RATE_GRID_STEP) -> float:
    return math.floor(rate / step + 1e-9) * step


def resolve(
    constraints: ConstraintSpec,
    profiles: list[ModelProfile],
    question_load: float,
    state: PipelineState | None = None,
    config: SchedulerConfig | None = None,
) -> SchedulePlan:
    """Pick the feasible plan with lexicographically maximal utility.

    Models with an empty capability set are auxiliaries (summarizers and the
    like): they are always loaded and contribute footprint, but only capable
    models can take the per-frame question batch.
    """
    config = config or SchedulerConfig()
    aux = [p for p in profiles if not p.capabilities]
    candidates = [p for p in profiles if p.capabilities]
    if not candidates:
        raise Infeasible("capabilities", "no model with a non-empty capability set")
    aux_footprint = sum(p.footprint_mb for p in aux)

    best: SchedulePlan | None = None
    passed = {"memory": False, "latency": False}
    for p in candidates:
        if p.footprint_mb + aux_footprint > constraints.memory_budget_mb:
            continue
        passed["memory"] = True
        latency = predicted_latency_ms(p, question_load, config)
        if latency > constraints.max_latency_ms:
            continue
        passed["latency"] = True

        rate = min(constraints.target_fps, 1000.0 / latency)
        if p.cost_per_call * rate > constraints.cost_budget:
            # Cost binds: fall back to the coarser admission grid.
            rate = grid_floor(constraints.cost_budget / p.cost_per_call)
            rate = min(rate, constraints.target_fps, 1000.0 / latency)
            if rate < RATE_GRID_STEP:
                continue

        assignment = {"frame": p.model_id}
        if aux:
            assignment["summary"] = aux[0].model_id
        plan = SchedulePlan(
            admit_rate=rate,
            model_assignment=assignment,
            predicted_latency_ms=latency,
            loaded_models=(p.model_id, *(a.model_id for a in aux)),
            loaded_footprint_mb=p.footprint_mb + aux_footprint,
            cost_rate=p.cost_per_call * rate,
        )
        if best is None or plan.utility() > best.utility():
            best = plan

    if best is None:
        if not passed["memory"]:
            raise Infeasible("memory", f"no capable model fits {constraints.memory_budget_mb} MB")
        if not passed["latency"]:
            raise Infeasible("latency", f"no capable model meets {constraints.max_latency_ms} ms")
        raise Infeasible("cost", f"no capable model affordable at {constraints.cost_budget}/s")
    return best


class Scheduler:
    """Owns the current plan; re-resolves on escalation transitions."""

    def __init__(
        self,
        constraints: ConstraintSpec,
        profiles: list[ModelProfile],
        source_fps: float,
        config: SchedulerConfig | None = None,
    ) -> None:
        self.base_constraints = constraints
        self.profiles = profiles
        self.source_fps = source_fps
        self.config = config or SchedulerConfig()

    def resolve(self, question_load: float, state: PipelineState | None = None,
                escalated: bool = False) -> SchedulePlan:
        target = self.base_constraints.target_fps
        if escalated:
            target = target * self.config.escalation_factor
        target = min(target, self.source_fps)
        constraints = ConstraintSpec(
            target_fps=target,
            max_latency_ms=self.base_constraints.max_latency_ms,
            memory_budget_mb=self.base_constraints.memory_budget_mb,
            cost_budget=self.base_constraints.cost_budget,
        )
        plan = resolve(constraints, self.profiles, question_load, state, self.config)
        plan.escalated = escalated
        return plan

    def escalate(self, question_load: float, state: PipelineState,
                 context_active: bool) -> SchedulePlan:
        """Re-resolve with the escalated (or restored) rate target."""
        state.active_context = context_active
        return self.resolve(question_load, state, escalated=context_active)


@dataclass
class AdmitDecision:
    admitted: bool
    frame: FrameRef | None = None   # the frame to process (may be a buffered one)
    reason: str | None = None       # drop reason when admitted is False


class FramePacer:
    """Error-diffusion admission at plan.admit_rate frames per second.

    State lives in integer milli-fps units: an offer of frame seq s adds
    (s - prev_seq) * rate_milli to the accumulator and an admission costs
    source_fps * 1000, so exact ratios stay exact.  Offers refused by pace
    are remembered, and when the accumulator arms, the best-scoring frame
    seen in the slot wins (fresher frame on ties).
    """

    def __init__(self, source_fps: float, plan: SchedulePlan, cost_budget: float,
                 config: SchedulerConfig | None = None) -> None:
        self.source_fps = source_fps
        self.config = config or SchedulerConfig()
        self.cost_budget = cost_budget
        self._threshold = int(round(source_fps * 1000))
        self._acc = 0
        self._prev_seq: int | None = None
        self._slot_best: FrameRef | None = None
        self._rate_milli = 0
        self._cost_window_start = 0.0
        self._cost_spent = 0.0
        self.plan = plan
        self.set_plan(plan)

    def set_plan(self, plan: SchedulePlan) -> None:
        """Swap plans and rebase: the next offer is admitted immediately so
        an escalation reacts without waiting out the previous pace slot."""
        self.plan = plan
        self._rate_milli = int(round(plan.admit_rate * 1000))
        self._acc = self._threshold
        self._slot_best = None

    def _better(self, a: FrameRef, b: FrameRef) -> FrameRef:
        score_a = a.motion_score + a.scene_detail_score
        score_b = b.motion_score + b.scene_detail_score
        if score_a != score_b:
            return a if score_a > score_b else b
        return a if a.seq >= b.seq else b

    def _hold(self, frame: FrameRef, state: PipelineState, reason: str) -> AdmitDecision:
        self._slot_best = frame if self._slot_best is None else self._better(self._slot_best, frame)
        state.count_drop(reason)
        return AdmitDecision(admitted=False, reason=reason)

    def admit(self, frame: FrameRef, state: PipelineState,
              cost_per_call: float = 0.0) -> AdmitDecision:
        # The very first offer contributes no elapsed source time; afterwards
        # every skipped source frame counts toward the accumulator.
        gap = 0 if self._prev_seq is None else max(0, frame.seq - self._prev_seq)
        self._prev_seq = frame.seq
        self._acc += gap * self._rate_milli

        if self._acc < self._threshold:
            return self._hold(frame, state, DROP_PACE)
        if state.queue_depths.get("inference", 0) >= self.config.queue_capacity:
            return self._hold(frame, state, DROP_BACKLOG)

        now = frame.timestamp_ms
        if now - self._cost_window_start >= 1000.0:
            self._cost_window_start = now
            self._cost_spent = 0.0
        if self._cost_spent + cost_per_call > self.cost_budget + 1e-9:
            return self._hold(frame, state, DROP_BUDGET)

        chosen = frame if self._slot_best is None else self._better(self._slot_best, frame)
        self._slot_best = None
        # Cap the carried credit at one source frame's worth so a long stall
        # cannot burst multiple admissions into the same instant.
        self._acc = min(self._acc - self._threshold, self._rate_milli)
        self._cost_spent += cost_per_call
        return AdmitDecision(admitted=True, frame=chosen)
