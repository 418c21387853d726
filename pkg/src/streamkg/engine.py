"""The frame-processing engine: one serial loop over a scenario stream.

Per admitted frame: generate the question batch, run inference (which
advances the virtual clock by the simulated latency), fold the answers into
the live KG, feed the delta to the standing matcher, then update the
temporal context and the escalation state.  Every decision is appended to
the control-event log, which doubles as the metrics source and the test
seam: two runs of the same scenario and config must produce byte-identical
logs.

Modes:
  baseline      one heavyweight model asked a single catch-all description
                question per sampled frame; no context tracking, no
                escalation, no generated questions.
  streamingrag  lightweight models driven by generated question sets, with
                context-directed escalation and epoch resets.
"""

from __future__ import annotations

import json
import logging
import tempfile
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .clock import Clock, VirtualClock
from .context import (
    STEADY_LABEL,
    ContextConfig,
    QuestionGenerator,
    TemporalContext,
    close_context,
    identify,
)
from .inference import (
    TIER_HEAVYWEIGHT,
    TIER_LIGHTWEIGHT,
    WILDCARD,
    InferenceEngine,
    MockBackend,
    ModelProfile,
    Prompt,
    Question,
)
from .ingest import END_OF_STREAM, FrameRef, Scenario, open_stream
from .knowledge import KnowledgeBuilder, SemanticTriple, dedup_triples, init_kb
from .lambda_store import LambdaStore
from .patterns import QueryMatcher
from .query import (
    KIND_STANDING,
    Alert,
    InteractiveAnswer,
    StandingMatcher,
    UnknownQuery,
    UserQuery,
    answer_interactive,
    parse,
    refine,
)
from .scheduler import (
    ConstraintSpec,
    FramePacer,
    PipelineState,
    Scheduler,
    SchedulerConfig,
    SchedulePlan,
)

log = logging.getLogger(__name__)

MODE_BASELINE = "baseline"
MODE_STREAMING = "streamingrag"
MODES = (MODE_BASELINE, MODE_STREAMING)


class ConfigError(Exception):
    pass


def data_dir() -> Path:
    return Path(str(resources.files("streamkg").joinpath("data")))


@dataclass
class EngineConfig:
    mode: str
    kb_path: str
    target_fps: float = 8.0
    max_latency_ms: float = 8000.0
    memory_budget_mb: float = 10000.0
    cost_budget: float = 1000.0
    cost_per_call: float = 0.0
    models: list[ModelProfile] = field(default_factory=list)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    context: ContextConfig = field(default_factory=ContextConfig)
    dedup_window_ms: float = 2000.0
    standing_queries: list[str] = field(default_factory=list)
    store_dir: str | None = None
    compact_interval_ms: float = 60_000.0
    compact_max_entries: int = 10_000
    baseline_question_text: str = "Describe everything happening in the scene."
    baseline_question_tokens: int = 120

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        tiers = [m.tier for m in self.models]
        if self.mode == MODE_BASELINE and TIER_HEAVYWEIGHT not in tiers:
            raise ConfigError("baseline mode needs a heavyweight model")
        if self.mode == MODE_STREAMING and TIER_LIGHTWEIGHT not in tiers:
            raise ConfigError("streamingrag mode needs a lightweight model")

    @staticmethod
    def from_dict(raw: dict) -> EngineConfig:
        models = [
            ModelProfile(
                model_id=m["model_id"],
                tier=m["tier"],
                base_latency_ms=float(m["base_latency_ms"]),
                per_token_ms=float(m["per_token_ms"]),
                footprint_mb=float(m["footprint_mb"]),
                cost_per_call=float(m.get("cost_per_call", 0.0)),
                capabilities=frozenset(m.get("capabilities", [])),
            )
            for m in raw.get("models", [])
        ]
        kb_path = raw["kb"]
        if not Path(kb_path).is_absolute() and not Path(kb_path).exists():
            kb_path = str(data_dir() / kb_path)
        cfg = EngineConfig(
            mode=raw["mode"],
            kb_path=kb_path,
            target_fps=float(raw.get("target_fps", 8.0)),
            max_latency_ms=float(raw.get("max_latency_ms", 8000.0)),
            memory_budget_mb=float(raw.get("memory_budget_mb", 10000.0)),
            cost_budget=float(raw.get("cost_budget", 1000.0)),
            cost_per_call=float(raw.get("cost_per_call", 0.0)),
            models=models,
            scheduler=SchedulerConfig(**raw.get("scheduler", {})),
            context=ContextConfig(**raw.get("context", {})),
            dedup_window_ms=float(raw.get("dedup_window_ms", 2000.0)),
            standing_queries=list(raw.get("standing_queries", [])),
            store_dir=raw.get("store_dir"),
            compact_interval_ms=float(raw.get("compact_interval_ms", 60_000.0)),
            compact_max_entries=int(raw.get("compact_max_entries", 10_000)),
        )
        if "baseline_question_text" in raw:
            cfg.baseline_question_text = raw["baseline_question_text"]
        if "baseline_question_tokens" in raw:
            cfg.baseline_question_tokens = int(raw["baseline_question_tokens"])
        cfg.validate()
        return cfg

    @staticmethod
    def from_file(path: str | Path) -> EngineConfig:
        with open(path) as fh:
            return EngineConfig.from_dict(json.load(fh))


def builtin_config(mode: str) -> EngineConfig:
    """Load one of the shipped mode configs."""
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    return EngineConfig.from_file(data_dir() / "configs" / f"{mode}.json")


def triple_to_dict(t: SemanticTriple) -> dict:
    return {
        "uid": t.uid,
        "subject": t.subject,
        "predicate": t.predicate,
        "object": t.object,
        "confidence": round(t.confidence, 4),
        "t": round(t.observed_at_ms / 1000.0, 3),
        "frame_seq": t.frame_seq,
        "model_id": t.model_id,
        "epoch": t.epoch,
        "subject_type": t.subject_type,
        "object_type": t.object_type,
    }


def alert_to_dict(a: Alert) -> dict:
    return {
        "alert_id": a.alert_id,
        "query_id": a.query_id,
        "pattern": a.pattern_name,
        "t": round(a.fired_at_ms / 1000.0, 3),
        "bindings": dict(sorted(a.bindings.items())),
        "matched": [triple_to_dict(t) for t in a.matched],
    }


class StreamEngine:
    """Runs one scenario under one config on a virtual clock."""

    def __init__(
        self,
        config: EngineConfig,
        scenario: Scenario,
        store_dir: str | None = None,
        clock: Clock | None = None,
    ) -> None:
        config.validate()
        self.config = config
        self.scenario = scenario
        self.mode = config.mode
        self.clock = clock if clock is not None else VirtualClock()

        self.kb = init_kb(config.kb_path)
        sched_cfg = config.scheduler
        if self.mode == MODE_BASELINE:
            # The single catch-all question carries the whole token budget.
            sched_cfg = replace(sched_cfg, tokens_per_question=float(config.baseline_question_tokens))
            self._question_load = 1.0
        else:
            self._question_load = float(config.context.question_set_size)
        self._sched_cfg = sched_cfg

        self.inference = InferenceEngine(self.clock)
        backend = MockBackend()
        for profile in self._select_profiles(config):
            self.inference.register_backend(profile, backend)

        self.scheduler = Scheduler(
            ConstraintSpec(
                target_fps=config.target_fps,
                max_latency_ms=config.max_latency_ms,
                memory_budget_mb=config.memory_budget_mb,
                cost_budget=config.cost_budget,
            ),
            self.inference.profiles(),
            source_fps=float(scenario.fps),
            config=sched_cfg,
        )
        self.state = PipelineState()
        self.state.queue_depths["inference"] = 0
        self.plan = self.scheduler.resolve(self._question_load, self.state, escalated=False)
        self._assert_memory(self.plan)
        self.pacer = FramePacer(float(scenario.fps), self.plan, config.cost_budget, sched_cfg)

        self.builder = KnowledgeBuilder(self.kb, dedup_window_ms=config.dedup_window_ms)
        self.kg = self.builder.kg
        self.matcher = StandingMatcher()
        self.vqg = QuestionGenerator(self.kb, config.context) if self.mode == MODE_STREAMING else None
        self.context = TemporalContext(
            label=STEADY_LABEL, active=False, opened_at_ms=0.0, last_signal_ms=0.0)
        self.escalated = False

        self._store_dir = store_dir or config.store_dir or tempfile.mkdtemp(prefix="streamkg-")
        self.store = LambdaStore(self._store_dir)
        self._stored_uids: set[str] = set()
        self._last_compact_ms = 0.0

        self.stream = open_stream(scenario, self.clock)
        self.events: list[dict] = []
        self.alerts: list[Alert] = []
        self.interactive: dict[str, dict] = {}
        self._query_seq = 0
        self._baseline_q_seq = 0
        self._admit_times: list[float] = []
        self._next_sample_ms = 1000.0
        self.finished = False

        self._log(
            "plan",
            model=self.plan.frame_model,
            admit_fps=round(self.plan.admit_rate, 3),
            loaded_mb=self.plan.loaded_footprint_mb,
            models=sorted(self.plan.loaded_models),
        )
        for text in config.standing_queries:
            self.submit_query(text)

    @staticmethod
    def _select_profiles(config: EngineConfig) -> list[ModelProfile]:
        if config.mode == MODE_BASELINE:
            heavy = [m for m in config.models if m.tier == TIER_HEAVYWEIGHT]
            return heavy[:1]
        return list(config.models)

    # ---- control log ----

    def _log(self, event: str, **fields) -> None:
        entry = {"event": event, "t": round(self.clock.now_ms() / 1000.0, 3)}
        entry.update(fields)
        self.events.append(entry)

    def control_log_lines(self) -> list[str]:
        return [json.dumps(e, sort_keys=True, separators=(",", ":")) for e in self.events]

    def events_since(self, cursor: int) -> tuple[int, list[dict]]:
        cursor = max(0, cursor)
        return len(self.events), self.events[cursor:]

    # ---- main loop ----

    def run(self) -> None:
        while self.step():
            pass

    def step(self) -> bool:
        if self.finished:
            return False
        frame = self.stream.next_frame()
        if frame is END_OF_STREAM:
            self._finish()
            return False
        self._offer(frame)
        return True

    def _offer(self, frame: FrameRef) -> None:
        decision = self.pacer.admit(frame, self.state, self.config.cost_per_call)
        if decision.admitted:
            self._admit_times.append(self.clock.now_ms())
            self._log("admit", seq=decision.frame.seq, offered=frame.seq)
            self._process(decision.frame)
        else:
            self._log("drop", seq=frame.seq, reason=decision.reason)
        self._sample_fps(frame.timestamp_ms)

    def _process(self, frame: FrameRef) -> None:
        questions = self._questions_for(frame)
        if not questions:
            return
        prompt = Prompt(frame=frame, questions=questions, model_id=self.plan.frame_model)
        response = self.inference.infer(prompt)
        self.state.observe_latency(
            response.model_id, response.simulated_latency_ms, self._sched_cfg.ewma_alpha)
        fact_count = sum(len(a.facts) for a in response.answers)
        self._log(
            "infer",
            seq=frame.seq,
            model=response.model_id,
            latency_ms=round(response.simulated_latency_ms, 3),
            facts=fact_count,
        )

        delta = self.builder.build(response)
        inserted = 0
        for t in delta:
            if t.uid not in self._stored_uids:
                self.store.append(t)
                self._stored_uids.add(t.uid)
                inserted += 1
        self._log("build", seq=frame.seq, inserted=inserted, updated=len(delta) - inserted)

        before = self.matcher.activity
        alerts = self.matcher.evaluate(delta)
        signal = self.matcher.activity > before
        # Prune on the frame clock, not the engine clock: queued frames can
        # carry timestamps behind the post-inference engine time.
        self.matcher.prune_now(frame.timestamp_ms)
        now = self.clock.now_ms()
        for alert in alerts:
            self.alerts.append(alert)
            self._log(
                "alert",
                alert_id=alert.alert_id,
                query=alert.query_id,
                pattern=alert.pattern_name,
                fired=round(alert.fired_at_ms / 1000.0, 3),
            )
        if self.mode == MODE_STREAMING:
            self._update_context(alerts, signal, now)
        self._maybe_compact(now)

    def _questions_for(self, frame: FrameRef) -> list[Question]:
        if self.mode == MODE_BASELINE:
            self._baseline_q_seq += 1
            return [Question(
                qid=f"b{self._baseline_q_seq:05d}",
                text=self.config.baseline_question_text,
                predicate=WILDCARD,
                target_type=None,
                expected_tokens=self.config.baseline_question_tokens,
                priority=0.5,
            )]
        qset = self.vqg.generate(self.context, self.clock.now_ms(), self.kg.entity_types)
        self._log(
            "vqg",
            seq=frame.seq,
            context=qset.context_label,
            questions=[
                {
                    "predicate": q.predicate,
                    "target_type": q.target_type,
                    "priority": round(q.priority, 3),
                }
                for q in qset.questions
            ],
        )
        return qset.questions

    # ---- context and escalation ----

    def _standing(self) -> list[UserQuery]:
        return self.matcher.queries

    def _update_context(self, alerts: list[Alert], signal: bool, now: float) -> None:
        was_active = self.context.active
        base = self.context
        if base.active and alerts:
            self._close_context(base, "event_concluded", now)
            base = TemporalContext(STEADY_LABEL, False, now, now)

        progress = self.matcher.progress()
        new = identify(
            self.kg, self._standing(), progress, self.kb, now,
            self.config.context, current=base, signal=signal,
        )
        if base.active:
            concluded, reason = close_context(new if new.active else base, now, False,
                                              self.config.context)
            if not new.active:
                self._close_context(base, reason or "pattern_expired", now)
            elif concluded:
                self._close_context(base, reason, now)
                # Quiet contexts do not immediately reopen from the same
                # stale partials; they would flap otherwise.
                self.matcher.clear_partials()
                new = identify(
                    self.kg, self._standing(), self.matcher.progress(), self.kb, now,
                    self.config.context, current=None, signal=False,
                )

        if new.active and not (was_active and base.active):
            self._open_context(new, now)
        self.context = new

    def _open_context(self, context: TemporalContext, now: float) -> None:
        self._log("context_open", label=context.label, query=context.triggering_query)
        if not self.escalated:
            self.escalated = True
            self.plan = self.scheduler.escalate(self._question_load, self.state, True)
            self._assert_memory(self.plan)
            self.pacer.set_plan(self.plan)
            self._log("escalate", direction="up", admit_fps=round(self.plan.admit_rate, 3))

    def _close_context(self, context: TemporalContext, reason: str, now: float) -> None:
        self._log("context_close", label=context.label, reason=reason)
        closed_epoch, archived = self.builder.reset(reason)
        self.store.append_marker(reason, now, closed_epoch)
        snap = self.store.compact(now)
        self._last_compact_ms = now
        self._log("reset", epoch=closed_epoch, archived=len(archived),
                  snapshot=snap if snap is not None else 0)
        if self.escalated:
            self.escalated = False
            self.plan = self.scheduler.escalate(self._question_load, self.state, False)
            self._assert_memory(self.plan)
            self.pacer.set_plan(self.plan)
            self._log("escalate", direction="down", admit_fps=round(self.plan.admit_rate, 3))

    def _assert_memory(self, plan: SchedulePlan) -> None:
        if plan.loaded_footprint_mb > self.config.memory_budget_mb:
            raise RuntimeError(
                f"plan loads {plan.loaded_footprint_mb}MB over the "
                f"{self.config.memory_budget_mb}MB budget")

    # ---- housekeeping ----

    def _maybe_compact(self, now: float) -> None:
        due_time = now - self._last_compact_ms >= self.config.compact_interval_ms
        due_size = len(self.store.log) >= self.config.compact_max_entries
        if not (due_time or due_size):
            return
        snap = self.store.compact(now)
        self._last_compact_ms = now
        if snap is not None:
            self._log("compact", snapshot=snap, log_entries=len(self.store.log))

    def _sample_fps(self, upto_ms: float) -> None:
        while self._next_sample_ms <= upto_ms:
            start = self._next_sample_ms - 1000.0
            fps = sum(1 for t in self._admit_times if start <= t < self._next_sample_ms)
            self._log_sample(self._next_sample_ms, fps)
            self._admit_times = [t for t in self._admit_times if t >= self._next_sample_ms]
            self._next_sample_ms += 1000.0

    def _log_sample(self, at_ms: float, fps: int) -> None:
        self.events.append({
            "event": "fps_sample",
            "t": round(at_ms / 1000.0, 3),
            "fps": fps,
            "escalated": self.escalated,
        })

    def _finish(self) -> None:
        end_ms = self.scenario.duration_s * 1000.0
        self._sample_fps(end_ms)
        self.stream.close()
        self.store.compact(self.clock.now_ms())
        self.store.log.sync()
        self._log("end", **self.stream.stats())
        self.finished = True

    # ---- queries ----

    def _next_query_id(self) -> str:
        self._query_seq += 1
        return f"q{self._query_seq:04d}"

    def submit_query(self, text: str) -> dict:
        """Parse and register (standing) or answer (interactive) a query."""
        q = parse(text, self.kb, self._next_query_id())
        if q.kind == KIND_STANDING:
            self.matcher.register(q)
            self._log("query", kind=q.kind, query=q.query_id, name=q.name)
            return {"query_id": q.query_id, "kind": q.kind, "name": q.name,
                    "window_s": q.window_ms / 1000.0}
        answer = self._answer(q)
        self.interactive[q.query_id] = {"query": q, "answer": answer, "children": []}
        self._log("interactive", query=q.query_id, results=len(answer.supporting))
        return self._interactive_dict(q.query_id)

    def refine_query(self, parent_id: str, text: str) -> dict:
        thread = self.interactive.get(parent_id)
        if thread is None:
            raise UnknownQuery(parent_id)
        child = refine(thread["query"], text, self.kb, self._next_query_id())
        answer = self._answer(child)
        self.interactive[child.query_id] = {"query": child, "answer": answer, "children": []}
        thread["children"].append(child.query_id)
        self._log("interactive", query=child.query_id, parent=parent_id,
                  results=len(answer.supporting))
        return self._interactive_dict(child.query_id)

    def _answer(self, q: UserQuery) -> InteractiveAnswer:
        pool = self.store.serve() + list(self.kg.triples)
        return answer_interactive(q, pool, self.clock.now_ms())

    def _interactive_dict(self, query_id: str) -> dict:
        thread = self.interactive[query_id]
        q: UserQuery = thread["query"]
        a: InteractiveAnswer = thread["answer"]
        return {
            "query_id": q.query_id,
            "kind": q.kind,
            "text": q.text,
            "about": q.about,
            "focus": q.focus,
            "refinement_of": q.refinement_of,
            "window": [round(a.window[0] / 1000.0, 3), round(a.window[1] / 1000.0, 3)],
            "answer": a.text,
            "supporting": [triple_to_dict(t) for t in a.supporting],
            "children": list(thread["children"]),
        }

    def interactive_thread(self, query_id: str) -> dict:
        if query_id not in self.interactive:
            raise UnknownQuery(query_id)
        out = self._interactive_dict(query_id)
        out["children"] = [self.interactive_thread(c) for c in out["children"]]
        return out

    def list_queries(self) -> list[dict]:
        out = []
        for q in self.matcher.queries:
            out.append({"query_id": q.query_id, "kind": q.kind, "name": q.name,
                        "text": q.text, "window_s": (q.window_ms or 0) / 1000.0})
        for thread in self.interactive.values():
            q = thread["query"]
            out.append({"query_id": q.query_id, "kind": q.kind, "name": None,
                        "text": q.text, "window_s": (q.window_ms or 0) / 1000.0})
        out.sort(key=lambda d: d["query_id"])
        return out

    # ---- read surfaces ----

    def alerts_since(self, cursor: int = 0) -> tuple[int, list[dict]]:
        cursor = max(0, cursor)
        return len(self.alerts), [alert_to_dict(a) for a in self.alerts[cursor:]]

    def all_triples(self) -> list[SemanticTriple]:
        """Durable store plus live epoch, deduplicated."""
        return dedup_triples(self.store.serve() + list(self.kg.triples))

    def kg_view(
        self,
        window: tuple[float, float] | None = None,
        predicate: str | None = None,
        entity: str | None = None,
    ) -> list[dict]:
        """all_triples() filtered and rendered for the HTTP layer."""
        matcher = QueryMatcher(predicate=predicate, entity=entity)
        pool = self.all_triples()
        if window is not None:
            start, end = window
            pool = [t for t in pool if start <= t.observed_at_ms <= end]
        return [triple_to_dict(t) for t in pool if matcher.matches(t)]

    def metrics(self) -> dict:
        admits = sum(1 for e in self.events if e["event"] == "admit")
        drops: dict[str, int] = {}
        for e in self.events:
            if e["event"] == "drop":
                drops[e["reason"]] = drops.get(e["reason"], 0) + 1
        samples = [e for e in self.events if e["event"] == "fps_sample"]
        duration_s = self.scenario.duration_s
        return {
            "mode": self.mode,
            "scenario": self.scenario.scenario_id,
            "duration_s": duration_s,
            "frames": self.stream.stats(),
            "admitted": admits,
            "admitted_fps": round(admits / duration_s, 4) if duration_s else 0.0,
            "pacer_drops": drops,
            "alerts": len(self.alerts),
            "contexts_opened": sum(1 for e in self.events if e["event"] == "context_open"),
            "contexts_closed": sum(1 for e in self.events if e["event"] == "context_close"),
            "resets": sum(1 for e in self.events if e["event"] == "reset"),
            "escalations": sum(
                1 for e in self.events
                if e["event"] == "escalate" and e["direction"] == "up"),
            "loaded_models": sorted(self.plan.loaded_models),
            "loaded_memory_mb": self.plan.loaded_footprint_mb,
            "memory_budget_mb": self.config.memory_budget_mb,
            "model_calls": dict(sorted(self.inference.calls.items())),
            "fps_samples": [
                {"t": e["t"], "fps": e["fps"], "escalated": e["escalated"]} for e in samples],
            "kg": {
                "epoch": self.kg.epoch,
                "live_triples": len(self.kg.triples),
                "archived": self.kg.archived_count,
            },
            "store": self.store.stats(),
            "finished": self.finished,
        }
