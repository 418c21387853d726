"""Evaluation harness: runs the scenario suite in both engine modes and
renders detection, throughput, and resource tables.

Human judging of answer quality is replaced by fact coverage: the fraction
of a ground-truth event's step facts that appear among the engine's stored
triples, reported both order-respecting and unordered.  The note is stamped
into the report header.
"""
from __future__ import annotations

import dataclasses
import json
import logging
from pathlib import Path
from typing import Iterable

from .engine import MODE_BASELINE, MODE_STREAMING, EngineConfig, StreamEngine, builtin_config
from .ingest import GroundTruthEvent, Scenario, ScenarioError, StepTemplate, load_scenario
from .knowledge import SemanticTriple

log = logging.getLogger(__name__)

COVERAGE_NOTE = (
    "answer quality is scored by fact coverage of ground-truth event steps "
    "(ordered and unordered), not by human judging"
)


def _step_witnesses(step: StepTemplate, triples: Iterable[SemanticTriple]) -> list[float]:
    times = [
        t.observed_at_ms
        for t in triples
        if t.predicate == step.predicate
        and (step.subject == "*" or t.subject == step.subject)
        and (step.object == "*" or t.object == step.object)
    ]
    times.sort()
    return times


def _best_ordered(witnesses: list[list[float]]) -> int:
    """Largest subset of steps witnessable at nondecreasing timestamps,
    keeping step order.  Greedy earliest-witness per fixed subset is optimal,
    so brute force over subsets (step counts are tiny)."""
    n = len(witnesses)
    best = 0
    for mask in range(1 << n):
        at = float("-inf")
        count = 0
        feasible = True
        for i in range(n):
            if not mask & (1 << i):
                continue
            nxt = next((w for w in witnesses[i] if w >= at), None)
            if nxt is None:
                feasible = False
                break
            at = nxt
            count += 1
        if feasible:
            best = max(best, count)
    return best


def fact_coverage(triples: Iterable[SemanticTriple], event: GroundTruthEvent) -> float:
    """Order-respecting fraction of the event's step facts present in the
    given triples."""
    ordered, _ = coverage_pair(triples, event)
    return ordered


def coverage_pair(
    triples: Iterable[SemanticTriple], event: GroundTruthEvent
) -> tuple[float, float]:
    """(ordered, unordered) coverage of the event's required steps."""
    pool = list(triples)
    if not event.required_steps:
        return 1.0, 1.0
    witnesses = [_step_witnesses(step, pool) for step in event.required_steps]
    total = len(event.required_steps)
    unordered = sum(1 for w in witnesses if w) / total
    ordered = _best_ordered(witnesses) / total
    return ordered, unordered


@dataclasses.dataclass
class ModeResult:
    mode: str
    detected: int
    events: list[dict]
    admitted_fps: float
    fps_series: list[dict]
    drops: dict
    memory_mb: float
    alerts: int
    model_calls: dict

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass
class ScenarioResult:
    scenario_id: str
    duration_s: float
    event_count: int
    modes: dict[str, ModeResult]

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "duration_s": self.duration_s,
            "event_count": self.event_count,
            "modes": {k: v.to_dict() for k, v in self.modes.items()},
        }


@dataclasses.dataclass
class BenchReport:
    note: str
    scenarios: list[ScenarioResult]
    errors: list[dict]
    aggregate: dict

    def to_json(self) -> str:
        payload = {
            "note": self.note,
            "scenarios": [s.to_dict() for s in self.scenarios],
            "errors": self.errors,
            "aggregate": self.aggregate,
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def to_table(self) -> str:
        lines = [f"Event detection ({self.note})", ""]
        modes = sorted(self.aggregate["modes"])
        header = f"{'event type':<18}{'events':>8}" + "".join(f"{m:>16}" for m in modes)
        lines.append(header)
        lines.append("-" * len(header))
        by_type: dict[str, dict] = {}
        for scenario in self.scenarios:
            for mode, result in scenario.modes.items():
                for ev in result.events:
                    row = by_type.setdefault(
                        ev["event_type"], {"events": 0, "detected": {m: 0 for m in modes}}
                    )
                    if mode == modes[0]:
                        row["events"] += 1
                    row["detected"][mode] += 1 if ev["detected"] else 0
        for event_type in sorted(by_type):
            row = by_type[event_type]
            cells = "".join(f"{row['detected'][m]:>16}" for m in modes)
            lines.append(f"{event_type:<18}{row['events']:>8}" + cells)
        total = self.aggregate["events_total"]
        cells = ""
        for m in modes:
            agg = self.aggregate["modes"][m]
            cells += f"{agg['detected']:>10} ({agg['percent']:.1f}%)"
        lines.append("-" * len(header))
        lines.append(f"{'total':<18}{total:>8}" + cells)
        lines.append("")
        lines.append(f"{'mode':<18}{'memory MB':>12}{'mean fps':>12}")
        for m in modes:
            agg = self.aggregate["modes"][m]
            lines.append(f"{m:<18}{agg['memory_mb']:>12.0f}{agg['mean_fps']:>12.3f}")
        return "\n".join(lines)


def run_one(scenario: Scenario, config: EngineConfig) -> tuple[ModeResult, StreamEngine]:
    engine = StreamEngine(config, scenario)
    engine.run()
    metrics = engine.metrics()
    pool = engine.all_triples()
    events = []
    for ev in scenario.events:
        hits = [
            a for a in engine.alerts
            if a.pattern_name == ev.event_type
            and ev.start_s * 1000.0 <= a.fired_at_ms <= ev.end_s * 1000.0
        ]
        ordered, unordered = coverage_pair(pool, ev)
        events.append({
            "event_type": ev.event_type,
            "start_s": ev.start_s,
            "end_s": ev.end_s,
            "detected": bool(hits),
            "alert_t": round(hits[0].fired_at_ms / 1000.0, 3) if hits else None,
            "coverage_ordered": round(ordered, 4),
            "coverage_unordered": round(unordered, 4),
        })
    drops = dict(metrics["pacer_drops"])
    drops["stream"] = metrics["frames"]
    result = ModeResult(
        mode=config.mode,
        detected=sum(1 for e in events if e["detected"]),
        events=events,
        admitted_fps=metrics["admitted_fps"],
        fps_series=metrics["fps_samples"],
        drops=drops,
        memory_mb=metrics["loaded_memory_mb"],
        alerts=metrics["alerts"],
        model_calls=metrics["model_calls"],
    )
    return result, engine


def default_configs() -> dict[str, EngineConfig]:
    return {
        MODE_BASELINE: builtin_config(MODE_BASELINE),
        MODE_STREAMING: builtin_config(MODE_STREAMING),
    }


def suite_paths(suite_dir: str | Path) -> list[Path]:
    return sorted(Path(suite_dir).glob("*.scn"))


def run_suite(
    suite_dir: str | Path,
    configs: dict[str, EngineConfig] | None = None,
) -> BenchReport:
    configs = configs or default_configs()
    scenarios: list[ScenarioResult] = []
    errors: list[dict] = []
    for path in suite_paths(suite_dir):
        try:
            scenario = load_scenario(path)
        except ScenarioError as exc:
            log.warning("skipping %s: %s", path, exc)
            errors.append({"scenario": path.name, "error": str(exc)})
            continue
        modes = {}
        for label, config in sorted(configs.items()):
            result, _ = run_one(scenario, config)
            modes[label] = result
        scenarios.append(ScenarioResult(
            scenario_id=scenario.scenario_id,
            duration_s=scenario.duration_s,
            event_count=len(scenario.events),
            modes=modes,
        ))

    events_total = sum(s.event_count for s in scenarios)
    aggregate = {"events_total": events_total, "modes": {}}
    for label in configs:
        detected = sum(s.modes[label].detected for s in scenarios)
        fps = [s.modes[label].admitted_fps for s in scenarios]
        memory = max((s.modes[label].memory_mb for s in scenarios), default=0.0)
        aggregate["modes"][label] = {
            "detected": detected,
            "percent": round(100.0 * detected / events_total, 2) if events_total else 0.0,
            "mean_fps": round(sum(fps) / len(fps), 4) if fps else 0.0,
            "memory_mb": memory,
        }
    return BenchReport(note=COVERAGE_NOTE, scenarios=scenarios, errors=errors, aggregate=aggregate)


def _with_heavy_latency(config: EngineConfig, base_latency_ms: float) -> EngineConfig:
    models = [
        dataclasses.replace(m, base_latency_ms=base_latency_ms)
        if m.tier == "heavyweight" else m
        for m in config.models
    ]
    return dataclasses.replace(config, models=models)


def sweep_heavy_latency(
    suite_dir: str | Path,
    base_latencies: list[float],
    configs: dict[str, EngineConfig] | None = None,
) -> dict:
    """Re-run the suite at each heavyweight base latency.  Detection counts
    per mode must come out monotone non-increasing as latency grows."""
    configs = configs or default_configs()
    rows = []
    for base in base_latencies:
        swept = {label: _with_heavy_latency(cfg, base) for label, cfg in configs.items()}
        report = run_suite(suite_dir, swept)
        rows.append({
            "base_latency_ms": base,
            "detected": {
                label: report.aggregate["modes"][label]["detected"] for label in swept
            },
        })
    return {"sweep": rows}
