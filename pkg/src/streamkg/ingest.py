"""Scenario files and the live frame stream.

A scenario is a scripted camera feed: a dense frame table (one entry per
source frame) plus ground-truth facts attached to frames and ground-truth
event intervals used by the bench harness.  The stream replays the scenario
against a clock with live semantics: a frame not consumed before the next
one is emitted is dropped, and the consumer always receives the newest
pending frame.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path

from .clock import Clock

SCENARIO_VERSION = 1

# Sentinel returned by next_frame() once every frame was delivered or dropped.
END_OF_STREAM = object()


class ScenarioError(Exception):
    """Base for anything wrong with a scenario file."""


class ParseError(ScenarioError):
    """Malformed scenario text; carries the offending line number."""

    def __init__(self, path: str, line_no: int, message: str) -> None:
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class SchemaError(ScenarioError):
    """Structurally valid file that violates a scenario constraint."""


class StreamClosed(Exception):
    pass


@dataclass(frozen=True)
class GroundFact:
    """One scripted observation, visible in a single frame."""

    subject: str
    predicate: str
    object: str
    subject_type: str | None = None
    object_type: str | None = None
    # Optional pair of normalized xywh boxes (subject box, object box).
    boxes: tuple[tuple[float, float, float, float], ...] | None = None


@dataclass(frozen=True)
class StepTemplate:
    """Required-step template of a ground-truth event: subject/predicate/object,
    where subject and object may be an entity type, an entity id, or '*'."""

    subject: str
    predicate: str
    object: str


@dataclass(frozen=True)
class GroundTruthEvent:
    event_type: str
    start_s: float
    end_s: float
    required_steps: tuple[StepTemplate, ...]


@dataclass
class FrameSpec:
    seq: int
    facts: list[GroundFact] = field(default_factory=list)
    motion_score: float = 0.0
    scene_detail_score: float = 0.0


@dataclass
class Scenario:
    scenario_id: str
    fps: int
    duration_s: float
    version: int
    entities: dict[str, str]  # entity id -> entity type
    frames: list[FrameSpec]
    events: list[GroundTruthEvent]

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    def frame_timestamp_ms(self, seq: int) -> float:
        return seq * 1000.0 / self.fps


@dataclass(frozen=True)
class FrameRef:
    """Handle passed through the pipeline instead of pixel data."""

    source_id: str
    seq: int
    timestamp_ms: float
    payload: FrameSpec
    motion_score: float
    scene_detail_score: float


def _parse_box_list(text: str, path: str, line_no: int) -> tuple[tuple[float, ...], ...]:
    boxes = []
    for part in text.split(";"):
        nums = part.split(",")
        if len(nums) != 4:
            raise ParseError(path, line_no, f"box needs 4 comma-separated numbers, got {part!r}")
        try:
            boxes.append(tuple(float(v) for v in nums))
        except ValueError:
            raise ParseError(path, line_no, f"non-numeric box coordinate in {part!r}") from None
    return tuple(boxes)


def _parse_step_template(text: str, path: str, line_no: int) -> StepTemplate:
    parts = text.split(":")
    if len(parts) != 3:
        raise ParseError(path, line_no, f"step template must be subj:pred:obj, got {text!r}")
    return StepTemplate(parts[0], parts[1], parts[2])


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a .scn file.

    Raises ParseError for malformed lines and SchemaError for violated
    scenario constraints (sparse frame table, undeclared entities, events
    outside the stream duration).
    """
    path = Path(path)
    header = None
    entities: dict[str, str] = {}
    frames: dict[int, FrameSpec] = {}
    events: list[GroundTruthEvent] = []
    current_frame: FrameSpec | None = None

    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            kind = tokens[0]

            if kind == "scenario":
                # scenario <id>; fps <n>; duration <s>; version <n>
                fields = [f.strip() for f in line.split(";")]
                try:
                    sid = fields[0].split()[1]
                    kv = dict(f.split() for f in fields[1:])
                    header = (sid, int(kv["fps"]), float(kv["duration"]), int(kv["version"]))
                except (IndexError, KeyError, ValueError):
                    raise ParseError(str(path), line_no, "bad scenario header") from None
                if header[3] != SCENARIO_VERSION:
                    raise SchemaError(f"{path}: unsupported scenario version {header[3]}")
            elif kind == "entity":
                if len(tokens) != 3:
                    raise ParseError(str(path), line_no, "entity line must be: entity <id> <type>")
                entities[tokens[1]] = tokens[2]
            elif kind == "frame":
                if header is None:
                    raise ParseError(str(path), line_no, "frame before scenario header")
                try:
                    seq = int(tokens[1])
                    kv = dict(t.split("=") for t in tokens[2:])
                    spec = FrameSpec(
                        seq=seq,
                        motion_score=float(kv.get("motion", 0.0)),
                        scene_detail_score=float(kv.get("detail", 0.0)),
                    )
                except (IndexError, ValueError):
                    raise ParseError(str(path), line_no, "bad frame line") from None
                if seq in frames:
                    raise SchemaError(f"{path}: duplicate frame seq {seq}")
                frames[seq] = spec
                current_frame = spec
            elif kind == "fact":
                if current_frame is None:
                    raise ParseError(str(path), line_no, "fact line without a preceding frame")
                if len(tokens) < 4:
                    raise ParseError(str(path), line_no, "fact line must be: fact <subj> <pred> <obj> [box=...]")
                subj, pred, obj = tokens[1], tokens[2], tokens[3]
                boxes = None
                for extra in tokens[4:]:
                    if extra.startswith("box="):
                        boxes = _parse_box_list(extra[4:], str(path), line_no)
                    else:
                        raise ParseError(str(path), line_no, f"unknown fact field {extra!r}")
                if subj not in entities:
                    raise SchemaError(f"{path}:{line_no}: fact references undeclared entity {subj!r}")
                current_frame.facts.append(
                    GroundFact(
                        subject=subj,
                        predicate=pred,
                        object=obj,
                        subject_type=entities[subj],
                        object_type=entities.get(obj),
                        boxes=boxes,
                    )
                )
            elif kind == "event":
                if len(tokens) < 4:
                    raise ParseError(str(path), line_no, "event line must be: event <type> <start> <end> step=...")
                try:
                    start_s, end_s = float(tokens[2]), float(tokens[3])
                except ValueError:
                    raise ParseError(str(path), line_no, "bad event interval") from None
                steps = []
                for extra in tokens[4:]:
                    if not extra.startswith("step="):
                        raise ParseError(str(path), line_no, f"unknown event field {extra!r}")
                    steps.append(_parse_step_template(extra[5:], str(path), line_no))
                events.append(GroundTruthEvent(tokens[1], start_s, end_s, tuple(steps)))
            else:
                raise ParseError(str(path), line_no, f"unknown directive {kind!r}")

    if header is None:
        raise SchemaError(f"{path}: missing scenario header")
    sid, fps, duration_s, version = header

    total = int(round(fps * duration_s))
    dense = []
    for seq in range(total):
        spec = frames.pop(seq, None)
        dense.append(spec if spec is not None else FrameSpec(seq=seq))
    if frames:
        raise SchemaError(f"{path}: frame seq out of range 0..{total - 1}: {sorted(frames)}")

    for ev in events:
        if not (0.0 <= ev.start_s <= ev.end_s <= duration_s):
            raise SchemaError(
                f"{path}: event {ev.event_type} interval [{ev.start_s}, {ev.end_s}] outside stream duration"
            )

    return Scenario(
        scenario_id=sid,
        fps=fps,
        duration_s=duration_s,
        version=version,
        entities=entities,
        frames=dense,
        events=events,
    )


class ScenarioStream:
    """Replays a scenario against a clock with newest-wins drop semantics.

    Frame seq k is emitted at k * 1000 / fps ms.  next_frame() returns the
    most recent emitted-but-undelivered frame, dropping any older pending
    frames; if nothing is pending it blocks (advances the clock) until the
    next emission, and returns END_OF_STREAM once the scenario is exhausted.
    """

    def __init__(self, scenario: Scenario, clock: Clock) -> None:
        self.scenario = scenario
        self.clock = clock
        self.source_id = scenario.scenario_id
        self.delivered_count = 0
        self.dropped_count = 0
        self.last_delivered_seq = -1
        self._closed = False
        # Emission and drop accounting share this lock so stats stay
        # consistent when a wall-mode reader polls them concurrently.
        self._lock = threading.Lock()

    @property
    def emitted_count(self) -> int:
        with self._lock:
            return self._emitted_unlocked()

    def _emitted_unlocked(self) -> int:
        total = self.scenario.frame_count
        now = self.clock.now_ms()
        # The epsilon absorbs float error at exact emission boundaries
        # (e.g. seq 12 of a 24 fps stream at t=500.0).
        emitted = int(now * self.scenario.fps / 1000.0 + 1e-9) + 1
        return max(0, min(total, emitted))

    def next_frame(self):
        if self._closed:
            raise StreamClosed(self.source_id)
        total = self.scenario.frame_count
        while True:
            with self._lock:
                emitted = self._emitted_unlocked()
                newest = emitted - 1
                if newest > self.last_delivered_seq:
                    skipped = newest - self.last_delivered_seq - 1
                    self.dropped_count += skipped
                    self.last_delivered_seq = newest
                    self.delivered_count += 1
                    spec = self.scenario.frames[newest]
                    return FrameRef(
                        source_id=self.source_id,
                        seq=newest,
                        timestamp_ms=self.scenario.frame_timestamp_ms(newest),
                        payload=spec,
                        motion_score=spec.motion_score,
                        scene_detail_score=spec.scene_detail_score,
                    )
                if emitted >= total:
                    return END_OF_STREAM
                next_emission = self.scenario.frame_timestamp_ms(emitted)
            # Block (virtual: jump) until the next frame exists.
            self.clock.advance_to_ms(next_emission)

    def close(self) -> None:
        with self._lock:
            if not self._closed:
                # Frames never delivered count as dropped so that
                # delivered + dropped == emitted holds at shutdown.
                emitted = self._emitted_unlocked()
                self.dropped_count += (emitted - 1) - self.last_delivered_seq
                self.last_delivered_seq = max(self.last_delivered_seq, emitted - 1)
                self._closed = True

    def stats(self) -> dict[str, int]:
        with self._lock:
            return {
                "emitted": self._emitted_unlocked(),
                "delivered": self.delivered_count,
                "dropped": self.dropped_count,
            }


def open_stream(scenario: Scenario, clock: Clock) -> ScenarioStream:
    return ScenarioStream(scenario, clock)
