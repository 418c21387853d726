#!/usr/bin/env python3
"""Regenerate the shipped scenario suite under src/streamkg/data/suite.

Each scenario is written as a .scn file in the ingest grammar. Fact spans
are half-open [start, end) in seconds; a fact line is emitted for every
frame whose timestamp falls inside the span, in the order spans are listed
(within-frame fact order is meaningful to extraction).
"""
from __future__ import annotations

import math
from pathlib import Path

FPS = 24
OUT_DIR = Path(__file__).resolve().parent.parent / "src" / "streamkg" / "data" / "suite"


def frames_for(start_s: float, end_s: float) -> range:
    return range(
        math.ceil(start_s * FPS - 1e-9),
        math.ceil(end_s * FPS - 1e-9),
    )


def write_scenario(
    name: str,
    duration_s: float,
    entities: list[tuple[str, str]],
    spans: list[tuple[float, float, str, str, str]],
    events: list[tuple[str, float, float, list[str]]],
) -> Path:
    per_frame: dict[int, list[tuple[str, str, str]]] = {}
    for start_s, end_s, subj, pred, obj in spans:
        for seq in frames_for(start_s, end_s):
            per_frame.setdefault(seq, []).append((subj, pred, obj))

    lines = [
        "# Generated by tools/make_suite.py. Do not hand-edit.",
        f"scenario {name}; fps {FPS}; duration {duration_s}; version 1",
        "",
    ]
    for entity_id, entity_type in entities:
        lines.append(f"entity {entity_id} {entity_type}")
    lines.append("")
    for seq in sorted(per_frame):
        lines.append(f"frame {seq} motion=0.7 detail=0.6")
        for subj, pred, obj in per_frame[seq]:
            lines.append(f"fact {subj} {pred} {obj}")
    lines.append("")
    for event_type, start_s, end_s, steps in events:
        step_text = " ".join(f"step={s}" for s in steps)
        lines.append(f"event {event_type} {start_s} {end_s} {step_text}")
    lines.append("")

    OUT_DIR.mkdir(parents=True, exist_ok=True)
    path = OUT_DIR / f"{name}.scn"
    path.write_text("\n".join(lines))
    return path


def main() -> None:
    written = []

    # Hit-and-run, single event. Collision transient is visible for half a
    # second so the steady question rotation is guaranteed to sample it.
    written.append(write_scenario(
        "hit_and_run_1",
        8.0,
        [("car1", "vehicle"), ("p1", "person"), ("road", "road_object")],
        [
            (0.0, 2.3, "p1", "moving", "true"),
            (1.0, 2.3, "p1", "crossing", "road"),
            (2.3, 2.8, "car1", "collided_with", "p1"),
            (4.8, 8.0, "p1", "lying_on", "road"),
            (6.0, 7.5, "car1", "fleeing", "road"),
        ],
        [("hit_and_run", 2.3, 7.5,
          ["car1:collided_with:p1", "p1:lying_on:road", "car1:fleeing:road"])],
    ))

    # Two hit-and-runs back to back. The second collision lands while the
    # engine is still focused on the first event's residue, so its questions
    # never cover the new collision: a genuine attention miss.
    written.append(write_scenario(
        "hit_and_run_2",
        8.0,
        [
            ("car1", "vehicle"), ("p1", "person"),
            ("car2", "vehicle"), ("p2", "person"),
            ("road", "road_object"),
        ],
        [
            (0.8, 1.3, "car1", "collided_with", "p1"),
            (1.6, 4.0, "p1", "lying_on", "road"),
            (2.4, 4.0, "car1", "fleeing", "road"),
            (5.7, 5.95, "car2", "collided_with", "p2"),
            (6.2, 8.0, "p2", "lying_on", "road"),
            (6.8, 8.0, "car2", "fleeing", "road"),
        ],
        [
            ("hit_and_run", 0.8, 4.0,
             ["car1:collided_with:p1", "p1:lying_on:road", "car1:fleeing:road"]),
            ("hit_and_run", 5.7, 8.0,
             ["car2:collided_with:p2", "p2:lying_on:road", "car2:fleeing:road"]),
        ],
    ))

    # Long-lived two-vehicle collision. Both pattern steps stay visible for
    # five seconds, which is the only corpus event wide enough for the slow
    # baseline sampling grid to land inside.
    written.append(write_scenario(
        "vehicle_collision_1",
        16.0,
        [("car1", "vehicle"), ("car2", "vehicle"), ("road", "road_object")],
        [
            (2.0, 7.0, "car1", "collided_with", "car2"),
            (2.0, 7.0, "car1", "damaged", "true"),
            (2.5, 14.0, "car1", "on_fire", "true"),
            (3.0, 10.0, "car2", "stopped", "true"),
        ],
        [("v2v_collision", 2.0, 7.0,
          ["car1:collided_with:car2", "car1:damaged:*"])],
    ))

    # Two short two-vehicle collisions, both placed between baseline samples.
    written.append(write_scenario(
        "vehicle_collision_2",
        16.0,
        [
            ("car3", "vehicle"), ("car4", "vehicle"),
            ("car5", "vehicle"), ("car6", "vehicle"),
            ("road", "road_object"),
        ],
        [
            (3.0, 3.5, "car3", "collided_with", "car4"),
            (3.3, 5.0, "car3", "damaged", "true"),
            (9.5, 10.0, "car5", "collided_with", "car6"),
            (9.8, 11.5, "car5", "damaged", "true"),
        ],
        [
            ("v2v_collision", 3.0, 5.0,
             ["car3:collided_with:car4", "car3:damaged:*"]),
            ("v2v_collision", 9.5, 11.5,
             ["car5:collided_with:car6", "car5:damaged:*"]),
        ],
    ))

    # Vehicle-person collision where the driver stays. The event interval
    # runs to the end of the aftermath because the pattern only completes
    # once the vehicle is seen stopped.
    written.append(write_scenario(
        "pedestrian_collision_1",
        48.0,
        [("car7", "vehicle"), ("p3", "person"), ("road", "road_object")],
        [
            (5.0, 19.0, "p3", "moving", "true"),
            (18.5, 20.0, "p3", "near", "car7"),
            (20.0, 20.6, "car7", "collided_with", "p3"),
            (21.0, 45.0, "p3", "lying_on", "road"),
            (22.0, 45.0, "car7", "stopped", "true"),
        ],
        [("v2p_collision", 20.0, 45.0,
          ["car7:collided_with:p3", "p3:lying_on:road", "car7:stopped:*"])],
    ))

    # Street altercation that ends with a person on the ground.
    written.append(write_scenario(
        "commotion_1",
        26.0,
        [("p4", "person"), ("p5", "person"), ("road", "road_object")],
        [
            (8.0, 11.0, "p4", "altercation_with", "p5"),
            (10.5, 24.0, "p4", "lying_on", "road"),
            (12.0, 20.0, "p5", "carrying", "bag"),
        ],
        [("commotion", 8.0, 24.0,
          ["p4:altercation_with:p5", "p4:lying_on:road"])],
    ))

    for path in written:
        print(path)


if __name__ == "__main__":
    main()
