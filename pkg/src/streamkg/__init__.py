"""Real-time retrieval-augmented analysis of frame streams.

The package turns a frame stream plus a domain knowledge base into a live
temporal knowledge graph, standing-pattern alerts, and interactive answers,
under explicit latency, memory, and cost constraints.
"""
from __future__ import annotations

from .engine import MODE_BASELINE, MODE_STREAMING, MODES, EngineConfig, StreamEngine, builtin_config
from .ingest import Scenario, load_scenario

__all__ = [
    "MODE_BASELINE",
    "MODE_STREAMING",
    "MODES",
    "EngineConfig",
    "StreamEngine",
    "builtin_config",
    "Scenario",
    "load_scenario",
]

__version__ = "0.1.0"
