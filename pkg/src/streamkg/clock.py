"""Virtual and wall clocks.

The engine advances a single shared clock: the frame stream advances it to
emission instants while waiting, and the pipeline advances it by simulated
processing latencies.  In virtual mode a whole run is a deterministic
discrete-event simulation; in wall mode the same call sites sleep instead.
"""

from __future__ import annotations

import time


class VirtualClock:
    """Milliseconds counter that only moves when told to."""

    def __init__(self, start_ms: float = 0.0) -> None:
        self._now_ms = float(start_ms)

    def now_ms(self) -> float:
        return self._now_ms

    def advance_ms(self, delta_ms: float) -> None:
        if delta_ms < 0:
            raise ValueError(f"clock cannot move backwards (delta={delta_ms})")
        self._now_ms += delta_ms

    def advance_to_ms(self, t_ms: float) -> None:
        # Advancing to the past is a no-op, not an error: several stages may
        # race to the same emission instant.
        if t_ms > self._now_ms:
            self._now_ms = t_ms


class WallClock:
    """Same interface as VirtualClock, backed by the monotonic clock."""

    def __init__(self) -> None:
        self._t0 = time.monotonic()

    def now_ms(self) -> float:
        return (time.monotonic() - self._t0) * 1000.0

    def advance_ms(self, delta_ms: float) -> None:
        if delta_ms > 0:
            time.sleep(delta_ms / 1000.0)

    def advance_to_ms(self, t_ms: float) -> None:
        remaining = t_ms - self.now_ms()
        if remaining > 0:
            time.sleep(remaining / 1000.0)


Clock = VirtualClock | WallClock


def make_clock(mode: str) -> Clock:
    if mode == "virtual":
        return VirtualClock()
    if mode == "wall":
        return WallClock()
    raise ValueError(f"unknown clock mode: {mode!r}")
