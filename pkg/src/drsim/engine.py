"""Deterministic discrete-event core: virtual clock, event queue, seeded RNG,
and request-arrival workload generation.

All simulation time is integer milliseconds since scenario start.  Events are
totally ordered by (time, seq); seq is assigned at scheduling and never reused,
so equal-time events process in the order they were scheduled.  A full run is
therefore a pure function of (scenario, seed).
"""

from __future__ import annotations

import heapq
import json
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Optional

Millis = int


class EventKind(str, Enum):
    REQUEST_ARRIVAL = "RequestArrival"
    SERVICE_COMPLETION = "ServiceCompletion"
    HEALTH_PROBE = "HealthProbe"
    MONITOR_TICK = "MonitorTick"
    REPLICATION_APPLY = "ReplicationApply"
    BACKUP_TICK = "BackupTick"
    FAULT_TRIGGER = "FaultTrigger"
    SCALE_EVALUATION = "ScaleEvaluation"
    RECOVERY_STEP = "RecoveryStep"
    INIT = "Init"  # synthetic first trace record, never queued


class PastEventError(Exception):
    """Raised when an event is scheduled before the current clock."""


@dataclass(order=True)
class Event:
    time: Millis
    seq: int
    kind: EventKind = field(compare=False)
    payload: dict = field(compare=False, default_factory=dict)


class Engine:
    """Single global event queue plus virtual clock.

    Subsystems schedule through this queue rather than keeping private timers,
    which makes the processed-event list a complete replay log.  Handlers may
    enrich ``event.payload`` in place; the enriched record is what gets traced.
    """

    def __init__(self, handler: Optional[Callable[[Event], None]] = None):
        self.clock: Millis = 0
        self.handler = handler
        self.trace: list[Event] = []
        self._heap: list[Event] = []
        self._next_seq = 1

    def schedule(self, time: Millis, kind: EventKind, payload: Optional[dict] = None) -> Event:
        if time < self.clock:
            raise PastEventError(f"cannot schedule {kind.value} at t={time}; clock is {self.clock}")
        ev = Event(time=time, seq=self._next_seq, kind=kind, payload=payload or {})
        self._next_seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def run_until(self, end: Millis) -> list[Event]:
        """Process every queued event with time <= end, in (time, seq) order.

        Returns the events processed by this call; the clock lands on ``end``
        even if the queue drained earlier.
        """
        if end < self.clock:
            raise PastEventError(f"cannot run to t={end}; clock is {self.clock}")
        processed: list[Event] = []
        while self._heap and self._heap[0].time <= end:
            ev = heapq.heappop(self._heap)
            assert ev.time >= self.clock, "event queue produced a time in the past"
            self.clock = ev.time
            if self.handler is not None:
                self.handler(ev)
            self.trace.append(ev)
            processed.append(ev)
        self.clock = end
        return processed

    def pending(self) -> int:
        return len(self._heap)


class SeededRng:
    """Deterministic random stream; identical seed gives an identical draw
    sequence across runs and platforms (Mersenne Twister contract)."""

    def __init__(self, seed: int):
        self.seed = seed
        self._r = random.Random(seed)

    def uniform01(self) -> float:
        return self._r.random()

    def exponential_ms(self, mean_ms: float) -> Millis:
        # inverse-CDF sampling; log1p(-u) keeps precision for small u
        u = self._r.random()
        return max(0, round(-mean_ms * math.log1p(-u)))


@dataclass
class ArrivalSpec:
    kind: str  # "fixed" | "poisson"
    interval_ms: Millis = 0  # fixed
    rate_per_s: float = 0.0  # poisson

    def mean_interval_ms(self) -> float:
        if self.kind == "fixed":
            return float(self.interval_ms)
        return 1000.0 / self.rate_per_s


@dataclass
class ServiceTimeSpec:
    kind: str  # "fixed" | "exponential"
    ms: Millis = 0
    mean_ms: float = 0.0


@dataclass
class SurgeSpec:
    at_ms: Millis
    factor: float


@dataclass
class WorkloadSpec:
    arrival: ArrivalSpec
    duration_ms: Millis
    read_fraction: float
    service_time: dict[str, ServiceTimeSpec]
    surge: Optional[SurgeSpec] = None

    def rate_factor(self, now: Millis) -> float:
        if self.surge is not None and now >= self.surge.at_ms:
            return self.surge.factor
        return 1.0


def next_arrival(workload: WorkloadSpec, rng: SeededRng, now: Millis) -> Millis:
    """Time of the arrival after ``now``.

    Fixed-interval arrivals land every interval; Poisson arrivals draw an
    exponential inter-arrival via inverse CDF.  Inter-arrivals clamp to >= 1 ms
    so the clock always advances.
    """
    factor = workload.rate_factor(now)
    if workload.arrival.kind == "fixed":
        step = max(1, round(workload.arrival.interval_ms / factor))
        return now + step
    mean_ms = 1000.0 / (workload.arrival.rate_per_s * factor)
    return now + max(1, rng.exponential_ms(mean_ms))


def sample_service_ms(workload: WorkloadSpec, role: str, rng: SeededRng) -> Millis:
    spec = workload.service_time.get(role) or workload.service_time["default"]
    if spec.kind == "fixed":
        return spec.ms
    return rng.exponential_ms(spec.mean_ms)


def trace_to_ndjson(events: Iterable[Event], init_payload: Optional[dict] = None) -> str:
    """Serialize a processed-event list as newline-delimited records of
    (time, seq, kind, payload) for the replay oracle."""
    lines = []
    if init_payload is not None:
        lines.append(json.dumps(
            {"t": 0, "seq": 0, "kind": EventKind.INIT.value, "payload": init_payload},
            sort_keys=True, separators=(",", ":")))
    for ev in events:
        lines.append(json.dumps(
            {"t": ev.time, "seq": ev.seq, "kind": ev.kind.value, "payload": ev.payload},
            sort_keys=True, separators=(",", ":")))
    return "\n".join(lines) + "\n"
