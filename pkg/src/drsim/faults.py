"""Scheduled fault injection.

Faults are the only source of involuntary down transitions in a run: node
crashes, whole-zone outages, inter-zone link cuts, and data corruption (the
in-model stand-in for ransomware or a destructive query, which is
indistinguishable from data loss for recovery-point purposes).  Schedules are
explicit rather than sampled so every disaster scenario replays bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .engine import Millis


class FaultKind(str, Enum):
    NODE_CRASH = "node_crash"
    NODE_RECOVER = "node_recover"
    ZONE_OUTAGE = "zone_outage"
    ZONE_RECOVER = "zone_recover"
    LINK_DOWN = "link_down"
    DATA_CORRUPTION = "data_corruption"


class UnknownTargetError(Exception):
    pass


@dataclass
class FaultSpec:
    at_ms: Millis
    kind: FaultKind
    target: str  # container id, zone id, or "link"
    duration_ms: Optional[Millis] = None  # link_down only

    def as_dict(self) -> dict:
        d = {"at_ms": self.at_ms, "kind": self.kind.value, "target": self.target}
        if self.duration_ms is not None:
            d["duration_ms"] = self.duration_ms
        return d


CONTAINER_FAULTS = {FaultKind.NODE_CRASH, FaultKind.NODE_RECOVER, FaultKind.DATA_CORRUPTION}
ZONE_FAULTS = {FaultKind.ZONE_OUTAGE, FaultKind.ZONE_RECOVER}
