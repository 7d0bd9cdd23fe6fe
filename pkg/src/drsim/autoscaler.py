"""Horizontal autoscaling for the web tier.

The policy watches average outstanding requests per healthy node, scales out
after a sustained breach of the high threshold and back in below the low one,
respects a cooldown between actions, and keeps the node count inside
[min_nodes, max_nodes].  Scale-in drains the newest node: no new requests are
routed to it and in-flight ones complete before it stops, so scaling never
fails a request.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .engine import Millis


class ScaleAction(str, Enum):
    SCALE_OUT = "scale_out"
    SCALE_IN = "scale_in"
    HOLD = "hold"


@dataclass
class AutoscalePolicy:
    high_threshold: float = 8.0
    low_threshold: float = 2.0
    evaluation_interval_ms: Millis = 5000
    sustain_windows: int = 2
    cooldown_ms: Millis = 60_000
    min_nodes: int = 1
    max_nodes: int = 10
    step: int = 1

    def validate(self) -> list[str]:
        problems = []
        if not self.low_threshold < self.high_threshold:
            problems.append("autoscale: low_threshold must be < high_threshold")
        if self.min_nodes < 1:
            problems.append("autoscale: min_nodes must be >= 1")
        if self.min_nodes > self.max_nodes:
            problems.append("autoscale: min_nodes must be <= max_nodes")
        if self.step < 1:
            problems.append("autoscale: step must be >= 1")
        if self.evaluation_interval_ms <= 0:
            problems.append("autoscale: evaluation_interval must be > 0")
        return problems


@dataclass
class Decision:
    action: ScaleAction
    count: int = 0
    reason: str = ""


class Autoscaler:
    """Threshold/sustain/cooldown state machine; the simulation applies the
    decisions it emits."""

    def __init__(self, policy: AutoscalePolicy):
        self.policy = policy
        self.high_streak = 0
        self.low_streak = 0
        self.last_action_at: Optional[Millis] = None

    def in_cooldown(self, now: Millis) -> bool:
        return (self.last_action_at is not None
                and now < self.last_action_at + self.policy.cooldown_ms)

    def evaluate(self, now: Millis, avg_outstanding_per_node: float, node_count: int) -> Decision:
        p = self.policy
        if avg_outstanding_per_node > p.high_threshold:
            self.high_streak += 1
            self.low_streak = 0
        elif avg_outstanding_per_node < p.low_threshold:
            self.low_streak += 1
            self.high_streak = 0
        else:
            self.high_streak = 0
            self.low_streak = 0

        if self.in_cooldown(now):
            return Decision(ScaleAction.HOLD, reason="cooldown")
        if self.high_streak >= p.sustain_windows:
            if node_count >= p.max_nodes:
                return Decision(ScaleAction.HOLD, reason="at_max_nodes")
            n = min(p.step, p.max_nodes - node_count)
            self.high_streak = 0
            self.last_action_at = now
            return Decision(ScaleAction.SCALE_OUT, count=n)
        if self.low_streak >= p.sustain_windows:
            if node_count <= p.min_nodes:
                return Decision(ScaleAction.HOLD, reason="at_min_nodes")
            n = min(p.step, node_count - p.min_nodes)
            self.low_streak = 0
            self.last_action_at = now
            return Decision(ScaleAction.SCALE_IN, count=n)
        return Decision(ScaleAction.HOLD, reason="within_thresholds")
