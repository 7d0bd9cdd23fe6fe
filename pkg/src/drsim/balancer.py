"""Front load balancer: backend pool, health checking, and scheduling.

Three disciplines are supported.  Round-robin cycles a persistent cursor over
healthy backends so every node gets an equal 1/N share.  Least-outstanding
picks the healthy backend with the fewest unprocessed requests.  Weighted uses
smooth weighted round-robin so splits like 70/30 are exact over every
sum-of-weights window, either across nodes or across zones.

Ties always break on the lowest registration index, which keeps every pick
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .topology import Container


class BackendHealth(str, Enum):
    UP = "up"
    DOWN = "down"


class PolicyKind(str, Enum):
    ROUND_ROBIN = "round_robin"
    LEAST_OUTSTANDING = "least_outstanding"
    WEIGHTED = "weighted"


class WeightScope(str, Enum):
    NODE = "node"
    ZONE = "zone"


@dataclass
class SchedulerPolicy:
    kind: PolicyKind
    weights: list[int] = field(default_factory=list)
    weight_scope: WeightScope = WeightScope.NODE


@dataclass
class HealthCheckConfig:
    interval_ms: int = 2000
    fall_threshold: int = 3
    rise_threshold: int = 2


class NoHealthyBackendError(Exception):
    pass


class DuplicateBackendError(Exception):
    pass


@dataclass
class Backend:
    container: Container
    weight: int
    registration_index: int
    health: BackendHealth
    consecutive_fails: int = 0
    consecutive_passes: int = 0
    outstanding: int = 0
    credit: int = 0  # smooth-WRR running credit
    draining: bool = False
    crash_epoch: int = 0  # bumped on node crash so stale completions are ignored

    @property
    def id(self) -> str:
        return self.container.id

    @property
    def zone_id(self) -> str:
        return self.container.zone.id if self.container.zone is not None else ""


class BackendPool:
    """Registered backends plus the persistent scheduling state."""

    def __init__(self, health: Optional[HealthCheckConfig] = None,
                 zone_order: Optional[list[str]] = None):
        self.health_config = health or HealthCheckConfig()
        self.zone_order = zone_order  # weight list aligns with this order
        self.backends: list[Backend] = []
        self._next_index = 0
        self._rr_cursor = 0
        self._zone_rr: dict[str, int] = {}
        self._zone_credit: dict[str, int] = {}

    def register(self, container: Container, weight: int = 1, trusted: bool = False) -> Backend:
        """Add a backend.  Untrusted joiners start excluded and must pass a
        full rise streak of probes before receiving traffic; trusted ones (the
        initial pool, recovery-started standbys) serve immediately."""
        if any(b.container.id == container.id for b in self.backends):
            raise DuplicateBackendError(container.id)
        backend = Backend(
            container=container,
            weight=max(1, weight),
            registration_index=self._next_index,
            health=BackendHealth.UP if trusted else BackendHealth.DOWN,
        )
        self._next_index += 1
        self.backends.append(backend)
        return backend

    def deregister(self, container_id: str) -> None:
        self.backends = [b for b in self.backends if b.container.id != container_id]
        if self.backends:
            self._rr_cursor %= len(self.backends)
        else:
            self._rr_cursor = 0

    def get(self, container_id: str) -> Optional[Backend]:
        for b in self.backends:
            if b.container.id == container_id:
                return b
        return None

    def eligible(self, backend: Backend) -> bool:
        if backend.health is not BackendHealth.UP or backend.draining:
            return False
        zone = backend.container.zone
        return zone is None or zone.serving

    def eligible_backends(self) -> list[Backend]:
        return [b for b in self.backends if self.eligible(b)]

    def pick(self, policy: SchedulerPolicy) -> Backend:
        """Select a backend per the policy; the winner's outstanding count is
        incremented here (release() undoes it for requests that never occupy
        the node)."""
        candidates = self.eligible_backends()
        if not candidates:
            raise NoHealthyBackendError("no healthy backend in pool")
        if policy.kind is PolicyKind.ROUND_ROBIN:
            chosen = self._pick_round_robin()
        elif policy.kind is PolicyKind.LEAST_OUTSTANDING:
            chosen = min(candidates, key=lambda b: (b.outstanding, b.registration_index))
        elif policy.weight_scope is WeightScope.ZONE:
            chosen = self._pick_weighted_zone(policy, candidates)
        else:
            chosen = self._pick_weighted_node(candidates)
        chosen.outstanding += 1
        return chosen

    def release(self, backend: Backend) -> None:
        backend.outstanding = max(0, backend.outstanding - 1)

    def _pick_round_robin(self) -> Backend:
        n = len(self.backends)
        for step in range(n):
            idx = (self._rr_cursor + step) % n
            backend = self.backends[idx]
            if self.eligible(backend):
                self._rr_cursor = (idx + 1) % n
                return backend
        raise NoHealthyBackendError("no healthy backend in pool")

    def _pick_weighted_node(self, candidates: list[Backend]) -> Backend:
        total = 0
        for b in candidates:
            b.credit += b.weight
            total += b.weight
        winner = max(candidates, key=lambda b: (b.credit, -b.registration_index))
        winner.credit -= total
        return winner

    def _pick_weighted_zone(self, policy: SchedulerPolicy, candidates: list[Backend]) -> Backend:
        # smooth WRR over zones with eligible backends, then plain RR inside
        # the winning zone.
        by_zone: dict[str, list[Backend]] = {}
        for b in candidates:
            by_zone.setdefault(b.zone_id, []).append(b)
        order = self.zone_order or sorted(by_zone)
        indexed = {zid: i for i, zid in enumerate(order)}
        zone_ids = sorted(by_zone, key=lambda z: indexed.get(z, len(order)))
        weights = {zid: policy.weights[indexed[zid]]
                   if zid in indexed and indexed[zid] < len(policy.weights) else 1
                   for zid in zone_ids}
        total = 0
        for zid in zone_ids:
            self._zone_credit[zid] = self._zone_credit.get(zid, 0) + weights[zid]
            total += weights[zid]
        winner_zone = max(zone_ids, key=lambda z: (self._zone_credit[z], -zone_ids.index(z)))
        self._zone_credit[winner_zone] -= total

        members = sorted(by_zone[winner_zone], key=lambda b: b.registration_index)
        cursor = self._zone_rr.get(winner_zone, 0) % len(members)
        chosen = members[cursor]
        self._zone_rr[winner_zone] = cursor + 1
        return chosen

    def on_probe_result(self, backend: Backend, passed: bool) -> Optional[BackendHealth]:
        """Record one probe; returns the new health if this probe crossed a
        threshold, else None.  Transitions happen only at exact streaks."""
        if passed:
            backend.consecutive_passes += 1
            backend.consecutive_fails = 0
            if (backend.health is BackendHealth.DOWN
                    and backend.consecutive_passes >= self.health_config.rise_threshold):
                backend.health = BackendHealth.UP
                backend.consecutive_passes = 0
                return BackendHealth.UP
        else:
            backend.consecutive_fails += 1
            backend.consecutive_passes = 0
            if (backend.health is BackendHealth.UP
                    and backend.consecutive_fails >= self.health_config.fall_threshold):
                backend.health = BackendHealth.DOWN
                backend.consecutive_fails = 0
                return BackendHealth.DOWN
        return None

    def crash(self, backend: Backend) -> int:
        """A node crash fails all in-flight requests on the backend at the
        crash instant; returns the number invalidated."""
        in_flight = backend.outstanding
        backend.outstanding = 0
        backend.crash_epoch += 1
        return in_flight
