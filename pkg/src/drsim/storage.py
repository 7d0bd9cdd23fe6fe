"""Replicated network file store and cross-zone backup shipping.

The store follows the usual distributed-volume lifecycle: bricks join a
trusted pool via peer probe, a replica volume is created over pool bricks,
clients on the allow-list mount it once started.  Writes replicate to every up
brick and need a quorum (strict majority by default); reads succeed while any
brick is up.

Backups are full snapshots of the primary's data state, shipped over the
inter-zone link; transfer time is size/bandwidth plus link latency, which
keeps the recovery-point arithmetic exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .engine import Millis
from .topology import Container, InterZoneLink


class QuorumPolicy(str, Enum):
    MAJORITY = "majority"
    ALL = "all"
    ONE = "one"


class AlreadyMemberError(Exception):
    pass


class BrickDownError(Exception):
    pass


class UnknownBrickError(Exception):
    pass


class NotStartedError(Exception):
    pass


class ClientNotAllowedError(Exception):
    pass


class QuorumLostError(Exception):
    pass


class AllBricksDownError(Exception):
    pass


class LinkDownError(Exception):
    pass


class SourceUnreadableError(Exception):
    pass


class TrustedPool:
    """Membership set of storage bricks; grows only via peer_probe."""

    def __init__(self):
        self.members: dict[str, Container] = {}

    def peer_probe(self, brick: Container) -> None:
        if brick.id in self.members:
            raise AlreadyMemberError(brick.id)
        if not brick.up:
            raise BrickDownError(brick.id)
        self.members[brick.id] = brick

    def __len__(self) -> int:
        return len(self.members)


class ReplicaVolume:
    """A named replica volume over pool bricks, gated by a client allow-list.

    Data is modeled as a monotone version counter: a write stores the new
    version on every up brick, a read returns the newest version visible on
    any up brick.
    """

    def __init__(self, name: str, bricks: list[Container], pool: TrustedPool,
                 quorum: QuorumPolicy = QuorumPolicy.MAJORITY):
        for b in bricks:
            if b.id not in pool.members:
                raise UnknownBrickError(b.id)
        self.name = name
        self.bricks = bricks
        self.brick_filesystem = "xfs"  # metadata only; no fs semantics modeled
        self.quorum = quorum
        self.allowed_clients: set[str] = set()
        self.started = False
        self.version = 0
        self.stored: dict[str, int] = {b.id: 0 for b in bricks}

    def allow(self, clients: list[str]) -> None:
        self.allowed_clients.update(clients)

    def start(self) -> None:
        self.started = True

    def mount(self, client: str) -> None:
        if not self.started:
            raise NotStartedError(self.name)
        if client not in self.allowed_clients:
            raise ClientNotAllowedError(client)

    def _up_bricks(self) -> list[Container]:
        return [b for b in self.bricks if b.healthy()]

    def _required(self) -> int:
        n = len(self.bricks)
        if self.quorum is QuorumPolicy.ALL:
            return n
        if self.quorum is QuorumPolicy.ONE:
            return 1
        return n // 2 + 1

    def write(self, payload_size_mib: float = 0.0) -> int:
        if not self.started:
            raise NotStartedError(self.name)
        up = self._up_bricks()
        if len(up) < self._required():
            raise QuorumLostError(f"{len(up)}/{len(self.bricks)} bricks up")
        self.version += 1
        for b in up:
            self.stored[b.id] = self.version
        return self.version

    def read(self) -> int:
        if not self.started:
            raise NotStartedError(self.name)
        up = self._up_bricks()
        if not up:
            raise AllBricksDownError(self.name)
        return max(self.stored[b.id] for b in up)

    def readable(self) -> bool:
        return self.started and bool(self._up_bricks())


@dataclass
class Snapshot:
    taken_at: Millis
    data_lsn: int
    size_mib: float
    location: str
    arrives_at: Millis


def transfer_ms(size_mib: float, link: InterZoneLink) -> Millis:
    return math.ceil(size_mib / link.bandwidth_mib_s * 1000) + link.latency_ms


@dataclass
class BackupPipeline:
    """Snapshot capture on the primary side plus the shipped copies that have
    landed at the standby."""

    size_mib: float
    captured: list[Snapshot] = field(default_factory=list)
    at_standby: list[Snapshot] = field(default_factory=list)

    def capture(self, now: Millis, data_lsn: int, link: InterZoneLink,
                source_readable: bool, standby_zone_id: str) -> Snapshot:
        if not link.up:
            raise LinkDownError("snapshot skipped; next tick retries")
        if not source_readable:
            raise SourceUnreadableError("source volume unreadable")
        snap = Snapshot(taken_at=now, data_lsn=data_lsn, size_mib=self.size_mib,
                        location=standby_zone_id,
                        arrives_at=now + transfer_ms(self.size_mib, link))
        self.captured.append(snap)
        return snap

    def arrive(self, snap: Snapshot) -> None:
        if self.at_standby:
            assert snap.taken_at >= self.at_standby[-1].taken_at, \
                "standby snapshot times must be non-decreasing"
        self.at_standby.append(snap)

    def latest_available(self, at_time: Millis) -> Optional[Snapshot]:
        best = None
        for s in self.at_standby:
            if s.arrives_at <= at_time:
                best = s
        return best
