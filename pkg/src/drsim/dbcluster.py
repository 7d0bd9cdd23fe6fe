"""Master/slave database cluster: read-write split routing, asynchronous
replication at commit-sequence granularity, and the monitor that performs
failover (slave promotion) and planned switchover.

A single monitor is the only promotion authority, so split-brain cannot occur
in-model.  Replication progress is tracked as an LSN (commit sequence number)
per replica, which is what makes promotion loss measurable: on failover the
slave with the highest LSN wins and ``lost_transactions`` is the gap to the
dead master.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .engine import Millis
from .topology import Container


class DbRole(str, Enum):
    MASTER = "master"
    SLAVE = "slave"


class SyncMode(str, Enum):
    ASYNC = "async"
    SYNC = "sync"


@dataclass
class MonitorConfig:
    check_interval_ms: Millis = 1000
    failures_before_failover: int = 3
    promotion_ms: Millis = 1000


class NoMasterError(Exception):
    pass


class NoReplicaError(Exception):
    pass


class NoSlaveAvailableError(Exception):
    pass


class TargetDownError(Exception):
    pass


class SyncCommitBlockedError(Exception):
    """Sync commit cannot reach a cross-zone replica while the link is down."""


@dataclass
class DbReplica:
    container: Container
    role: DbRole
    registration_index: int
    lsn: int = 0
    replication_delay_ms: Millis = 500

    @property
    def id(self) -> str:
        return self.container.id

    @property
    def up(self) -> bool:
        return self.container.up and self.container.data_valid

    @property
    def zone_id(self) -> str:
        return self.container.zone.id if self.container.zone is not None else ""


@dataclass
class FailoverRecord:
    triggered_at: Millis
    completed_at: Millis
    promoted: Optional[str]
    lost_transactions: int
    reason: str = "failover"


@dataclass
class PendingApply:
    """An async replication shipment scheduled for a slave."""
    replica_id: str
    target_lsn: int
    apply_at: Millis
    master_epoch: int


class DbCluster:
    def __init__(self, replicas: list[DbReplica], sync_mode: SyncMode,
                 monitor: MonitorConfig, exclude_master_reads: bool = False):
        self.replicas = replicas
        self.sync_mode = sync_mode
        self.monitor = monitor
        self.exclude_master_reads = exclude_master_reads
        self.master_id: Optional[str] = None
        self.master_epoch = 0
        self.last_master_lsn = 0
        self.monitor_active = True
        self.failover_records: list[FailoverRecord] = []
        self._read_cursor = 0
        self._monitor_fails = 0
        self._promotion_due: Optional[Millis] = None
        self._old_master_lsn_at_trigger = 0
        self._switchover_until: Optional[Millis] = None
        self._switchover_target: Optional[str] = None
        for r in replicas:
            if r.role is DbRole.MASTER and self.master_id is None and r.up:
                self.master_id = r.id

    # ------------------------------------------------------------------ state

    def replica(self, rid: str) -> Optional[DbReplica]:
        for r in self.replicas:
            if r.id == rid:
                return r
        return None

    @property
    def master(self) -> Optional[DbReplica]:
        return self.replica(self.master_id) if self.master_id else None

    def up_slaves(self) -> list[DbReplica]:
        return [r for r in self.replicas if r.role is DbRole.SLAVE and r.up]

    def up_replicas(self) -> list[DbReplica]:
        return [r for r in self.replicas if r.up]

    def write_path_up(self, link_up: bool = True) -> bool:
        m = self.master
        if m is None or not m.up or self._promotion_due is not None:
            return False
        if self._switchover_until is not None:
            return False
        if self.sync_mode is SyncMode.SYNC and not link_up:
            if any(s.zone_id != m.zone_id for s in self.up_slaves()):
                return False
        return True

    def read_path_up(self) -> bool:
        return bool(self.read_candidates())

    def read_candidates(self) -> list[DbReplica]:
        ups = self.up_replicas()
        if self.exclude_master_reads and self.master_id:
            non_master = [r for r in ups if r.id != self.master_id]
            if non_master:
                return non_master
        return ups

    # ---------------------------------------------------------------- routing

    def route_read(self) -> DbReplica:
        """Reads balance round-robin across up replicas, master included
        unless the exclusion flag is set and a slave is available."""
        candidates = self.read_candidates()
        if not candidates:
            raise NoReplicaError("no up replica for reads")
        candidates.sort(key=lambda r: r.registration_index)
        chosen = candidates[self._read_cursor % len(candidates)]
        self._read_cursor += 1
        return chosen

    def route_write(self, link_up: bool = True) -> DbReplica:
        m = self.master
        if m is None or not m.up or self._promotion_due is not None or self._switchover_until is not None:
            raise NoMasterError("no writable master")
        if self.sync_mode is SyncMode.SYNC and not link_up:
            if any(s.zone_id != m.zone_id for s in self.up_slaves()):
                raise SyncCommitBlockedError("cross-zone sync replica unreachable")
        return m

    def commit_write(self, now: Millis, link_up: bool = True) -> list[PendingApply]:
        """Advance the master LSN by one committed transaction.

        Sync mode completes the commit on every up slave immediately; async
        mode returns the shipments to schedule (one per up slave, landing one
        replication delay later).
        """
        master = self.route_write(link_up)
        master.lsn += 1
        self.last_master_lsn = master.lsn
        pending: list[PendingApply] = []
        if self.sync_mode is SyncMode.SYNC:
            for s in self.up_slaves():
                s.lsn = master.lsn
        else:
            for s in self.up_slaves():
                if s.zone_id != master.zone_id and not link_up:
                    continue  # shipment lost until a later write catches it up
                pending.append(PendingApply(
                    replica_id=s.id, target_lsn=master.lsn,
                    apply_at=now + s.replication_delay_ms,
                    master_epoch=self.master_epoch))
        return pending

    def apply_replication(self, apply: PendingApply) -> bool:
        """Land one async shipment; no-ops if the master epoch moved on, the
        slave is down/promoted, or the shipping master is gone."""
        if apply.master_epoch != self.master_epoch:
            return False
        replica = self.replica(apply.replica_id)
        master = self.master
        if replica is None or not replica.up or replica.role is not DbRole.SLAVE:
            return False
        if master is None or not master.up:
            return False
        if apply.target_lsn > replica.lsn:
            replica.lsn = apply.target_lsn
        return True

    # ---------------------------------------------------------------- monitor

    def monitor_tick(self, now: Millis) -> dict:
        """One monitor probe of the master; triggers failover after the
        configured streak of failed probes."""
        out: dict = {"probe": None, "fails": self._monitor_fails, "action": "none"}
        if not self.monitor_active:
            out["action"] = "suppressed"
            return out
        if self._promotion_due is not None:
            out["action"] = "promotion_pending"
            return out
        master = self.master
        if master is not None and master.up:
            out["probe"] = "pass"
            self._monitor_fails = 0
            out["fails"] = 0
            return out
        out["probe"] = "fail"
        self._monitor_fails += 1
        out["fails"] = self._monitor_fails
        if self._monitor_fails >= self.monitor.failures_before_failover:
            self._monitor_fails = 0
            self._old_master_lsn_at_trigger = master.lsn if master is not None else self.last_master_lsn
            self._promotion_due = now + self.monitor.promotion_ms
            out["action"] = "failover_triggered"
            out["promotion_at"] = self._promotion_due
        return out

    def has_pending_promotion(self) -> bool:
        return self._promotion_due is not None

    def reset_monitor(self) -> None:
        """Drop probe streaks and any pending promotion; used when a zone-level
        recovery supersedes the in-zone monitor."""
        self._monitor_fails = 0
        self._promotion_due = None

    def complete_failover(self, now: Millis) -> FailoverRecord:
        """Promote the up slave with the maximal LSN (ties to the lowest
        registration index); writes resume once this lands."""
        triggered = (self._promotion_due or now) - self.monitor.promotion_ms
        self._promotion_due = None
        slaves = self.up_slaves()
        if not slaves:
            record = FailoverRecord(triggered_at=triggered, completed_at=now,
                                    promoted=None, lost_transactions=0,
                                    reason="no_slave_available")
            self.master_id = None
            self.failover_records.append(record)
            return record
        winner = max(slaves, key=lambda s: (s.lsn, -s.registration_index))
        lost = max(0, self._old_master_lsn_at_trigger - winner.lsn)
        self.promote(winner)
        record = FailoverRecord(triggered_at=triggered, completed_at=now,
                                promoted=winner.id, lost_transactions=lost)
        self.failover_records.append(record)
        return record

    def promote(self, replica: DbReplica) -> None:
        # demote every other master-role replica, not just the tracked one: a
        # failover that found no slave leaves a dead master behind with its
        # role intact
        for r in self.replicas:
            if r is not replica and r.role is DbRole.MASTER:
                r.role = DbRole.SLAVE
        replica.role = DbRole.MASTER
        self.master_id = replica.id
        self.master_epoch += 1
        self.last_master_lsn = replica.lsn
        assert sum(1 for r in self.replicas if r.role is DbRole.MASTER) == 1, \
            "single-master invariant violated"

    # ------------------------------------------------------------- switchover

    def begin_switchover(self, target_id: str, now: Millis) -> Millis:
        """Planned, lossless role exchange: writes pause, the target catches
        up within one replication delay, then roles swap."""
        master = self.master
        target = self.replica(target_id)
        if master is None or not master.up:
            raise NoMasterError("switchover requires an up master")
        if target is None or not target.up or target.role is not DbRole.SLAVE:
            raise TargetDownError(target_id)
        self._switchover_until = now + target.replication_delay_ms
        self._switchover_target = target_id
        return self._switchover_until

    def complete_switchover(self, now: Millis) -> FailoverRecord:
        target = self.replica(self._switchover_target or "")
        assert target is not None and self._switchover_until is not None
        master = self.master
        assert master is not None
        target.lsn = master.lsn  # catch-up completes before the swap
        self.promote(target)
        self._switchover_until = None
        self._switchover_target = None
        record = FailoverRecord(triggered_at=now, completed_at=now,
                                promoted=target.id, lost_transactions=0,
                                reason="switchover")
        self.failover_records.append(record)
        return record
