"""Run orchestration: builds live cluster state from a scenario, wires every
subsystem through the single event queue, and assembles the run report.

Each handler enriches its event payload with the state facts it applied
(containers downed, health transitions, promotions, redirects), so the
exported trace doubles as a replay log from which the availability oracle can
rebuild the run without touching any live object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

from . import topology as topo
from .autoscaler import Autoscaler, ScaleAction
from .balancer import (BackendHealth, BackendPool, NoHealthyBackendError,
                       PolicyKind)
from .dbcluster import (DbCluster, DbReplica, DbRole, NoMasterError,
                        NoReplicaError, PendingApply, SyncCommitBlockedError)
from .drctl import (DrMode, FailoverStateMachine, RecoveryStage,
                    StandbyPosture, TargetNotServingError, build_record,
                    detection_latency_ms)
from .engine import (Engine, Event, EventKind, Millis, SeededRng, WorkloadSpec,
                     next_arrival, sample_service_ms, trace_to_ndjson)
from .faults import FaultKind
from .metrics import (AvailabilityTracker, measure_rto_rpo, scenario_digest,
                      sla_to_downtime)
from .scenario import ScenarioSpec, build_topology
from .storage import (BackupPipeline, LinkDownError, ReplicaVolume, Snapshot,
                      SourceUnreadableError, TrustedPool)
from .topology import Container, ContainerRole, ZoneMode, ZoneRole

OUTCOME_SUCCESS = "success"
OUTCOME_SERVICE_UNAVAILABLE = "service_unavailable"
OUTCOME_NODE_CRASHED = "node_crashed"
OUTCOME_WRITE_UNAVAILABLE = "write_unavailable"
OUTCOME_READ_UNAVAILABLE = "read_unavailable"
OUTCOME_IN_FLIGHT = "in_flight"


@dataclass
class RequestRecord:
    kind: str
    arrival: Millis
    backend: Optional[str] = None
    dispatched_at: Optional[Millis] = None
    completed_at: Optional[Millis] = None
    outcome: Optional[str] = None


@dataclass
class RunResult:
    report: dict
    trace_ndjson: str
    invariant_failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.invariant_failures


class SimulationRun:
    """One deterministic simulation of a scenario under a seed."""

    def __init__(self, spec: ScenarioSpec, seed: Optional[int] = None,
                 duration_override: Optional[Millis] = None):
        self.spec = spec
        self.seed = spec.seed if seed is None else seed
        self.duration: Millis = duration_override or spec.duration_ms
        self.params = spec.dr_params
        self.rng = SeededRng(self.seed)
        self.engine = Engine(handler=self._handle)
        self.invariant_failures: list[str] = []

        self.topology = build_topology(spec)
        self.containers: dict[str, Container] = {
            c.id: c for z in self.topology.zones for c in z.containers}
        self.workload = WorkloadSpec(
            arrival=spec.arrival, duration_ms=self.duration,
            read_fraction=spec.read_fraction, service_time=spec.service_time,
            surge=spec.surge)

        self._apply_postures()
        self.pool = BackendPool(health=spec.health,
                                zone_order=[z.id for z in self.topology.zones])
        self._register_initial_backends()
        self.db = self._build_db_cluster()
        self.volume, self.storage_pool = self._build_storage()
        self.pipeline: Optional[BackupPipeline] = None
        if self.params.backup_cadence_ms is not None:
            self.pipeline = BackupPipeline(size_mib=spec.snapshot_size_mib)
        self.autoscaler = Autoscaler(spec.autoscale) if spec.autoscale else None

        self.detection_latency = detection_latency_ms(spec.monitor)
        self.recovery_records: list[dict] = []
        self.recovery_active = False
        self._recovery_ctx: Optional[dict] = None
        self._recovery_epoch = 0  # stale-steps guard across aborted recoveries
        self._system_down_since: Optional[Millis] = None

        # request accounting
        self.requests: dict[int, RequestRecord] = {}
        self._next_request_id = 1
        self.per_backend: dict[str, int] = {}
        self.failed_by_reason: dict[str, int] = {}
        self.failed_before_dispatch = 0
        self._in_flight: dict[str, set[int]] = {}

        # metric integration
        self.tracker = AvailabilityTracker()
        self._integral_last: Millis = 0
        self._outstanding_integral = 0
        self._node_integral = 0
        self._scale_actions: list[dict] = []
        self._scale_evals: list[dict] = []
        self._pending_scale_starts = 0
        self._scale_seq = 0

        self._schedule_initial_events()
        self._init_payload = self._snapshot_initial_state()

    # ----------------------------------------------------------------- setup

    def _apply_postures(self) -> None:
        primary = self.topology.primary()
        standby = self.topology.standby()
        primary.mode = ZoneMode.ACTIVE
        primary.serving = True
        for c in primary.containers:
            c.up = True
        posture = self.params.posture
        if posture in (StandbyPosture.COLD_OFFSITE, StandbyPosture.IDLE_CONFIGURED):
            standby.mode = ZoneMode.IDLE
            standby.serving = False
            for c in standby.containers:
                c.up = False
        else:
            standby.mode = ZoneMode.ACTIVE
            standby.serving = posture is StandbyPosture.SERVING_SHARE
            for c in standby.containers:
                c.up = True

    def _register_initial_backends(self) -> None:
        policy = self.spec.balancer_policy
        primary_webs = self.topology.primary().by_role(ContainerRole.WEB_SERVER)
        node_weights = {}
        if policy.kind is PolicyKind.WEIGHTED and policy.weight_scope.value == "node":
            for i, c in enumerate(primary_webs):
                if i < len(policy.weights):
                    node_weights[c.id] = policy.weights[i]
        for zone in self.topology.zones:
            for c in zone.by_role(ContainerRole.WEB_SERVER):
                if not c.up and zone.mode is ZoneMode.IDLE:
                    continue  # idle standby webs join at recovery time
                self.pool.register(c, weight=node_weights.get(c.id, 1), trusted=True)

    def _build_db_cluster(self) -> DbCluster:
        replicas: list[DbReplica] = []
        idx = 0
        primary = self.topology.primary()
        for zone in self.topology.zones:
            for c in zone.containers:
                if c.role not in (ContainerRole.DB_MASTER, ContainerRole.DB_SLAVE):
                    continue
                live_role = (DbRole.MASTER
                             if zone is primary and c.role is ContainerRole.DB_MASTER
                             else DbRole.SLAVE)
                delay = self.spec.replication_delay_ms
                if zone is not primary and self.params.standby_replication_delay_ms:
                    delay = self.params.standby_replication_delay_ms
                replicas.append(DbReplica(container=c, role=live_role,
                                          registration_index=idx, lsn=0,
                                          replication_delay_ms=delay))
                idx += 1
        return DbCluster(replicas, sync_mode=self.spec.sync_mode,
                         monitor=self.spec.monitor,
                         exclude_master_reads=self.spec.exclude_master_reads)

    def _build_storage(self):
        primary = self.topology.primary()
        bricks = primary.by_role(ContainerRole.STORAGE_BRICK)
        if not bricks:
            return None, None
        pool = TrustedPool()
        for b in bricks:
            pool.peer_probe(b)
        volume = ReplicaVolume("gv0", bricks, pool, quorum=self.spec.quorum)
        volume.allow([c.id for c in primary.by_role(ContainerRole.WEB_SERVER)])
        volume.start()
        return volume, pool

    def _schedule_initial_events(self) -> None:
        spec = self.spec
        if self.pipeline is not None:
            # the standby zone is seeded with the primary's state at provisioning
            self._capture_snapshot(0, baseline=True)
            cadence = self.params.backup_cadence_ms
            if cadence and cadence <= self.duration:
                self.engine.schedule(cadence, EventKind.BACKUP_TICK, {"phase": "capture"})
        if spec.health.interval_ms <= self.duration:
            self.engine.schedule(spec.health.interval_ms, EventKind.HEALTH_PROBE, {})
        if spec.monitor.check_interval_ms <= self.duration:
            self.engine.schedule(spec.monitor.check_interval_ms, EventKind.MONITOR_TICK, {})
        if self.autoscaler is not None:
            interval = self.autoscaler.policy.evaluation_interval_ms
            if interval <= self.duration:
                self.engine.schedule(interval, EventKind.SCALE_EVALUATION, {})
        for fault in spec.faults:
            self.engine.schedule(fault.at_ms, EventKind.FAULT_TRIGGER, fault.as_dict())
        first = next_arrival(self.workload, self.rng, 0)
        if first < self.duration:
            self.engine.schedule(first, EventKind.REQUEST_ARRIVAL, {})

    def _snapshot_initial_state(self) -> dict:
        return {
            "duration_ms": self.duration,
            "dr_mode": self.spec.dr_mode.value,
            "sync_mode": self.spec.sync_mode.value,
            "link_up": self.topology.link.up,
            "zones": [{"id": z.id, "role": z.role.value, "mode": z.mode.value,
                       "serving": z.serving} for z in self.topology.zones],
            "containers": [{"id": c.id, "zone": c.zone.id, "role": c.role.value,
                            "up": c.up, "data_valid": c.data_valid}
                           for z in self.topology.zones for c in z.containers],
            "backends": [{"id": b.id, "zone": b.zone_id, "weight": b.weight,
                          "registration_index": b.registration_index,
                          "health": b.health.value} for b in self.pool.backends],
            "db": {"master": self.db.master_id,
                   "replicas": [{"id": r.id, "zone": r.zone_id, "role": r.role.value,
                                 "lsn": r.lsn} for r in self.db.replicas]},
        }

    # ------------------------------------------------------------------- run

    def run(self) -> RunResult:
        self.engine.run_until(self.duration)
        self._integrate(self.duration)
        self.tracker.finalize(self.duration)
        report = self._build_report()
        trace = trace_to_ndjson(self.engine.trace, init_payload=self._init_payload)
        return RunResult(report=report, trace_ndjson=trace,
                         invariant_failures=list(self.invariant_failures))

    def _handle(self, ev: Event) -> None:
        handlers = {
            EventKind.REQUEST_ARRIVAL: self._on_request_arrival,
            EventKind.SERVICE_COMPLETION: self._on_service_completion,
            EventKind.HEALTH_PROBE: self._on_health_probe,
            EventKind.MONITOR_TICK: self._on_monitor_tick,
            EventKind.REPLICATION_APPLY: self._on_replication_apply,
            EventKind.BACKUP_TICK: self._on_backup_tick,
            EventKind.FAULT_TRIGGER: self._on_fault_trigger,
            EventKind.SCALE_EVALUATION: self._on_scale_evaluation,
            EventKind.RECOVERY_STEP: self._on_recovery_step,
        }
        self._integrate(ev.time)
        handlers[ev.kind](ev)
        self.tracker.observe(ev.time, self._read_path_up(), self._write_path_up())

    # -------------------------------------------------------- path predicates

    def _front_up(self) -> bool:
        for zone in self.topology.zones:
            if not zone.serving:
                continue
            if any(c.healthy() for c in zone.by_role(ContainerRole.BALANCER_FRONT)):
                return True
        return False

    def _web_up(self) -> bool:
        return any(self.pool.eligible(b) and b.container.healthy()
                   for b in self.pool.backends)

    def _read_path_up(self) -> bool:
        return self._front_up() and self._web_up() and self.db.read_path_up()

    def _write_path_up(self) -> bool:
        return (self._front_up() and self._web_up()
                and self.db.write_path_up(self.topology.link.up))

    def _integrate(self, now: Millis) -> None:
        elapsed = now - self._integral_last
        if elapsed > 0:
            self._outstanding_integral += self._total_outstanding() * elapsed
            self._node_integral += len(self._up_web_backends()) * elapsed
        self._integral_last = now

    def _total_outstanding(self) -> int:
        return sum(b.outstanding for b in self.pool.backends)

    def _up_web_backends(self):
        return [b for b in self.pool.backends
                if b.health is BackendHealth.UP and not b.draining
                and (b.container.zone is None or b.container.zone.serving)]

    # -------------------------------------------------------------- requests

    def _on_request_arrival(self, ev: Event) -> None:
        now = ev.time
        rid = self._next_request_id
        self._next_request_id += 1
        kind = "read" if self.rng.uniform01() < self.workload.read_fraction else "write"
        rec = RequestRecord(kind=kind, arrival=now)
        self.requests[rid] = rec
        ev.payload.update({"rid": rid, "req": kind})

        nxt = next_arrival(self.workload, self.rng, now)
        if nxt < self.duration:
            self.engine.schedule(nxt, EventKind.REQUEST_ARRIVAL, {})

        if not self._front_up():
            self._fail(rec, OUTCOME_SERVICE_UNAVAILABLE, before_dispatch=True)
            ev.payload["outcome"] = rec.outcome
            return
        try:
            backend = self.pool.pick(self.spec.balancer_policy)
        except NoHealthyBackendError:
            self._fail(rec, OUTCOME_SERVICE_UNAVAILABLE, before_dispatch=True)
            ev.payload["outcome"] = rec.outcome
            return

        rec.backend = backend.id
        rec.dispatched_at = now
        self.per_backend[backend.id] = self.per_backend.get(backend.id, 0) + 1
        ev.payload["backend"] = backend.id

        if not backend.container.healthy():
            # the balancer has not noticed the crash yet; the request lands on
            # a dead node and fails there without occupying it
            self.pool.release(backend)
            self._fail(rec, OUTCOME_NODE_CRASHED)
            ev.payload["outcome"] = rec.outcome
            return

        if kind == "write":
            try:
                pending = self.db.commit_write(now, link_up=self.topology.link.up)
            except (NoMasterError, SyncCommitBlockedError):
                self.pool.release(backend)
                self._fail(rec, OUTCOME_WRITE_UNAVAILABLE)
                ev.payload["outcome"] = rec.outcome
                return
            for apply in pending:
                self.engine.schedule(apply.apply_at, EventKind.REPLICATION_APPLY, {
                    "replica": apply.replica_id, "target_lsn": apply.target_lsn,
                    "master_epoch": apply.master_epoch})
            ev.payload["lsn"] = self.db.last_master_lsn
        else:
            try:
                replica = self.db.route_read()
                ev.payload["db_read"] = replica.id
            except NoReplicaError:
                self.pool.release(backend)
                self._fail(rec, OUTCOME_READ_UNAVAILABLE)
                ev.payload["outcome"] = rec.outcome
                return

        self._in_flight.setdefault(backend.id, set()).add(rid)
        svc = sample_service_ms(self.workload, backend.container.role.value, self.rng)
        self.engine.schedule(now + svc, EventKind.SERVICE_COMPLETION, {
            "rid": rid, "backend": backend.id, "epoch": backend.crash_epoch})
        ev.payload.update({"svc_ms": svc, "outcome": "dispatched"})

    def _fail(self, rec: RequestRecord, reason: str, before_dispatch: bool = False) -> None:
        rec.outcome = reason
        self.failed_by_reason[reason] = self.failed_by_reason.get(reason, 0) + 1
        if before_dispatch:
            self.failed_before_dispatch += 1

    def _on_service_completion(self, ev: Event) -> None:
        p = ev.payload
        backend = self.pool.get(p["backend"])
        if backend is None or backend.crash_epoch != p["epoch"]:
            p["stale"] = True
            return
        backend.outstanding -= 1
        if backend.outstanding < 0:
            self.invariant_failures.append(
                f"outstanding went negative on {backend.id} at t={ev.time}")
            backend.outstanding = 0
        rec = self.requests[p["rid"]]
        rec.outcome = OUTCOME_SUCCESS
        rec.completed_at = ev.time
        self._in_flight.get(backend.id, set()).discard(p["rid"])
        p["outcome"] = OUTCOME_SUCCESS
        if backend.draining and backend.outstanding == 0:
            self._finish_drain(backend, p)

    def _finish_drain(self, backend, payload: dict) -> None:
        self.pool.deregister(backend.id)
        backend.container.up = False  # voluntary stop after drain
        payload.setdefault("drain_deregistered", []).append(backend.id)
        payload.setdefault("containers_stopped", []).append(backend.container.id)

    # ------------------------------------------------------------ health/mon

    def _on_health_probe(self, ev: Event) -> None:
        results = []
        for backend in list(self.pool.backends):
            passed = backend.container.healthy()
            transition = self.pool.on_probe_result(backend, passed)
            entry = {"backend": backend.id, "pass": passed}
            if transition is not None:
                entry["transition"] = transition.value
            results.append(entry)
        ev.payload["results"] = results
        nxt = ev.time + self.spec.health.interval_ms
        if nxt <= self.duration:
            self.engine.schedule(nxt, EventKind.HEALTH_PROBE, {})

    def _on_monitor_tick(self, ev: Event) -> None:
        out = self.db.monitor_tick(ev.time)
        ev.payload.update(out)
        if out["action"] == "failover_triggered":
            ev.payload["write_blocked"] = True
            self.engine.schedule(out["promotion_at"], EventKind.RECOVERY_STEP,
                                 {"step": "db_promotion"})
        nxt = ev.time + self.spec.monitor.check_interval_ms
        if nxt <= self.duration:
            self.engine.schedule(nxt, EventKind.MONITOR_TICK, {})

    def _on_replication_apply(self, ev: Event) -> None:
        p = ev.payload
        apply = PendingApply(replica_id=p["replica"], target_lsn=p["target_lsn"],
                             apply_at=ev.time, master_epoch=p["master_epoch"])
        p["applied"] = self.db.apply_replication(apply)

    # ---------------------------------------------------------------- backup

    def _capture_snapshot(self, now: Millis, baseline: bool = False) -> Optional[Snapshot]:
        assert self.pipeline is not None
        primary = self.topology.primary()
        standby = self.topology.standby()
        readable = ((self.volume.readable() if self.volume is not None else True)
                    and primary.mode is not ZoneMode.FAILED and primary.serving)
        snap = self.pipeline.capture(now, data_lsn=self.db.last_master_lsn,
                                     link=self.topology.link,
                                     source_readable=readable,
                                     standby_zone_id=standby.id)
        self.engine.schedule(snap.arrives_at, EventKind.BACKUP_TICK, {
            "phase": "arrival", "taken_at": snap.taken_at,
            "data_lsn": snap.data_lsn, "size_mib": snap.size_mib,
            "location": snap.location, "baseline": baseline})
        return snap

    def _on_backup_tick(self, ev: Event) -> None:
        p = ev.payload
        if self.pipeline is None:
            p["skipped"] = "no_pipeline"
            return
        if p.get("phase") == "arrival":
            snap = Snapshot(taken_at=p["taken_at"], data_lsn=p["data_lsn"],
                            size_mib=p["size_mib"], location=p["location"],
                            arrives_at=ev.time)
            dest = self.topology.zone(p["location"])
            if dest is not None and dest.mode is ZoneMode.FAILED:
                p["dropped"] = "destination_failed"
                return
            self.pipeline.arrive(snap)
            p["arrived"] = True
            return
        # capture phase
        try:
            snap = self._capture_snapshot(ev.time)
            p.update({"taken_at": snap.taken_at, "data_lsn": snap.data_lsn,
                      "arrives_at": snap.arrives_at})
        except LinkDownError:
            p["skipped"] = "link_down"
        except SourceUnreadableError:
            p["skipped"] = "source_unreadable"
        cadence = self.params.backup_cadence_ms or 0
        nxt = ev.time + cadence
        if cadence and nxt <= self.duration:
            self.engine.schedule(nxt, EventKind.BACKUP_TICK, {"phase": "capture"})

    # ---------------------------------------------------------------- faults

    def _on_fault_trigger(self, ev: Event) -> None:
        p = ev.payload
        kind = FaultKind(p["kind"])
        target = p["target"]
        now = ev.time
        if kind is FaultKind.NODE_CRASH:
            self._crash_container(self.containers[target], p)
        elif kind is FaultKind.NODE_RECOVER:
            c = self.containers[target]
            if c.up and c.data_valid:
                p["idempotent"] = True
            else:
                c.up = True
                c.data_valid = True
                p["container_up"] = c.id
        elif kind is FaultKind.ZONE_OUTAGE:
            self._zone_outage(self.topology.zone(target), now, p)
        elif kind is FaultKind.ZONE_RECOVER:
            self._zone_recover(self.topology.zone(target), now, p)
        elif kind is FaultKind.LINK_DOWN:
            self.topology.link.up = False
            p["link_up"] = False
            restore_at = now + (p.get("duration_ms") or 0)
            p["restore_at"] = restore_at
            self.engine.schedule(restore_at, EventKind.RECOVERY_STEP,
                                 {"step": "link_restore"})
        elif kind is FaultKind.DATA_CORRUPTION:
            c = self.containers[target]
            if not c.data_valid:
                p["idempotent"] = True
            else:
                c.data_valid = False
                p["data_invalid"] = c.id
                restore_ms = self._restore_duration_ms()
                p["restore_at"] = now + restore_ms
                self.engine.schedule(now + restore_ms, EventKind.RECOVERY_STEP,
                                     {"step": "data_restore", "container": c.id})

    def _crash_container(self, c: Container, p: dict) -> None:
        if not c.up:
            p["idempotent"] = True
            return
        c.up = False
        p["container_down"] = c.id
        backend = self.pool.get(c.id)
        if backend is not None:
            backend.crash_epoch += 1
            n = backend.outstanding
            backend.outstanding = 0
            for rid in self._in_flight.pop(c.id, set()):
                rec = self.requests[rid]
                if rec.outcome is None:
                    self._fail(rec, OUTCOME_NODE_CRASHED)
            p["in_flight_failed"] = n

    def _zone_outage(self, zone, now: Millis, p: dict) -> None:
        if zone.mode is ZoneMode.FAILED:
            p["idempotent"] = True
            return
        # the routing flag stays set until a redirect: the balancer keeps
        # sending the failed zone its share during the detection window, and
        # those requests fail on the dead nodes
        was_serving = zone.serving
        zone.mode = ZoneMode.FAILED
        downed = []
        in_flight_failed = 0
        for c in zone.containers:
            if c.up:
                sub: dict = {}
                self._crash_container(c, sub)
                in_flight_failed += sub.get("in_flight_failed", 0)
                downed.append(c.id)
        p.update({"containers_down": downed, "zone_mode": "failed",
                  "in_flight_failed": in_flight_failed})
        master = self.db.master
        if master is not None and master.zone_id == zone.id:
            self.db.monitor_active = False
            p["monitor_suppressed"] = True
        if (self.recovery_active and self._recovery_ctx is not None
                and self._recovery_ctx["to_zone"] == zone.id):
            self._abort_recovery(now, p)
            return
        if not was_serving:
            return
        survivor = next((z for z in self.topology.zones if z is not zone), None)
        if survivor is None or survivor.mode is ZoneMode.FAILED:
            p["standby_unavailable"] = True
            self._system_down_since = now
            return
        if self.recovery_active:
            p["recovery_already_active"] = True
            return
        self._begin_recovery(zone, survivor, now,
                             now + self.detection_latency, p)

    def _begin_recovery(self, failed_zone, to_zone, failure_time: Millis,
                        detected_at: Millis, p: dict) -> None:
        self.recovery_active = True
        self._recovery_epoch += 1
        self._recovery_ctx = {
            "fsm": FailoverStateMachine(),
            "epoch": self._recovery_epoch,
            "failure_time": failure_time,
            "detected_at": detected_at,
            "failed_zone": failed_zone.id,
            "to_zone": to_zone.id,
            "primary_lsn": self.db.last_master_lsn,
        }
        p["recovery"] = {"detected_at": detected_at, "to_zone": to_zone.id}
        self._schedule_dr_step(detected_at, "dr_detected")

    def _schedule_dr_step(self, at: Millis, step: str, extra: Optional[dict] = None) -> None:
        assert self._recovery_ctx is not None
        payload = {"step": step, "epoch": self._recovery_ctx["epoch"]}
        if extra:
            payload.update(extra)
        self.engine.schedule(at, EventKind.RECOVERY_STEP, payload)

    def _abort_recovery(self, now: Millis, p: dict) -> None:
        """The recovery target died mid-recovery; pending steps go stale and
        the system stays down until something else recovers."""
        ctx = self._recovery_ctx
        assert ctx is not None
        p["recovery_aborted"] = {"to_zone": ctx["to_zone"]}
        if self._system_down_since is None:
            if self.params.posture is StandbyPosture.SERVING_SHARE:
                self._system_down_since = now  # the target was still serving reads
            else:
                self._system_down_since = ctx["failure_time"]
        self.recovery_active = False
        self._recovery_ctx = None

    def _zone_recover(self, zone, now: Millis, p: dict) -> None:
        if zone.mode is not ZoneMode.FAILED:
            p["idempotent"] = True
            return
        zone.mode = ZoneMode.IDLE
        zone.serving = False
        if any(z.role is ZoneRole.PRIMARY and z is not zone for z in self.topology.zones):
            zone.role = ZoneRole.STANDBY
        p.update({"zone_mode": "idle", "zone_serving": False, "zone_role": zone.role.value})
        nothing_serving = not any(
            z.serving and z.mode is not ZoneMode.FAILED for z in self.topology.zones)
        if nothing_serving and not self.recovery_active:
            # nothing serves anywhere: recover directly into this zone,
            # operator-driven so detection is immediate
            failure_time = self._system_down_since if self._system_down_since is not None else now
            other = next(z for z in self.topology.zones if z is not zone)
            self._begin_recovery(other, zone, failure_time, now, p)

    def _restore_duration_ms(self) -> Millis:
        return math.ceil(self.spec.snapshot_size_mib / self.params.restore_rate_mib_s * 1000)

    # --------------------------------------------------------------- scaling

    def _on_scale_evaluation(self, ev: Event) -> None:
        now = ev.time
        p = ev.payload
        if self.autoscaler is None:
            return
        nxt = now + self.autoscaler.policy.evaluation_interval_ms
        if nxt <= self.duration:
            self.engine.schedule(nxt, EventKind.SCALE_EVALUATION, {})
        serving_zones = [z for z in self.topology.zones
                         if z.serving and z.mode is ZoneMode.ACTIVE]
        if self.recovery_active or not serving_zones:
            p["dropped"] = "zone_unavailable"
            return
        up_nodes = self._up_web_backends()
        pool_members = [b for b in self.pool.backends if not b.draining
                        and b.container.zone in serving_zones]
        node_count = len(pool_members) + self._pending_scale_starts
        metric = (sum(b.outstanding for b in up_nodes) / len(up_nodes)) if up_nodes else 0.0
        decision = self.autoscaler.evaluate(now, metric, node_count)
        p.update({"metric": round(metric, 6), "nodes": node_count,
                  "decision": decision.action.value})
        self._scale_evals.append({"t_ms": now, "metric": metric,
                                  "action": decision.action.value})
        if decision.action is ScaleAction.HOLD:
            if decision.reason:
                p["reason"] = decision.reason
            return
        if decision.action is ScaleAction.SCALE_OUT:
            started = []
            zone = serving_zones[0]
            template = zone.by_role(ContainerRole.WEB_SERVER)
            delay = template[0].spec.startup_delay_ms if template else 0
            for _ in range(decision.count):
                self._scale_seq += 1
                cid = f"web-{zone.id.lower()}-as{self._scale_seq}"
                cspec = topo.ContainerSpec(id=cid, role=ContainerRole.WEB_SERVER,
                                           startup_delay_ms=delay)
                container = Container(spec=cspec, zone=zone)
                zone.containers.append(container)
                self.containers[cid] = container
                up_at = topo.begin_start(container, now)
                self._pending_scale_starts += 1
                self.engine.schedule(up_at, EventKind.RECOVERY_STEP,
                                     {"step": "scale_container_up", "container": cid})
                started.append({"id": cid, "up_at": up_at})
            p["started"] = started
            self._log_scale_action(now, "scale_out", node_count,
                                   node_count + len(started))
        else:
            victims = sorted(pool_members,
                             key=lambda b: -b.registration_index)[:decision.count]
            drained = []
            for b in victims:
                b.draining = True
                drained.append(b.id)
                if b.outstanding == 0:
                    self._finish_drain(b, p)
            p["draining"] = drained
            self._log_scale_action(now, "scale_in", node_count,
                                   node_count - len(drained))

    def _log_scale_action(self, now: Millis, action: str, from_nodes: int, to_nodes: int) -> None:
        self._scale_actions.append({"t_ms": now, "action": action,
                                    "from_nodes": from_nodes, "to_nodes": to_nodes})

    # --------------------------------------------------------- recovery steps

    def redirect_traffic(self, to_zone_id: str) -> None:
        """Swap the serving pool to the target zone at the current instant."""
        zone = self.topology.zone(to_zone_id)
        if zone is None or not (zone.mode is ZoneMode.ACTIVE and zone.serving):
            raise TargetNotServingError(to_zone_id)
        for z in self.topology.zones:
            if z is not zone:
                z.serving = False

    def _on_recovery_step(self, ev: Event) -> None:
        step = ev.payload["step"]
        now = ev.time
        p = ev.payload
        if step.startswith("dr_"):
            ctx = self._recovery_ctx
            if ctx is None or p.get("epoch") != ctx["epoch"]:
                p["stale"] = True  # this recovery was aborted or superseded
                return
        if step == "db_promotion":
            if not self.db.has_pending_promotion():
                p["canceled"] = True  # a zone-level recovery superseded this
                return
            record = self.db.complete_failover(now)
            p.update({"promoted": record.promoted, "db_master": self.db.master_id,
                      "lost_transactions": record.lost_transactions})
            if record.lost_transactions < 0:
                self.invariant_failures.append("negative lost_transactions")
        elif step == "link_restore":
            self.topology.link.up = True
            p["link_up"] = True
        elif step == "data_restore":
            c = self.containers[p["container"]]
            c.data_valid = True
            p["data_valid"] = c.id
        elif step == "scale_container_up":
            c = self.containers[p["container"]]
            topo.finish_start(c)
            self._pending_scale_starts -= 1
            backend = self.pool.register(c, weight=1, trusted=False)
            p.update({"container_up": c.id,
                      "registered": {"id": c.id, "zone": c.zone.id, "weight": 1,
                                     "registration_index": backend.registration_index,
                                     "health": backend.health.value}})
        elif step == "dr_detected":
            self._dr_detected(now, p)
        elif step == "dr_activation":
            self._dr_activation(now, p)
        elif step == "dr_container_up":
            c = self.containers[p["container"]]
            topo.finish_start(c)
            p["container_up"] = c.id
        elif step == "dr_restore_start":
            self._dr_restore_start(now, p)
        elif step == "dr_serving":
            self._dr_serving(now, p)

    def _dr_detected(self, now: Millis, p: dict) -> None:
        ctx = self._recovery_ctx
        assert ctx is not None
        ctx["fsm"].advance(RecoveryStage.DETECTED, now)
        mode = self.spec.dr_mode
        if mode in (DrMode.WARM_STANDBY, DrMode.ACTIVE_ACTIVE):
            serving_at = now + self.params.redirect_delay_ms
            p["serving_at"] = serving_at
            self._schedule_dr_step(serving_at, "dr_serving")
            return
        activation_at = (now + self.params.operator_delay_ms
                         + self.params.manual_recovery_delay_ms)
        p["activation_at"] = activation_at
        self._schedule_dr_step(activation_at, "dr_activation")

    def _dr_activation(self, now: Millis, p: dict) -> None:
        ctx = self._recovery_ctx
        assert ctx is not None
        ctx["fsm"].advance(RecoveryStage.ACTIVATING, now)
        zone = self.topology.zone(ctx["to_zone"])
        assert zone is not None
        zone.mode = ZoneMode.ACTIVATING
        p["zone_activating"] = zone.id
        starts = []
        max_up = now
        db_up = now
        for c in zone.containers:
            up_at = topo.begin_start(c, now)
            self._schedule_dr_step(up_at, "dr_container_up", {"container": c.id})
            starts.append({"id": c.id, "up_at": up_at})
            max_up = max(max_up, up_at)
            if c.role in (ContainerRole.DB_MASTER, ContainerRole.DB_SLAVE):
                db_up = max(db_up, up_at)
        restore_ms = self._restore_duration_ms() if self.pipeline is not None else 0
        if self.pipeline is not None:
            self._schedule_dr_step(db_up, "dr_restore_start")
            serving_at = max(max_up, db_up + restore_ms)
        else:
            serving_at = max_up
        ctx["serving_at"] = serving_at
        p.update({"starts": starts, "serving_at": serving_at})
        self._schedule_dr_step(serving_at, "dr_serving")

    def _dr_restore_start(self, now: Millis, p: dict) -> None:
        ctx = self._recovery_ctx
        assert ctx is not None
        ctx["fsm"].advance(RecoveryStage.RESTORING, now)
        snap = self.pipeline.latest_available(now) if self.pipeline is not None else None
        ctx["snapshot"] = snap
        if snap is not None:
            p.update({"snapshot_taken_at": snap.taken_at, "snapshot_lsn": snap.data_lsn})
        else:
            p["snapshot_taken_at"] = None

    def _dr_serving(self, now: Millis, p: dict) -> None:
        ctx = self._recovery_ctx
        assert ctx is not None
        fsm: FailoverStateMachine = ctx["fsm"]
        fsm.advance(RecoveryStage.SERVING, now)
        zone = self.topology.zone(ctx["to_zone"])
        failed = self.topology.zone(ctx["failed_zone"])
        assert zone is not None and failed is not None
        zone.mode = ZoneMode.ACTIVE
        zone.serving = True
        zone.role = ZoneRole.PRIMARY
        failed.role = ZoneRole.STANDBY
        self.redirect_traffic(zone.id)
        if sum(1 for z in self.topology.zones if z.role is ZoneRole.PRIMARY) != 1:
            self.invariant_failures.append("more than one primary zone")

        registered = []
        for c in zone.by_role(ContainerRole.WEB_SERVER):
            if self.pool.get(c.id) is None and c.up:
                b = self.pool.register(c, weight=1, trusted=True)
                registered.append({"id": c.id, "zone": zone.id, "weight": 1,
                                   "registration_index": b.registration_index,
                                   "health": b.health.value})

        snap: Optional[Snapshot] = ctx.get("snapshot")
        standby_lsn = self._promote_standby_db(zone, snap, p)
        self.db.monitor_active = True
        self.db.reset_monitor()

        record = build_record(
            mode=self.spec.dr_mode,
            failed_zone=ctx["failed_zone"], to_zone=zone.id,
            failure_time=ctx["failure_time"], detection_time=ctx["detected_at"],
            serving_time=now,
            primary_lsn_at_failure=ctx["primary_lsn"],
            standby_lsn_at_serving=standby_lsn,
            snapshot_taken_at=snap.taken_at if snap is not None else None,
            standby_replication_delay_ms=(self.params.standby_replication_delay_ms
                                          or self.spec.replication_delay_ms),
            stage_times=dict(fsm.timestamps))
        self.recovery_records.append(record.as_dict())
        self._system_down_since = None
        self.recovery_active = False
        self._recovery_ctx = None
        p.update({
            "zones_serving": {z.id: z.serving for z in self.topology.zones},
            "zone_roles": {z.id: z.role.value for z in self.topology.zones},
            "zone_mode": {zone.id: zone.mode.value},
            "registered": registered,
            "db_master": self.db.master_id,
            "record": record.as_dict(),
        })

    def _promote_standby_db(self, zone, snap: Optional[Snapshot], p: dict) -> int:
        """Bring the recovered zone's database up as the new master; returns
        the LSN it starts serving from.  With no up replica in the zone the
        promotion is skipped and writes simply stay down."""
        candidates = [r for r in self.db.replicas if r.zone_id == zone.id and r.up]
        if not candidates:
            p["no_replica_available"] = zone.id
            return 0
        if snap is not None:
            for r in candidates:
                r.lsn = max(r.lsn, snap.data_lsn)
        winner = max(candidates, key=lambda r: (
            r.lsn, r.container.role is ContainerRole.DB_MASTER, -r.registration_index))
        self.db.promote(winner)
        return winner.lsn

    # ---------------------------------------------------------------- report

    def _build_report(self) -> dict:
        duration = self.duration
        success = sum(1 for r in self.requests.values() if r.outcome == OUTCOME_SUCCESS)
        in_flight = sum(1 for r in self.requests.values() if r.outcome is None)
        failed = sum(self.failed_by_reason.values())
        total = len(self.requests)
        if total != self.failed_before_dispatch + sum(self.per_backend.values()):
            self.invariant_failures.append("request accounting mismatch")

        availability = self.tracker.percentages(duration)
        budget = sla_to_downtime(self.spec.sla_target)
        verdict = ("met" if availability["overall_percent"] >= self.spec.sla_target.percent
                   else "missed")
        recovery = measure_rto_rpo(self.recovery_records, self.spec.dr_mode.value,
                                   self.detection_latency)
        recovery["detection_latency_ms"] = self.detection_latency

        post_metrics = None
        if self._scale_actions:
            last_action = self._scale_actions[-1]["t_ms"]
            after = [e["metric"] for e in self._scale_evals if e["t_ms"] > last_action]
            if after:
                post_metrics = sum(after) / len(after)

        return {
            "schema_version": 1,
            "generated_at": datetime.now(timezone.utc).isoformat(),
            "scenario_digest": scenario_digest(self.spec.raw),
            "seed": self.seed,
            "dr_mode": self.spec.dr_mode.value,
            "duration_ms": duration,
            "availability": availability,
            "sla": {
                "target_percent": self.spec.sla_target.percent,
                "annual_downtime_budget": budget.formatted,
                "annual_downtime_budget_seconds": budget.total_seconds,
                "verdict": verdict,
            },
            "requests": {
                "total": total,
                "success": success,
                "failed": failed,
                "in_flight_at_end": in_flight,
                "failed_before_dispatch": self.failed_before_dispatch,
                "failed_by_reason": dict(sorted(self.failed_by_reason.items())),
                "per_backend": dict(sorted(self.per_backend.items())),
            },
            "queueing": {
                "avg_outstanding_per_up_node": (
                    self._outstanding_integral / self._node_integral
                    if self._node_integral else 0.0),
                "outstanding_node_ms": self._outstanding_integral,
                "up_node_ms": self._node_integral,
            },
            "recovery": recovery,
            "db": {
                "sync_mode": self.spec.sync_mode.value,
                "final_master": self.db.master_id,
                "final_master_lsn": self.db.last_master_lsn,
                "replicas": [{"id": r.id, "zone": r.zone_id, "role": r.role.value,
                              "lsn": r.lsn, "up": r.up}
                             for r in self.db.replicas],
                "failovers": [{
                    "triggered_at_ms": f.triggered_at,
                    "completed_at_ms": f.completed_at,
                    "promoted": f.promoted,
                    "lost_transactions": f.lost_transactions,
                    "reason": f.reason,
                } for f in self.db.failover_records],
                "lost_transactions_total": sum(
                    f.lost_transactions for f in self.db.failover_records),
            },
            "backups": {
                "snapshots_taken": len(self.pipeline.captured) if self.pipeline else 0,
                "snapshots_at_standby": len(self.pipeline.at_standby) if self.pipeline else 0,
                "last_standby_taken_at_ms": (
                    self.pipeline.at_standby[-1].taken_at
                    if self.pipeline and self.pipeline.at_standby else None),
            },
            "scale": {
                "enabled": self.autoscaler is not None,
                "actions": self._scale_actions,
                "evaluations": len(self._scale_evals),
                "metric_after_last_action_mean": post_metrics,
            },
            "trace_events": len(self.engine.trace),
            "invariant_failures": list(self.invariant_failures),
        }


def run_scenario(spec: ScenarioSpec, seed: Optional[int] = None,
                 duration_override: Optional[Millis] = None) -> RunResult:
    return SimulationRun(spec, seed=seed, duration_override=duration_override).run()
