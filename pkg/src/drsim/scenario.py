"""Scenario loading, validation, and default resolution.

A scenario is one JSON document describing the whole run: topology, DR mode
and overrides, balancer policy, database and storage settings, workload,
optional autoscaling, and the fault schedule.  Validation returns diagnostics
as data (never raises for content problems); only an unreadable or
syntactically broken document raises ``ScenarioParseError``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .autoscaler import AutoscalePolicy
from .balancer import HealthCheckConfig, PolicyKind, SchedulerPolicy, WeightScope
from .dbcluster import MonitorConfig, SyncMode
from .drctl import DrMode, ModeParams, mode_defaults
from .engine import ArrivalSpec, Millis, ServiceTimeSpec, SurgeSpec
from .faults import CONTAINER_FAULTS, FaultKind, FaultSpec, ZONE_FAULTS
from .metrics import SlaTarget
from .storage import QuorumPolicy
from .topology import (Container, ContainerRole, ContainerSpec, InterZoneLink,
                       Topology, Zone, ZoneMode, ZoneRole, validate_topology)


class ScenarioParseError(Exception):
    pass


SCHEMA_VERSION = 1

_DR_OVERRIDE_KEYS = {
    "backup_cadence_ms", "manual_recovery_delay_ms", "operator_delay_ms",
    "redirect_delay_ms", "restore_rate_mib_s", "sync_mode",
    "standby_replication_delay_ms", "zone_weights",
}


@dataclass
class ZoneSpec:
    id: str
    role: ZoneRole
    containers: list[ContainerSpec]


@dataclass
class ScenarioSpec:
    """Parsed, validated scenario: pure data, safe to reuse across runs."""

    raw: dict
    duration_ms: Millis
    seed: int
    sla_target: SlaTarget
    zones: list[ZoneSpec]
    link_latency_ms: Millis
    link_bandwidth_mib_s: float
    dr_mode: DrMode
    dr_params: ModeParams
    sweep_overrides: dict[str, dict]
    balancer_policy: SchedulerPolicy
    health: HealthCheckConfig
    replication_delay_ms: Millis
    sync_mode: SyncMode
    monitor: MonitorConfig
    exclude_master_reads: bool
    quorum: QuorumPolicy
    snapshot_size_mib: float
    arrival: ArrivalSpec
    read_fraction: float
    service_time: dict[str, ServiceTimeSpec]
    surge: Optional[SurgeSpec]
    autoscale: Optional[AutoscalePolicy]
    faults: list[FaultSpec]


def load_file(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioParseError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioParseError(f"{path}: scenario must be a JSON object")
    return data


def _enum(value: str, enum_cls, diags: list[str], where: str):
    try:
        return enum_cls(value)
    except ValueError:
        valid = ", ".join(e.value for e in enum_cls)
        diags.append(f"{where}: unknown value {value!r} (expected one of: {valid})")
        return None


def apply_overrides(params: ModeParams, overrides: dict, diags: list[str],
                    where: str = "dr.overrides") -> ModeParams:
    for key, value in overrides.items():
        if key not in _DR_OVERRIDE_KEYS:
            diags.append(f"{where}: unknown key {key!r}")
            continue
        if key == "sync_mode":
            mode = _enum(value, SyncMode, diags, f"{where}.sync_mode")
            if mode is not None:
                params.sync_mode = mode
        elif key == "zone_weights":
            if (not isinstance(value, list) or len(value) != 2
                    or not all(isinstance(w, int) and w >= 1 for w in value)):
                diags.append(f"{where}.zone_weights: expected two integer weights >= 1")
            else:
                params.zone_weights = (value[0], value[1])
        else:
            setattr(params, key, value)
    return params


def parse_scenario(data: dict) -> tuple[Optional[ScenarioSpec], list[str]]:
    """Parse a scenario dict into a spec; returns (spec, diagnostics).

    The spec is None when the document is structurally unusable; otherwise
    diagnostics may still be non-empty (semantic violations, exit code 2).
    """
    diags: list[str] = []

    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        diags.append(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")

    known = {"schema_version", "run", "topology", "dr", "balancer", "db",
             "storage", "workload", "autoscale", "faults"}
    for key in data:
        if key not in known:
            diags.append(f"unknown top-level section {key!r}")

    run = data.get("run") or {}
    duration = run.get("duration_ms", 0)
    if not isinstance(duration, int) or duration <= 0:
        diags.append("run.duration_ms: must be a positive integer")
        duration = max(1, int(duration) if isinstance(duration, (int, float)) else 1)
    seed = run.get("seed", 0)
    if not isinstance(seed, int):
        diags.append("run.seed: must be an integer")
        seed = 0
    sla_pct = run.get("sla_target_percent", 99.0)
    if not isinstance(sla_pct, (int, float)) or not 0 < sla_pct <= 100:
        diags.append("run.sla_target_percent: must be in (0, 100]")
        sla_pct = 99.0

    zones, link_latency, link_bw = _parse_topology(data.get("topology") or {}, diags)

    dr = data.get("dr") or {}
    mode = _enum(dr.get("mode", "pilot_light"), DrMode, diags, "dr.mode") or DrMode.PILOT_LIGHT
    params = apply_overrides(mode_defaults(mode), dr.get("overrides") or {}, diags)
    sweep_overrides = dr.get("sweep_overrides") or {}
    for mode_key in sweep_overrides:
        _enum(mode_key, DrMode, diags, "dr.sweep_overrides")

    policy, health = _parse_balancer(data.get("balancer") or {}, mode, params, diags)
    (replication_delay, sync_mode, monitor, exclude_master) = _parse_db(
        data.get("db") or {}, params, diags)
    quorum, snapshot_size = _parse_storage(data.get("storage") or {}, diags)
    arrival, read_fraction, service_time, surge = _parse_workload(
        data.get("workload") or {}, diags)
    autoscale = _parse_autoscale(data.get("autoscale"), diags)
    faults = _parse_faults(data.get("faults") or [], duration, zones, diags)

    spec = ScenarioSpec(
        raw=data, duration_ms=duration, seed=seed,
        sla_target=SlaTarget(percent=float(sla_pct)),
        zones=zones, link_latency_ms=link_latency, link_bandwidth_mib_s=link_bw,
        dr_mode=mode, dr_params=params, sweep_overrides=sweep_overrides,
        balancer_policy=policy, health=health,
        replication_delay_ms=replication_delay, sync_mode=sync_mode,
        monitor=monitor, exclude_master_reads=exclude_master,
        quorum=quorum, snapshot_size_mib=snapshot_size,
        arrival=arrival, read_fraction=read_fraction, service_time=service_time,
        surge=surge, autoscale=autoscale, faults=faults)

    diags.extend(validate_topology(build_topology(spec)))
    _check_weights(spec, diags)
    return spec, diags


def _parse_topology(section: dict, diags: list[str]):
    link = section.get("link") or {}
    latency = link.get("latency_ms", 20)
    bandwidth = link.get("bandwidth_mib_s", 100.0)
    zones: list[ZoneSpec] = []
    zone_list = section.get("zones")
    if not isinstance(zone_list, list) or not zone_list:
        diags.append("topology.zones: required, two zones")
        zone_list = []
    for i, zdata in enumerate(zone_list):
        zid = zdata.get("id", f"zone{i}")
        role = _enum(zdata.get("role", "primary" if i == 0 else "standby"),
                     ZoneRole, diags, f"topology.zones[{i}].role") or ZoneRole.STANDBY
        containers = []
        for j, cdata in enumerate(zdata.get("containers") or []):
            where = f"topology.zones[{i}].containers[{j}]"
            crole = _enum(cdata.get("role", ""), ContainerRole, diags, f"{where}.role")
            if crole is None:
                continue
            containers.append(ContainerSpec(
                id=cdata.get("id", f"{zid}-c{j}"),
                role=crole,
                cpu_limit=cdata.get("cpu_limit", 4.0),
                mem_limit_mib=cdata.get("mem_limit_mib", 2048),
                mem_reservation_mib=cdata.get("mem_reservation_mib", 1768),
                exposed_ports=list(cdata.get("exposed_ports", [])),
                startup_delay_ms=cdata.get("startup_delay_ms", 0)))
        zones.append(ZoneSpec(id=zid, role=role, containers=containers))
    return zones, latency, bandwidth


def _parse_balancer(section: dict, mode: DrMode, params: ModeParams, diags: list[str]):
    default_policy = "weighted" if mode is DrMode.ACTIVE_ACTIVE else "round_robin"
    kind = _enum(section.get("policy", default_policy), PolicyKind,
                 diags, "balancer.policy") or PolicyKind.ROUND_ROBIN
    weights = section.get("weights")
    scope = _enum(section.get("weight_scope",
                              "zone" if mode is DrMode.ACTIVE_ACTIVE else "node"),
                  WeightScope, diags, "balancer.weight_scope") or WeightScope.NODE
    if weights is None and params.zone_weights is not None:
        weights = list(params.zone_weights)
    if kind is PolicyKind.WEIGHTED and not weights:
        diags.append("balancer.weights: required for weighted policy")
        weights = [1]
    if weights and not all(isinstance(w, int) and w >= 1 for w in weights):
        diags.append("balancer.weights: all weights must be integers >= 1")
        weights = [max(1, int(w)) for w in weights]
    health_data = section.get("health") or {}
    health = HealthCheckConfig(
        interval_ms=health_data.get("interval_ms", 2000),
        fall_threshold=health_data.get("fall_threshold", 3),
        rise_threshold=health_data.get("rise_threshold", 2))
    if health.interval_ms <= 0:
        diags.append("balancer.health.interval_ms: must be > 0")
    if health.fall_threshold < 1 or health.rise_threshold < 1:
        diags.append("balancer.health: thresholds must be >= 1")
    return SchedulerPolicy(kind=kind, weights=weights or [], weight_scope=scope), health


def _parse_db(section: dict, params: ModeParams, diags: list[str]):
    delay = section.get("replication_delay_ms", 500)
    sync_raw = section.get("sync_mode")
    if sync_raw is not None:
        sync = _enum(sync_raw, SyncMode, diags, "db.sync_mode") or params.sync_mode
    else:
        sync = params.sync_mode
    mon = section.get("monitor") or {}
    monitor = MonitorConfig(
        check_interval_ms=mon.get("check_interval_ms", 1000),
        failures_before_failover=mon.get("failures_before_failover", 3),
        promotion_ms=mon.get("promotion_ms", 1000))
    if monitor.check_interval_ms <= 0:
        diags.append("db.monitor.check_interval_ms: must be > 0")
    if monitor.failures_before_failover < 1:
        diags.append("db.monitor.failures_before_failover: must be >= 1")
    return delay, sync, monitor, bool(section.get("exclude_master_reads", False))


def _parse_storage(section: dict, diags: list[str]):
    quorum = _enum(section.get("quorum", "majority"), QuorumPolicy,
                   diags, "storage.quorum") or QuorumPolicy.MAJORITY
    size = section.get("snapshot_size_mib", 600.0)
    if not isinstance(size, (int, float)) or size <= 0:
        diags.append("storage.snapshot_size_mib: must be > 0")
        size = 600.0
    return quorum, float(size)


def _parse_workload(section: dict, diags: list[str]):
    arrival_data = section.get("arrival") or {}
    kind = arrival_data.get("kind", "fixed")
    if kind not in ("fixed", "poisson"):
        diags.append(f"workload.arrival.kind: unknown {kind!r}")
        kind = "fixed"
    arrival = ArrivalSpec(kind=kind,
                          interval_ms=arrival_data.get("interval_ms", 1000),
                          rate_per_s=arrival_data.get("rate_per_s", 1.0))
    if kind == "fixed" and arrival.interval_ms <= 0:
        diags.append("workload.arrival.interval_ms: must be > 0")
        arrival.interval_ms = 1000
    if kind == "poisson" and arrival.rate_per_s <= 0:
        diags.append("workload.arrival.rate_per_s: must be > 0")
        arrival.rate_per_s = 1.0

    read_fraction = section.get("read_fraction", 0.7)
    if not isinstance(read_fraction, (int, float)) or not 0 <= read_fraction <= 1:
        diags.append("workload.read_fraction: must be in [0, 1]")
        read_fraction = 0.7

    service: dict[str, ServiceTimeSpec] = {}
    for role, sdata in (section.get("service_time") or {}).items():
        skind = sdata.get("kind", "fixed")
        if skind not in ("fixed", "exponential"):
            diags.append(f"workload.service_time.{role}.kind: unknown {skind!r}")
            skind = "fixed"
        spec = ServiceTimeSpec(kind=skind, ms=sdata.get("ms", 50),
                               mean_ms=sdata.get("mean_ms", 50.0))
        if skind == "exponential" and spec.mean_ms <= 0:
            diags.append(f"workload.service_time.{role}.mean_ms: must be > 0")
            spec.mean_ms = 50.0
        service[role] = spec
    if "default" not in service and ContainerRole.WEB_SERVER.value not in service:
        service["default"] = ServiceTimeSpec(kind="fixed", ms=50)

    surge = None
    surge_data = section.get("surge")
    if surge_data:
        factor = surge_data.get("factor", 1.0)
        at_ms = surge_data.get("at_ms", 0)
        if factor <= 0:
            diags.append("workload.surge.factor: must be > 0")
            factor = 1.0
        surge = SurgeSpec(at_ms=at_ms, factor=float(factor))
    return arrival, float(read_fraction), service, surge


def _parse_autoscale(section: Optional[dict], diags: list[str]) -> Optional[AutoscalePolicy]:
    if not section:
        return None
    policy = AutoscalePolicy(
        high_threshold=section.get("high_threshold", 8.0),
        low_threshold=section.get("low_threshold", 2.0),
        evaluation_interval_ms=section.get("evaluation_interval_ms", 5000),
        sustain_windows=section.get("sustain_windows", 2),
        cooldown_ms=section.get("cooldown_ms", 60_000),
        min_nodes=section.get("min_nodes", 1),
        max_nodes=section.get("max_nodes", 10),
        step=section.get("step", 1))
    diags.extend(policy.validate())
    return policy


def _parse_faults(items: list, duration: Millis, zones: list[ZoneSpec],
                  diags: list[str]) -> list[FaultSpec]:
    faults: list[FaultSpec] = []
    container_ids = {c.id for z in zones for c in z.containers}
    zone_ids = {z.id for z in zones}
    downed: set[str] = set()
    for i, fdata in enumerate(items):
        where = f"faults[{i}]"
        kind = _enum(fdata.get("kind", ""), FaultKind, diags, f"{where}.kind")
        if kind is None:
            continue
        at_ms = fdata.get("at_ms", 0)
        if not isinstance(at_ms, int) or at_ms < 0 or at_ms > duration:
            diags.append(f"{where}.at_ms: must be within [0, run.duration_ms]")
            continue
        target = fdata.get("target", "")
        if kind in CONTAINER_FAULTS and target not in container_ids:
            diags.append(f"{where}.target: unknown container {target!r}")
            continue
        if kind in ZONE_FAULTS and target not in zone_ids:
            diags.append(f"{where}.target: unknown zone {target!r}")
            continue
        if kind is FaultKind.LINK_DOWN:
            target = "link"
            if not isinstance(fdata.get("duration_ms"), int) or fdata["duration_ms"] <= 0:
                diags.append(f"{where}.duration_ms: link_down needs a positive duration")
                continue
        if kind is FaultKind.NODE_RECOVER and target not in downed:
            diags.append(f"{where}: node_recover for {target!r} without a prior crash")
        if kind is FaultKind.ZONE_RECOVER and target not in downed:
            diags.append(f"{where}: zone_recover for {target!r} without a prior outage")
        if kind in (FaultKind.NODE_CRASH, FaultKind.DATA_CORRUPTION, FaultKind.ZONE_OUTAGE):
            downed.add(target)
        faults.append(FaultSpec(at_ms=at_ms, kind=kind, target=target,
                                duration_ms=fdata.get("duration_ms")))
    faults.sort(key=lambda f: f.at_ms)
    return faults


def _check_weights(spec: ScenarioSpec, diags: list[str]) -> None:
    if spec.balancer_policy.kind is not PolicyKind.WEIGHTED:
        return
    weights = spec.balancer_policy.weights
    if spec.balancer_policy.weight_scope is WeightScope.ZONE:
        if len(weights) != len(spec.zones):
            diags.append(f"balancer.weights: {len(weights)} weights for "
                         f"{len(spec.zones)} zones")
    else:
        primary_webs = [c for z in spec.zones if z.role is ZoneRole.PRIMARY
                        for c in z.containers if c.role is ContainerRole.WEB_SERVER]
        if len(weights) != len(primary_webs):
            diags.append(f"balancer.weights: {len(weights)} weights for "
                         f"{len(primary_webs)} primary-zone web servers")


def build_topology(spec: ScenarioSpec) -> Topology:
    """Construct fresh live topology objects for one run."""
    zones = []
    for zspec in spec.zones:
        zone = Zone(id=zspec.id, role=zspec.role, mode=ZoneMode.ACTIVE, serving=False)
        zone.containers = [Container(spec=c, zone=zone) for c in zspec.containers]
        zones.append(zone)
    link = InterZoneLink(latency_ms=spec.link_latency_ms,
                         bandwidth_mib_s=spec.link_bandwidth_mib_s)
    return Topology(zones=zones, link=link, dr_mode=spec.dr_mode.value)
