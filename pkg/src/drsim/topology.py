"""Static and live model of zones, containers, and the inter-zone link.

Two availability zones connected by a VPN-style link; the primary zone serves
traffic while the standby's posture depends on the disaster-recovery mode.
Container resource fields (cpu/memory limits, reservations, ports) are carried
for validation and report context only; they do not throttle the simulation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .engine import Millis


class ContainerRole(str, Enum):
    WEB_SERVER = "web_server"
    BALANCER_FRONT = "balancer_front"
    DB_MASTER = "db_master"
    DB_SLAVE = "db_slave"
    DB_ROUTER = "db_router"
    STORAGE_BRICK = "storage_brick"
    MAIL_SERVER = "mail_server"  # accepted but inert: receives no workload


# Default resource envelope for a service container (4 vCPU, 2048 MiB limit,
# 1768 MiB reservation).
DEFAULT_CPU_LIMIT = 4.0
DEFAULT_MEM_LIMIT_MIB = 2048
DEFAULT_MEM_RESERVATION_MIB = 1768


@dataclass
class ContainerSpec:
    id: str
    role: ContainerRole
    cpu_limit: float = DEFAULT_CPU_LIMIT
    mem_limit_mib: int = DEFAULT_MEM_LIMIT_MIB
    mem_reservation_mib: int = DEFAULT_MEM_RESERVATION_MIB
    exposed_ports: list[int] = field(default_factory=list)
    startup_delay_ms: Millis = 0


class ZoneRole(str, Enum):
    PRIMARY = "primary"
    STANDBY = "standby"


class ZoneMode(str, Enum):
    ACTIVE = "active"
    IDLE = "idle"
    ACTIVATING = "activating"
    FAILED = "failed"


class ZoneUnavailableError(Exception):
    pass


@dataclass
class Container:
    spec: ContainerSpec
    zone: "Zone"
    up: bool = False
    data_valid: bool = True

    @property
    def id(self) -> str:
        return self.spec.id

    @property
    def role(self) -> ContainerRole:
        return self.spec.role

    def healthy(self) -> bool:
        return self.up and self.data_valid


@dataclass
class Zone:
    id: str
    role: ZoneRole
    mode: ZoneMode
    serving: bool = False
    containers: list[Container] = field(default_factory=list)

    def container(self, cid: str) -> Optional[Container]:
        for c in self.containers:
            if c.id == cid:
                return c
        return None

    def by_role(self, role: ContainerRole) -> list[Container]:
        return [c for c in self.containers if c.role == role]


@dataclass
class InterZoneLink:
    latency_ms: Millis = 20
    bandwidth_mib_s: float = 100.0
    up: bool = True


@dataclass
class Topology:
    zones: list[Zone]
    link: InterZoneLink
    dr_mode: str

    def zone(self, zid: str) -> Optional[Zone]:
        for z in self.zones:
            if z.id == zid:
                return z
        return None

    def primary(self) -> Zone:
        for z in self.zones:
            if z.role == ZoneRole.PRIMARY:
                return z
        raise ValueError("no primary zone")

    def standby(self) -> Zone:
        for z in self.zones:
            if z.role == ZoneRole.STANDBY:
                return z
        raise ValueError("no standby zone")


def begin_start(container: Container, now: Millis) -> Millis:
    """Start a container in an Active/Activating zone; returns the sim time at
    which it comes up (now + startup delay)."""
    if container.zone.mode not in (ZoneMode.ACTIVE, ZoneMode.ACTIVATING):
        raise ZoneUnavailableError(
            f"zone {container.zone.id} is {container.zone.mode.value}; cannot start {container.id}")
    return now + container.spec.startup_delay_ms


def finish_start(container: Container) -> None:
    container.up = True
    container.data_valid = True


def validate_topology(topology: Topology) -> list[str]:
    """Static sanity checks; violations are data, not faults."""
    violations: list[str] = []
    if len(topology.zones) != 2:
        violations.append(f"expected exactly 2 zones, got {len(topology.zones)}")
    primaries = [z for z in topology.zones if z.role == ZoneRole.PRIMARY]
    if len(primaries) != 1:
        violations.append(f"expected exactly one primary zone, got {len(primaries)}")

    seen: set[str] = set()
    for zone in topology.zones:
        masters = 0
        for c in zone.containers:
            s = c.spec
            if s.id in seen:
                violations.append(f"duplicate container id {s.id!r}")
            seen.add(s.id)
            if s.mem_reservation_mib > s.mem_limit_mib:
                violations.append(
                    f"{s.id}: mem_reservation {s.mem_reservation_mib} MiB exceeds limit {s.mem_limit_mib} MiB")
            if s.cpu_limit <= 0:
                violations.append(f"{s.id}: cpu_limit must be > 0")
            if s.startup_delay_ms < 0:
                violations.append(f"{s.id}: startup_delay must be >= 0")
            if s.role == ContainerRole.DB_MASTER:
                masters += 1
        if masters > 1:
            violations.append(f"zone {zone.id}: more than one db_master container")

    if primaries:
        prim = primaries[0]
        if not prim.by_role(ContainerRole.WEB_SERVER):
            violations.append(f"zone {prim.id}: primary zone has no web servers")
        if not prim.by_role(ContainerRole.DB_MASTER):
            violations.append(f"zone {prim.id}: primary zone has no db master")

    if topology.link.latency_ms < 0:
        violations.append("link latency must be >= 0")
    if topology.link.bandwidth_mib_s <= 0:
        violations.append("link bandwidth must be > 0")
    return violations
