import copy
import json
from pathlib import Path

import pytest

from drsim.balancer import BackendPool, HealthCheckConfig
from drsim.topology import Container, ContainerRole, ContainerSpec, Zone, ZoneMode, ZoneRole

REPO_ROOT = Path(__file__).resolve().parent.parent
SCENARIO_DIR = REPO_ROOT / "scenarios"
SHIPPED_SCENARIOS = sorted(SCENARIO_DIR.glob("*.json"))


def load_scenario(name: str) -> dict:
    return json.loads((SCENARIO_DIR / f"{name}.json").read_text())


def make_zone(zid: str = "A", serving: bool = True) -> Zone:
    return Zone(id=zid, role=ZoneRole.PRIMARY if zid == "A" else ZoneRole.STANDBY,
                mode=ZoneMode.ACTIVE, serving=serving)


def make_container(cid: str, zone: Zone, role: ContainerRole = ContainerRole.WEB_SERVER,
                   up: bool = True, **spec_kwargs) -> Container:
    c = Container(spec=ContainerSpec(id=cid, role=role, **spec_kwargs), zone=zone, up=up)
    zone.containers.append(c)
    return c


def make_pool(n: int = 3, zone: Zone | None = None,
              health: HealthCheckConfig | None = None,
              weights: list[int] | None = None) -> tuple[BackendPool, list]:
    zone = zone or make_zone()
    pool = BackendPool(health=health)
    backends = []
    for i in range(n):
        c = make_container(f"web-{i + 1}", zone)
        w = weights[i] if weights else 1
        backends.append(pool.register(c, weight=w, trusted=True))
    return pool, backends


@pytest.fixture
def canonical() -> dict:
    return load_scenario("pilot-light-canonical")


@pytest.fixture
def canonical_copy(canonical) -> dict:
    return copy.deepcopy(canonical)
