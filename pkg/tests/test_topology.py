import pytest

from drsim.topology import (ContainerRole, ContainerSpec, InterZoneLink,
                            Topology, Zone, ZoneMode, ZoneRole,
                            ZoneUnavailableError, begin_start, finish_start,
                            validate_topology)

from conftest import make_container, make_zone


def two_zone_topology():
    za, zb = make_zone("A"), make_zone("B")
    zb.role = ZoneRole.STANDBY
    make_container("web-a-1", za)
    make_container("db-a-1", za, role=ContainerRole.DB_MASTER)
    make_container("web-b-1", zb)
    return Topology(zones=[za, zb], link=InterZoneLink(), dr_mode="pilot_light")


class TestValidation:
    def test_defaults_pass(self):
        assert validate_topology(two_zone_topology()) == []

    def test_default_resource_envelope(self):
        spec = ContainerSpec(id="web", role=ContainerRole.WEB_SERVER)
        assert spec.cpu_limit == 4.0
        assert spec.mem_limit_mib == 2048
        assert spec.mem_reservation_mib == 1768

    def test_reservation_over_limit_flagged(self):
        t = two_zone_topology()
        t.zones[0].containers[0].spec.mem_reservation_mib = 3000
        violations = validate_topology(t)
        assert any("mem_reservation" in v for v in violations)

    def test_two_masters_in_one_zone_flagged(self):
        t = two_zone_topology()
        make_container("db-a-2", t.zones[0], role=ContainerRole.DB_MASTER)
        assert any("more than one db_master" in v for v in validate_topology(t))

    def test_duplicate_ids_flagged(self):
        t = two_zone_topology()
        make_container("web-a-1", t.zones[1])
        assert any("duplicate" in v for v in validate_topology(t))

    def test_no_web_servers_in_primary_flagged(self):
        t = two_zone_topology()
        t.zones[0].containers = [c for c in t.zones[0].containers
                                 if c.role is not ContainerRole.WEB_SERVER]
        assert any("no web servers" in v for v in validate_topology(t))

    def test_missing_master_flagged(self):
        t = two_zone_topology()
        t.zones[0].containers = [c for c in t.zones[0].containers
                                 if c.role is not ContainerRole.DB_MASTER]
        assert any("no db master" in v for v in validate_topology(t))

    def test_single_zone_flagged(self):
        t = two_zone_topology()
        t.zones = t.zones[:1]
        assert any("exactly 2 zones" in v for v in validate_topology(t))


class TestContainerStart:
    def test_startup_delay(self):
        zone = make_zone()
        c = make_container("web-1", zone, up=False, startup_delay_ms=5000)
        assert begin_start(c, 1000) == 6000
        finish_start(c)
        assert c.up

    def test_start_in_failed_zone_rejected(self):
        zone = make_zone()
        zone.mode = ZoneMode.FAILED
        c = make_container("web-1", zone, up=False)
        with pytest.raises(ZoneUnavailableError):
            begin_start(c, 0)

    def test_start_in_idle_zone_rejected(self):
        zone = make_zone()
        zone.mode = ZoneMode.IDLE
        c = make_container("web-1", zone, up=False)
        with pytest.raises(ZoneUnavailableError):
            begin_start(c, 0)

    def test_parallel_standby_activation(self):
        # web and db start in parallel at t=0; both up by the longer delay
        zone = make_zone("B")
        zone.mode = ZoneMode.ACTIVATING
        web = make_container("web-b-1", zone, up=False, startup_delay_ms=5000)
        db = make_container("db-b-1", zone, up=False,
                            role=ContainerRole.DB_MASTER, startup_delay_ms=8000)
        completions = [begin_start(web, 0), begin_start(db, 0)]
        assert completions == [5000, 8000]
        assert max(completions) == 8000
