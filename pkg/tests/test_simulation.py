"""Whole-run behaviors: fault handling, recovery pipelines, scaling, and the
request accounting invariants."""

import copy

import pytest

from drsim.scenario import parse_scenario
from drsim.simulation import SimulationRun, run_scenario

from conftest import load_scenario


def run_variant(base: dict, **changes) -> dict:
    scenario = copy.deepcopy(base)
    for dotted, value in changes.items():
        node = scenario
        keys = dotted.split(".")
        for k in keys[:-1]:
            node = node[k]
        node[keys[-1]] = value
    spec, diags = parse_scenario(scenario)
    assert diags == [], diags
    return run_scenario(spec).report


class TestNoFaultPurity:
    def test_no_faults_means_full_availability(self, canonical_copy):
        report = run_variant(canonical_copy, faults=[])
        assert report["availability"]["overall_percent"] == 100.0
        assert report["requests"]["failed"] == 0
        assert report["recovery"]["records"] == []

    def test_request_accounting_sums(self, canonical_copy):
        report = run_variant(canonical_copy, faults=[])
        req = report["requests"]
        assert req["total"] == (req["failed_before_dispatch"]
                                + sum(req["per_backend"].values()))
        assert req["total"] == req["success"] + req["failed"] + req["in_flight_at_end"]


class TestNodeCrash:
    def test_probes_take_backend_out_and_recovery_brings_it_back(self):
        scenario = load_scenario("web-node-crash")
        spec, diags = parse_scenario(scenario)
        assert diags == []
        result = run_scenario(spec)
        report = result.report
        # crash at 120,000 on a probe instant: fails counted at 120k/122k/124k
        import json
        down_at = up_at = None
        for line in result.trace_ndjson.splitlines():
            rec = json.loads(line)
            if rec["kind"] != "HealthProbe":
                continue
            for r in rec["payload"]["results"]:
                if r["backend"] == "web-a-2" and r.get("transition") == "down":
                    down_at = rec["t"]
                if r["backend"] == "web-a-2" and r.get("transition") == "up":
                    up_at = rec["t"]
        assert down_at == 124_000
        assert down_at <= 120_000 + 3 * 2000
        assert up_at == 302_000  # recover at 300k + rise streak of 2 probes
        assert report["requests"]["failed_by_reason"].get("node_crashed", 0) > 0

    def test_availability_stays_up_with_surviving_backends(self):
        scenario = load_scenario("web-node-crash")
        spec, _ = parse_scenario(scenario)
        report = run_scenario(spec).report
        assert report["availability"]["overall_percent"] == 100.0

    def test_crash_is_idempotent(self, canonical_copy):
        canonical_copy["faults"] = [
            {"at_ms": 100_000, "kind": "node_crash", "target": "web-a-1"},
            {"at_ms": 101_000, "kind": "node_crash", "target": "web-a-1"},
        ]
        canonical_copy["run"]["duration_ms"] = 200_000
        spec, diags = parse_scenario(canonical_copy)
        assert diags == []
        result = run_scenario(spec)
        assert result.invariant_failures == []


class TestZoneRecovery:
    def test_pilot_light_full_pipeline(self, canonical):
        spec, _ = parse_scenario(canonical)
        report = run_scenario(spec).report
        rec = report["recovery"]["records"][0]
        assert rec["failure_time_ms"] == 4_980_000
        assert rec["detection_time_ms"] == 4_982_500
        assert rec["rto_ms"] == 70_500
        assert rec["rpo_time_ms"] == 1_380_000
        assert rec["stage_times_ms"]["restoring"] == 4_990_500
        assert report["db"]["final_master"] == "db-b-1"

    def test_all_requests_fail_during_non_aa_window(self, canonical):
        spec, _ = parse_scenario(canonical)
        result = run_scenario(spec)
        import json
        for line in result.trace_ndjson.splitlines():
            rec = json.loads(line)
            if rec["kind"] != "RequestArrival":
                continue
            t, outcome = rec["t"], rec["payload"].get("outcome")
            if 4_980_000 <= t < 5_050_500:
                assert outcome != "dispatched", (t, outcome)
            elif t < 4_980_000:
                assert outcome == "dispatched"

    def test_active_active_window_splits_by_zone(self):
        scenario = load_scenario("active-active-70-30")
        spec, diags = parse_scenario(scenario)
        assert diags == []
        report = run_scenario(spec).report
        rec = report["recovery"]["records"][0]
        assert rec["rto_ms"] == 2500
        assert rec["rpo_transactions"] == 0
        # reads keep flowing through zone B during the window, so overall
        # downtime is only the write gap
        assert report["availability"]["read_percent"] > report["availability"]["write_percent"]
        per_backend = report["requests"]["per_backend"]
        assert any(b.startswith("web-b") for b in per_backend)

    def test_standby_outage_does_not_trigger_recovery(self, canonical_copy):
        canonical_copy["faults"] = [
            {"at_ms": 100_000, "kind": "zone_outage", "target": "B"}]
        canonical_copy["run"]["duration_ms"] = 200_000
        spec, diags = parse_scenario(canonical_copy)
        assert diags == []
        report = run_scenario(spec).report
        assert report["recovery"]["records"] == []
        assert report["availability"]["overall_percent"] == 100.0

    def test_both_zones_down_then_operator_recovery(self, canonical_copy):
        canonical_copy["faults"] = [
            {"at_ms": 50_000, "kind": "zone_outage", "target": "B"},
            {"at_ms": 100_000, "kind": "zone_outage", "target": "A"},
            {"at_ms": 300_000, "kind": "zone_recover", "target": "B"},
        ]
        canonical_copy["run"]["duration_ms"] = 600_000
        spec, diags = parse_scenario(canonical_copy)
        assert diags == []
        result = run_scenario(spec)
        report = result.report
        assert result.invariant_failures == []
        records = report["recovery"]["records"]
        assert len(records) == 1
        assert records[0]["to_zone"] == "B"
        assert records[0]["failure_time_ms"] == 100_000
        # serving resumed before the run ended
        assert records[0]["serving_time_ms"] < 600_000


class TestWriteWindow:
    def test_every_write_in_the_failover_window_fails_loudly(self, canonical_copy):
        # master crash (node-level): the write path is down from the crash
        # until the promotion lands, and each write arriving inside that
        # window fails as write_unavailable rather than vanishing
        canonical_copy["faults"] = [
            {"at_ms": 100_000, "kind": "node_crash", "target": "db-a-1"}]
        canonical_copy["run"]["duration_ms"] = 200_000
        canonical_copy["workload"]["read_fraction"] = 0.0  # writes only
        spec, diags = parse_scenario(canonical_copy)
        assert diags == []
        result = run_scenario(spec)
        report = result.report

        import json
        promo_at = None
        window_writes = 0
        for line in result.trace_ndjson.splitlines():
            rec = json.loads(line)
            if (rec["kind"] == "RecoveryStep"
                    and rec["payload"].get("step") == "db_promotion"):
                promo_at = rec["t"]
        assert promo_at is not None
        for line in result.trace_ndjson.splitlines():
            rec = json.loads(line)
            if rec["kind"] == "RequestArrival" and 100_000 <= rec["t"] < promo_at:
                window_writes += 1
                assert rec["payload"]["outcome"] == "write_unavailable"
        assert window_writes > 0
        assert report["requests"]["failed_by_reason"]["write_unavailable"] == window_writes
        # window = probe-walk detection plus the promotion step
        detection_walk = promo_at - spec.monitor.promotion_ms - 100_000
        assert report["availability"]["downtime_ms"]["write"] == \
            detection_walk + spec.monitor.promotion_ms
        assert report["db"]["failovers"][0]["promoted"] == "db-a-2"

    def test_warm_standby_replicas_trail_by_delay_only(self, canonical_copy):
        canonical_copy["dr"] = {"mode": "warm_standby"}
        canonical_copy["faults"] = []
        canonical_copy["run"]["duration_ms"] = 120_000
        spec, diags = parse_scenario(canonical_copy)
        assert diags == []
        report = run_scenario(spec).report
        master_lsn = report["db"]["final_master_lsn"]
        replicas = {r["id"]: r for r in report["db"]["replicas"]}
        # 5 s shipping lag at ~0.3 writes/s leaves at most a handful in flight
        for rid in ("db-b-1", "db-b-2"):
            assert replicas[rid]["up"]
            assert master_lsn - replicas[rid]["lsn"] <= 5
        assert replicas["db-a-2"]["lsn"] <= master_lsn


class TestNoSlaveThenZoneRecovery:
    def test_dead_master_role_cleared_by_later_promotion(self, canonical_copy):
        # both primary-zone replicas die (no slave to promote), then the whole
        # zone fails and recovery promotes the standby's database: exactly one
        # master-role replica must remain
        canonical_copy["faults"] = [
            {"at_ms": 50_000, "kind": "node_crash", "target": "db-a-2"},
            {"at_ms": 60_000, "kind": "node_crash", "target": "db-a-1"},
            {"at_ms": 120_000, "kind": "zone_outage", "target": "A"},
        ]
        canonical_copy["run"]["duration_ms"] = 300_000
        spec, diags = parse_scenario(canonical_copy)
        assert diags == []
        result = run_scenario(spec)
        assert result.invariant_failures == []
        report = result.report
        assert report["db"]["final_master"] == "db-b-1"
        masters = [r for r in report["db"]["replicas"] if r["role"] == "master"]
        assert len(masters) == 1
        no_slave = [f for f in report["db"]["failovers"]
                    if f["reason"] == "no_slave_available"]
        assert no_slave, "the monitor must record the failed promotion attempt"

    def test_recovery_aborts_when_target_zone_dies(self, canonical_copy):
        # standby zone dies during pilot-light activation: the recovery
        # aborts, pending steps go stale, and the system stays down
        canonical_copy["faults"] = [
            {"at_ms": 100_000, "kind": "zone_outage", "target": "A"},
            {"at_ms": 105_000, "kind": "zone_outage", "target": "B"},
        ]
        canonical_copy["run"]["duration_ms"] = 300_000
        spec, diags = parse_scenario(canonical_copy)
        assert diags == []
        result = run_scenario(spec)
        assert result.invariant_failures == []
        report = result.report
        assert report["recovery"]["records"] == []
        # down from the first failure to the end of the run
        assert report["availability"]["downtime_ms"]["overall"] == 200_000


class TestLinkAndCorruption:
    def test_link_down_skips_backups(self, canonical_copy):
        canonical_copy["faults"] = [
            {"at_ms": 3_500_000, "kind": "link_down", "target": "link",
             "duration_ms": 400_000}]
        spec, diags = parse_scenario(canonical_copy)
        assert diags == []
        result = run_scenario(spec)
        import json
        skipped = [json.loads(l) for l in result.trace_ndjson.splitlines()
                   if '"skipped": "link_down"' in l or '"skipped":"link_down"' in l]
        assert skipped, "hourly capture at 3.6M must be skipped while the link is down"

    def test_data_corruption_drives_failover_and_restore(self, canonical_copy):
        canonical_copy["faults"] = [
            {"at_ms": 100_000, "kind": "data_corruption", "target": "db-a-1"}]
        canonical_copy["run"]["duration_ms"] = 300_000
        spec, diags = parse_scenario(canonical_copy)
        assert diags == []
        report = run_scenario(spec).report
        failovers = report["db"]["failovers"]
        assert failovers and failovers[0]["promoted"] == "db-a-2"


class TestScaling:
    def test_surge_scales_out_within_bounds(self):
        scenario = load_scenario("autoscale-surge")
        spec, diags = parse_scenario(scenario)
        assert diags == []
        report = run_scenario(spec).report
        actions = report["scale"]["actions"]
        assert actions, "surge must trigger scale-outs"
        assert all(a["action"] == "scale_out" for a in actions)
        assert all(2 <= a["to_nodes"] <= 10 for a in actions)
        cooldown = scenario["autoscale"]["cooldown_ms"]
        times = [a["t_ms"] for a in actions]
        assert all(b - a >= cooldown for a, b in zip(times, times[1:]))
        assert report["scale"]["metric_after_last_action_mean"] < 8.0

    def test_scale_in_drains_before_stopping(self, canonical_copy):
        # heavy load from the start, dropping to a fifth at 150 s: the pool
        # grows, then shrinks by draining the newest nodes, failing nothing
        canonical_copy["workload"] = {
            "arrival": {"kind": "fixed", "interval_ms": 20},
            "read_fraction": 0.5,
            "service_time": {"web_server": {"kind": "fixed", "ms": 1000}},
            "surge": {"at_ms": 150_000, "factor": 0.2},
        }
        canonical_copy["autoscale"] = {
            "high_threshold": 8.0, "low_threshold": 2.0,
            "evaluation_interval_ms": 5000, "sustain_windows": 1,
            "cooldown_ms": 10_000, "min_nodes": 2, "max_nodes": 8, "step": 1,
        }
        canonical_copy["run"]["duration_ms"] = 300_000
        canonical_copy["faults"] = []
        spec, diags = parse_scenario(canonical_copy)
        assert diags == []
        result = run_scenario(spec)
        assert result.invariant_failures == []
        actions = result.report["scale"]["actions"]
        assert any(a["action"] == "scale_out" for a in actions)
        assert any(a["action"] == "scale_in" for a in actions)
        assert all(2 <= a["to_nodes"] <= 8 for a in actions)
        # draining never fails a request
        assert result.report["requests"]["failed"] == 0


def test_mail_server_role_is_inert(canonical):
    spec, _ = parse_scenario(canonical)
    report = run_scenario(spec).report
    assert "mail-a" not in report["requests"]["per_backend"]


def test_balancer_front_is_a_fault_target(canonical_copy):
    # a single front proxy: while it is down, every request fails
    canonical_copy["faults"] = [
        {"at_ms": 50_000, "kind": "node_crash", "target": "lb-a"},
        {"at_ms": 100_000, "kind": "node_recover", "target": "lb-a"},
    ]
    canonical_copy["run"]["duration_ms"] = 200_000
    spec, diags = parse_scenario(canonical_copy)
    assert diags == []
    report = run_scenario(spec).report
    failed = report["requests"]["failed_by_reason"]
    assert failed.get("service_unavailable", 0) == 50  # one arrival per second
    down = report["availability"]["downtime_ms"]["overall"]
    assert down == 50_000


def test_redirect_to_idle_zone_rejected(canonical):
    from drsim.drctl import TargetNotServingError
    spec, _ = parse_scenario(canonical)
    sim = SimulationRun(spec)
    with pytest.raises(TargetNotServingError):
        sim.redirect_traffic("B")  # pilot-light standby is idle at start


def test_pilot_light_standby_starts_idle_and_dark(canonical):
    spec, _ = parse_scenario(canonical)
    sim = SimulationRun(spec)
    init = sim._init_payload
    zone_b = next(z for z in init["zones"] if z["id"] == "B")
    assert zone_b["mode"] == "idle" and not zone_b["serving"]
    assert all(not c["up"] for c in init["containers"] if c["zone"] == "B")
