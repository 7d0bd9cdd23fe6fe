import random

import pytest

from drsim.balancer import (BackendHealth, BackendPool, DuplicateBackendError,
                            HealthCheckConfig, NoHealthyBackendError,
                            PolicyKind, SchedulerPolicy, WeightScope)

from conftest import make_container, make_pool, make_zone

RR = SchedulerPolicy(kind=PolicyKind.ROUND_ROBIN)
LOR = SchedulerPolicy(kind=PolicyKind.LEAST_OUTSTANDING)


class TestRoundRobin:
    def test_cyclic_order(self):
        pool, _ = make_pool(3)
        picks = [pool.pick(RR).id for _ in range(7)]
        assert picks == ["web-1", "web-2", "web-3", "web-1", "web-2", "web-3", "web-1"]

    def test_exact_equal_share_over_multiple_cycles(self):
        pool, _ = make_pool(3)
        counts = {}
        for _ in range(300):
            b = pool.pick(RR)
            counts[b.id] = counts.get(b.id, 0) + 1
        assert counts == {"web-1": 100, "web-2": 100, "web-3": 100}

    def test_down_backend_skipped(self):
        pool, backends = make_pool(3)
        backends[1].health = BackendHealth.DOWN
        picks = [pool.pick(RR).id for _ in range(4)]
        assert "web-2" not in picks

    def test_all_down_raises(self):
        pool, backends = make_pool(2)
        for b in backends:
            b.health = BackendHealth.DOWN
        with pytest.raises(NoHealthyBackendError):
            pool.pick(RR)

    def test_window_fairness_with_stable_membership(self):
        pool, _ = make_pool(4)
        counts = {}
        for _ in range(1002):
            b = pool.pick(RR)
            counts[b.id] = counts.get(b.id, 0) + 1
        assert max(counts.values()) - min(counts.values()) <= 1


class TestLeastOutstanding:
    def test_picks_minimum(self):
        pool, backends = make_pool(3)
        backends[0].outstanding = 2
        backends[1].outstanding = 0
        backends[2].outstanding = 1
        assert pool.pick(LOR).id == "web-2"

    def test_tie_breaks_to_lowest_registration_index(self):
        pool, backends = make_pool(3)
        for b in backends:
            b.outstanding = 5
        assert pool.pick(LOR).id == "web-1"

    def test_dominance_property_random_interleavings(self):
        # 1,000 randomized scenarios: the chosen backend never has more
        # outstanding than any other healthy backend at the pick instant
        rng = random.Random(7)
        for _ in range(1000):
            pool, backends = make_pool(rng.randint(2, 6))
            for b in backends:
                b.outstanding = rng.randint(0, 9)
                if rng.random() < 0.25:
                    b.health = BackendHealth.DOWN
            if not pool.eligible_backends():
                continue
            before = {b.id: b.outstanding for b in pool.eligible_backends()}
            chosen = pool.pick(LOR)
            for other_id, outstanding in before.items():
                assert before[chosen.id] <= outstanding, (chosen.id, other_id)


class TestWeighted:
    def test_smooth_wrr_7_3_hand_trace(self):
        pool, _ = make_pool(2, weights=[7, 3])
        policy = SchedulerPolicy(kind=PolicyKind.WEIGHTED, weights=[7, 3])
        picks = [pool.pick(policy).id for _ in range(10)]
        # smooth WRR spreads the heavy backend instead of clumping it
        assert picks == ["web-1", "web-2", "web-1", "web-1", "web-1",
                         "web-2", "web-1", "web-1", "web-2", "web-1"]
        assert picks.count("web-1") == 7
        assert picks.count("web-2") == 3

    def test_exact_split_over_weight_sum_windows(self):
        pool, _ = make_pool(2, weights=[70, 30])
        policy = SchedulerPolicy(kind=PolicyKind.WEIGHTED, weights=[70, 30])
        counts = {"web-1": 0, "web-2": 0}
        for _ in range(1000):
            counts[pool.pick(policy).id] += 1
        assert counts == {"web-1": 700, "web-2": 300}

    def test_zone_scope_split(self):
        za, zb = make_zone("A"), make_zone("B")
        pool = BackendPool()
        for i in range(2):
            pool.register(make_container(f"web-a-{i}", za), trusted=True)
        for i in range(3):
            pool.register(make_container(f"web-b-{i}", zb), trusted=True)
        policy = SchedulerPolicy(kind=PolicyKind.WEIGHTED, weights=[70, 30],
                                 weight_scope=WeightScope.ZONE)
        zone_counts = {"A": 0, "B": 0}
        for _ in range(1000):
            b = pool.pick(policy)
            zone_counts[b.zone_id] += 1
        assert zone_counts == {"A": 700, "B": 300}

    def test_zone_scope_falls_to_survivor(self):
        za, zb = make_zone("A"), make_zone("B")
        pool = BackendPool()
        a = pool.register(make_container("web-a-1", za), trusted=True)
        pool.register(make_container("web-b-1", zb), trusted=True)
        policy = SchedulerPolicy(kind=PolicyKind.WEIGHTED, weights=[70, 30],
                                 weight_scope=WeightScope.ZONE)
        a.health = BackendHealth.DOWN
        picks = {pool.pick(policy).id for _ in range(10)}
        assert picks == {"web-b-1"}


class TestRegistration:
    def test_new_backend_joins_cycle_after_rise_streak(self):
        pool, _ = make_pool(3, health=HealthCheckConfig(rise_threshold=2))
        zone = pool.backends[0].container.zone
        d = pool.register(make_container("web-4", zone), trusted=False)
        assert d.health is BackendHealth.DOWN
        picks = {pool.pick(RR).id for _ in range(6)}
        assert "web-4" not in picks
        pool.on_probe_result(d, True)
        assert d.health is BackendHealth.DOWN
        pool.on_probe_result(d, True)
        assert d.health is BackendHealth.UP
        picks = [pool.pick(RR).id for _ in range(8)]
        assert "web-4" in picks

    def test_duplicate_registration_rejected(self):
        pool, backends = make_pool(1)
        with pytest.raises(DuplicateBackendError):
            pool.register(backends[0].container)

    def test_join_share_approaches_equal(self):
        pool, _ = make_pool(3)
        zone = pool.backends[0].container.zone
        d = pool.register(make_container("web-4", zone), trusted=True)
        counts = {}
        for _ in range(1000):
            b = pool.pick(RR)
            counts[b.id] = counts.get(b.id, 0) + 1
        assert counts["web-4"] == 250


class TestHealthTransitions:
    def make(self):
        pool, backends = make_pool(1, health=HealthCheckConfig(
            interval_ms=2000, fall_threshold=3, rise_threshold=2))
        return pool, backends[0]

    def test_down_exactly_at_fall_threshold(self):
        pool, b = self.make()
        assert pool.on_probe_result(b, False) is None
        assert pool.on_probe_result(b, False) is None
        assert pool.on_probe_result(b, False) is BackendHealth.DOWN

    def test_broken_streak_stays_up(self):
        pool, b = self.make()
        for passed in (False, False, True, False):
            pool.on_probe_result(b, passed)
        assert b.health is BackendHealth.UP

    def test_rise_after_threshold_passes(self):
        pool, b = self.make()
        b.health = BackendHealth.DOWN
        assert pool.on_probe_result(b, True) is None
        assert pool.on_probe_result(b, True) is BackendHealth.UP

    def test_crash_fails_in_flight_and_bumps_epoch(self):
        pool, b = self.make()
        b.outstanding = 3
        epoch = b.crash_epoch
        assert pool.crash(b) == 3
        assert b.outstanding == 0
        assert b.crash_epoch == epoch + 1
