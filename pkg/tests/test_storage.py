import random

import pytest

from drsim.storage import (AllBricksDownError, AlreadyMemberError,
                           BackupPipeline, BrickDownError,
                           ClientNotAllowedError, LinkDownError,
                           NotStartedError, QuorumLostError, QuorumPolicy,
                           ReplicaVolume, SourceUnreadableError, TrustedPool,
                           UnknownBrickError, transfer_ms)
from drsim.topology import ContainerRole, InterZoneLink

from conftest import make_container, make_zone


def make_bricks(n=3, zone=None):
    zone = zone or make_zone()
    return [make_container(f"brick-{i + 1}", zone, role=ContainerRole.STORAGE_BRICK)
            for i in range(n)]


def make_volume(n=3, quorum=QuorumPolicy.MAJORITY):
    bricks = make_bricks(n)
    pool = TrustedPool()
    for b in bricks:
        pool.peer_probe(b)
    vol = ReplicaVolume("gv0", bricks, pool, quorum=quorum)
    vol.allow(["web-1"])
    vol.start()
    return vol, bricks


class TestTrustedPool:
    def test_probe_four_bricks(self):
        bricks = make_bricks(4)
        pool = TrustedPool()
        for b in bricks:
            pool.peer_probe(b)
        assert len(pool) == 4

    def test_reprobe_rejected(self):
        bricks = make_bricks(1)
        pool = TrustedPool()
        pool.peer_probe(bricks[0])
        with pytest.raises(AlreadyMemberError):
            pool.peer_probe(bricks[0])

    def test_probe_crashed_brick_rejected(self):
        bricks = make_bricks(1)
        bricks[0].up = False
        pool = TrustedPool()
        with pytest.raises(BrickDownError):
            pool.peer_probe(bricks[0])


class TestVolumeLifecycle:
    def test_mount_allowed_client(self):
        vol, _ = make_volume()
        vol.mount("web-1")

    def test_mount_unlisted_client_rejected(self):
        vol, _ = make_volume()
        with pytest.raises(ClientNotAllowedError):
            vol.mount("intruder")

    def test_mount_before_start_rejected(self):
        bricks = make_bricks(2)
        pool = TrustedPool()
        for b in bricks:
            pool.peer_probe(b)
        vol = ReplicaVolume("gv1", bricks, pool)
        vol.allow(["web-1"])
        with pytest.raises(NotStartedError):
            vol.mount("web-1")

    def test_volume_over_unknown_brick_rejected(self):
        bricks = make_bricks(2)
        pool = TrustedPool()
        pool.peer_probe(bricks[0])
        with pytest.raises(UnknownBrickError):
            ReplicaVolume("gv1", bricks, pool)


class TestQuorum:
    def test_one_down_of_three_still_writable(self):
        vol, bricks = make_volume(3)
        bricks[0].up = False
        assert vol.write() == 1
        assert vol.read() == 1

    def test_two_down_of_three_loses_write_quorum(self):
        vol, bricks = make_volume(3)
        bricks[0].up = False
        bricks[1].up = False
        with pytest.raises(QuorumLostError):
            vol.write()
        assert vol.read() == 0

    def test_all_down_blocks_reads(self):
        vol, bricks = make_volume(3)
        for b in bricks:
            b.up = False
        with pytest.raises(AllBricksDownError):
            vol.read()

    def test_quorum_policy_all_and_one(self):
        vol_all, bricks = make_volume(3, quorum=QuorumPolicy.ALL)
        bricks[0].up = False
        with pytest.raises(QuorumLostError):
            vol_all.write()
        vol_one, bricks2 = make_volume(3, quorum=QuorumPolicy.ONE)
        bricks2[0].up = False
        bricks2[1].up = False
        assert vol_one.write() == 1

    def test_majority_write_visible_while_any_holder_up(self):
        # randomized crash/recover patterns never lose an acknowledged write
        rng = random.Random(11)
        for _ in range(300):
            vol, bricks = make_volume(rng.choice([3, 5]))
            last_ack = 0
            for _ in range(10):
                for b in bricks:
                    b.up = rng.random() > 0.4
                try:
                    last_ack = vol.write()
                except QuorumLostError:
                    pass
                holders = [b for b in bricks if b.up and vol.stored[b.id] >= last_ack]
                if holders:
                    assert vol.read() >= last_ack


class TestBackupShipping:
    def test_transfer_time_arithmetic(self):
        link = InterZoneLink(latency_ms=20, bandwidth_mib_s=100.0)
        assert transfer_ms(600.0, link) == 6020

    def test_hourly_snapshot_arrival_time(self):
        link = InterZoneLink(latency_ms=20, bandwidth_mib_s=100.0)
        pipe = BackupPipeline(size_mib=600.0)
        snap = pipe.capture(3_600_000, data_lsn=1080, link=link,
                            source_readable=True, standby_zone_id="B")
        assert snap.arrives_at == 3_606_020
        pipe.arrive(snap)
        assert pipe.latest_available(3_606_020).taken_at == 3_600_000
        assert pipe.latest_available(3_606_019) is None

    def test_link_down_skips_capture(self):
        link = InterZoneLink(up=False)
        pipe = BackupPipeline(size_mib=600.0)
        with pytest.raises(LinkDownError):
            pipe.capture(0, 0, link, True, "B")
        assert pipe.captured == []

    def test_unreadable_source_skips_capture(self):
        link = InterZoneLink()
        pipe = BackupPipeline(size_mib=600.0)
        with pytest.raises(SourceUnreadableError):
            pipe.capture(0, 0, link, False, "B")

    def test_standby_snapshot_times_non_decreasing(self):
        link = InterZoneLink()
        pipe = BackupPipeline(size_mib=10.0)
        snaps = [pipe.capture(t, t, link, True, "B") for t in (0, 1000, 2000)]
        for s in snaps:
            pipe.arrive(s)
        times = [s.taken_at for s in pipe.at_standby]
        assert times == sorted(times)
