"""SLA/downtime arithmetic, availability measurement, recovery-band
classification, and run-report assembly.

An SLA percentage converts to an annual downtime budget using a 365.2425-day
year and truncation to whole seconds: 99% allows 3d 15h 39m 29s of downtime a
year, 99.9% allows 8h 45m 56s.  Availability of a run is the fraction of time
a healthy serving path existed, tracked separately for reads and writes, with
the headline number requiring both.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .drctl import DrMode
from .engine import Millis

DEFAULT_YEAR_DAYS = 365.2425

MINUTE_S = 60
HOUR_S = 3600
DAY_S = 86400


@dataclass
class SlaTarget:
    percent: float
    year_length_days: float = DEFAULT_YEAR_DAYS

    def validate(self) -> None:
        if not 0 < self.percent <= 100:
            raise ValueError("SLA percent must be in (0, 100]")


@dataclass
class DowntimeBudget:
    total_seconds: int
    formatted: str


def format_duration(total_seconds: int) -> str:
    """Render seconds as "Nd Nh Nm Ns" with zero components omitted."""
    if total_seconds <= 0:
        return "0s"
    days, rem = divmod(total_seconds, DAY_S)
    hours, rem = divmod(rem, HOUR_S)
    minutes, seconds = divmod(rem, MINUTE_S)
    parts = []
    if days:
        parts.append(f"{days}d")
    if hours:
        parts.append(f"{hours}h")
    if minutes:
        parts.append(f"{minutes}m")
    if seconds:
        parts.append(f"{seconds}s")
    return " ".join(parts)


def sla_to_downtime(target: SlaTarget) -> DowntimeBudget:
    """Annual downtime budget for an uptime percentage.

    Exact rational arithmetic, truncated (not rounded) to whole seconds:
    rounding would print 3d 15h 39m 30s for 99% where truncation gives the
    29s figure that the 365.2425-day year produces.
    """
    target.validate()
    down_fraction = 1 - Fraction(str(target.percent)) / 100
    seconds = down_fraction * Fraction(str(target.year_length_days)) * DAY_S
    total = int(seconds)  # truncates toward zero; seconds is >= 0
    return DowntimeBudget(total_seconds=total, formatted=format_duration(total))


class AvailabilityTracker:
    """Integrates read/write serving-path state over simulated time.

    ``observe`` is called with the current path predicates after every
    processed event; stretches between observations carry the previous state.
    """

    def __init__(self):
        self.last_time: Millis = 0
        self.read_up = True
        self.write_up = True
        self.read_down_ms = 0
        self.write_down_ms = 0
        self.both_down_ms = 0
        self.any_down_ms = 0  # headline: either path missing

    def observe(self, now: Millis, read_up: bool, write_up: bool) -> None:
        elapsed = now - self.last_time
        if elapsed > 0:
            if not self.read_up:
                self.read_down_ms += elapsed
            if not self.write_up:
                self.write_down_ms += elapsed
            if not self.read_up and not self.write_up:
                self.both_down_ms += elapsed
            if not self.read_up or not self.write_up:
                self.any_down_ms += elapsed
        self.last_time = now
        self.read_up = read_up
        self.write_up = write_up

    def finalize(self, duration: Millis) -> None:
        self.observe(duration, self.read_up, self.write_up)

    def percentages(self, duration: Millis) -> dict:
        def pct(down: int) -> float:
            return (duration - down) * 100 / duration if duration > 0 else 100.0
        return {
            "overall_percent": pct(self.any_down_ms),
            "read_percent": pct(self.read_down_ms),
            "write_percent": pct(self.write_down_ms),
            "downtime_ms": {
                "overall": self.any_down_ms,
                "read": self.read_down_ms,
                "write": self.write_down_ms,
                "both": self.both_down_ms,
            },
        }


# Recovery-class ceilings per mode.  The published classes are qualitative
# ("RPO in minutes", "RTO in hours"); inclusive ceilings make them testable.
BAND_CEILINGS = {
    DrMode.BACKUP_AND_RESTORE.value: {
        "rpo_band": "hours", "rpo_ceiling_ms": 24 * HOUR_S * 1000,
        "rto_band": "24-48 hours", "rto_ceiling_ms": 48 * HOUR_S * 1000,
    },
    DrMode.PILOT_LIGHT.value: {
        "rpo_band": "minutes", "rpo_ceiling_ms": 60 * MINUTE_S * 1000,
        "rto_band": "hours", "rto_ceiling_ms": 24 * HOUR_S * 1000,
    },
    DrMode.WARM_STANDBY.value: {
        "rpo_band": "seconds", "rpo_ceiling_ms": 60 * 1000,
        "rto_band": "minutes", "rto_ceiling_ms": 60 * MINUTE_S * 1000,
    },
    DrMode.ACTIVE_ACTIVE.value: {
        "rpo_band": "~0", "rpo_ceiling_ms": 0,
        "rto_band": "~0", "rto_ceiling_ms": 0,
    },
}


def classify_recovery(mode: str, rto_ms: Millis, rpo_time_ms: Millis,
                      rpo_transactions: int, detection_latency_ms: Millis) -> dict:
    """Check one recovery record against its mode's class ceilings.

    Active/active's "approximately zero" class means no transactions lost and
    an RTO no worse than the detection latency itself.
    """
    bands = BAND_CEILINGS[mode]
    if mode == DrMode.ACTIVE_ACTIVE.value:
        rpo_within = rpo_transactions == 0
        rto_within = rto_ms <= detection_latency_ms
    else:
        rpo_within = rpo_time_ms <= bands["rpo_ceiling_ms"]
        rto_within = rto_ms <= bands["rto_ceiling_ms"]
    return {
        "rpo_band": bands["rpo_band"],
        "rto_band": bands["rto_band"],
        "rpo_within_band": rpo_within,
        "rto_within_band": rto_within,
    }


def measure_rto_rpo(recovery_records: list[dict], mode: str,
                    detection_latency_ms: Millis) -> dict:
    """Per-disaster durations plus a worst-case summary and band verdicts."""
    if not recovery_records:
        return {"records": [], "worst_case": None, "verdict": "n/a"}
    enriched = []
    for rec in recovery_records:
        bands = classify_recovery(mode, rec["rto_ms"], rec["rpo_time_ms"],
                                  rec["rpo_transactions"], detection_latency_ms)
        enriched.append({**rec, **bands})
    worst = {
        "rto_ms": max(r["rto_ms"] for r in enriched),
        "rpo_time_ms": max(r["rpo_time_ms"] for r in enriched),
        "rpo_transactions": max(r["rpo_transactions"] for r in enriched),
    }
    verdict = "within_bands" if all(
        r["rpo_within_band"] and r["rto_within_band"] for r in enriched) else "outside_bands"
    return {"records": enriched, "worst_case": worst, "verdict": verdict}


def scenario_digest(scenario: dict) -> str:
    canonical = json.dumps(scenario, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(canonical).hexdigest()


def report_to_canonical_json(report: dict) -> bytes:
    return (json.dumps(report, sort_keys=True, separators=(",", ": "), indent=2) + "\n").encode()


def strip_wallclock(report: dict) -> dict:
    """Copy of the report without the one wall-clock metadata field, for
    determinism comparisons."""
    out = dict(report)
    out.pop("generated_at", None)
    return out


def render_text(report: dict) -> str:
    """Human-readable summary table of a run report."""
    lines = []
    av = report["availability"]
    lines.append("run report")
    lines.append(f"  scenario digest : {report['scenario_digest'][:16]}…")
    lines.append(f"  seed            : {report['seed']}")
    lines.append(f"  dr mode         : {report['dr_mode']}")
    lines.append(f"  duration        : {format_duration(report['duration_ms'] // 1000)}")
    lines.append(f"  availability    : {av['overall_percent']:.4f}% "
                 f"(read {av['read_percent']:.4f}%, write {av['write_percent']:.4f}%)")
    sla = report["sla"]
    lines.append(f"  sla target      : {sla['target_percent']}% -> {sla['verdict']} "
                 f"(annual budget {sla['annual_downtime_budget']})")
    req = report["requests"]
    lines.append(f"  requests        : {req['total']} total, {req['success']} ok, "
                 f"{req['failed']} failed, {req['in_flight_at_end']} in flight at end")
    for backend, count in sorted(req["per_backend"].items()):
        lines.append(f"    {backend:<16} {count}")
    if req["failed_by_reason"]:
        for reason, count in sorted(req["failed_by_reason"].items()):
            lines.append(f"    failed[{reason}] {count}")
    rr = report["recovery"]
    if rr["records"]:
        lines.append("  recoveries")
        for rec in rr["records"]:
            lines.append(
                f"    zone {rec['failed_zone']} -> {rec['to_zone']}: "
                f"rto {rec['rto_ms'] / 1000:.1f}s ({rec['rto_band']}"
                f"{' ok' if rec['rto_within_band'] else ' MISS'}), "
                f"rpo {rec['rpo_time_ms'] / 1000:.1f}s / {rec['rpo_transactions']} tx "
                f"({rec['rpo_band']}{' ok' if rec['rpo_within_band'] else ' MISS'})")
    else:
        lines.append("  recoveries      : none")
    if report["scale"]["actions"]:
        lines.append("  scale actions")
        for act in report["scale"]["actions"]:
            lines.append(f"    t={act['t_ms']}: {act['action']} "
                         f"{act['from_nodes']} -> {act['to_nodes']} nodes")
    return "\n".join(lines) + "\n"
