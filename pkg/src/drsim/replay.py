"""Trace-replay oracle.

Rebuilds cluster state from the exported newline-delimited trace records and
re-derives availability without touching the live simulation objects.  The
trace payloads carry applied state facts (containers downed, probe
transitions, promotions, redirects); this module folds them into its own
state machine and integrates the same serving-path predicates the online
metrics use, so the two must agree exactly on a correct run.
"""

from __future__ import annotations

import json
from typing import Iterable


class IncompleteTraceError(Exception):
    pass


class _ReplayState:
    def __init__(self, init: dict):
        self.duration = init["duration_ms"]
        self.sync_mode = init["sync_mode"]
        self.link_up = init["link_up"]
        self.zone_serving = {z["id"]: z["serving"] for z in init["zones"]}
        self.containers = {c["id"]: dict(c) for c in init["containers"]}
        self.backends = {b["id"]: {**b, "draining": False} for b in init["backends"]}
        self.replicas = {r["id"]: dict(r) for r in init["db"]["replicas"]}
        self.master = init["db"]["master"]
        self.write_blocked = False

    # ------------------------------------------------------------ predicates

    def _container_ok(self, cid: str) -> bool:
        c = self.containers.get(cid)
        return bool(c and c["up"] and c["data_valid"])

    def front_up(self) -> bool:
        return any(c["role"] == "balancer_front" and c["up"] and c["data_valid"]
                   and self.zone_serving.get(c["zone"], False)
                   for c in self.containers.values())

    def web_up(self) -> bool:
        return any(b["health"] == "up" and not b["draining"]
                   and self.zone_serving.get(b["zone"], False)
                   and self._container_ok(b["id"])
                   for b in self.backends.values())

    def read_db_up(self) -> bool:
        return any(self._container_ok(r["id"]) for r in self.replicas.values())

    def write_db_up(self) -> bool:
        if self.master is None or not self._container_ok(self.master):
            return False
        if self.write_blocked:
            return False
        if self.sync_mode == "sync" and not self.link_up:
            master_zone = self.replicas[self.master]["zone"]
            if any(rid != self.master and self._container_ok(rid)
                   and r["zone"] != master_zone
                   for rid, r in self.replicas.items()):
                return False
        return True

    def read_path(self) -> bool:
        return self.front_up() and self.web_up() and self.read_db_up()

    def write_path(self) -> bool:
        return self.front_up() and self.web_up() and self.write_db_up()

    # ----------------------------------------------------------- transitions

    def apply(self, kind: str, payload: dict) -> None:
        if kind == "FaultTrigger":
            self._apply_fault(payload)
        elif kind == "HealthProbe":
            for result in payload.get("results", []):
                transition = result.get("transition")
                if transition and result["backend"] in self.backends:
                    self.backends[result["backend"]]["health"] = transition
        elif kind == "MonitorTick":
            if payload.get("action") == "failover_triggered":
                self.write_blocked = True
        elif kind == "RecoveryStep":
            self._apply_recovery(payload)
        elif kind == "ServiceCompletion":
            for bid in payload.get("drain_deregistered", []):
                self.backends.pop(bid, None)
            for cid in payload.get("containers_stopped", []):
                if cid in self.containers:
                    self.containers[cid]["up"] = False
        elif kind == "ScaleEvaluation":
            for bid in payload.get("draining", []):
                if bid in self.backends:
                    self.backends[bid]["draining"] = True
            for bid in payload.get("drain_deregistered", []):
                self.backends.pop(bid, None)
            for cid in payload.get("containers_stopped", []):
                if cid in self.containers:
                    self.containers[cid]["up"] = False

    def _apply_fault(self, p: dict) -> None:
        if "container_down" in p:
            self.containers[p["container_down"]]["up"] = False
        for cid in p.get("containers_down", []):
            self.containers[cid]["up"] = False
        if "container_up" in p:
            c = self.containers[p["container_up"]]
            c["up"] = True
            c["data_valid"] = True
        if "data_invalid" in p:
            self.containers[p["data_invalid"]]["data_valid"] = False
        if "link_up" in p:
            self.link_up = p["link_up"]
        if p.get("zone_serving") is False and p.get("target") in self.zone_serving:
            self.zone_serving[p["target"]] = False

    def _apply_recovery(self, p: dict) -> None:
        step = p.get("step")
        if step == "db_promotion":
            if p.get("canceled"):
                return
            self.master = p.get("db_master")
            self.write_blocked = False
        elif step == "link_restore":
            self.link_up = True
        elif step == "data_restore":
            self.containers[p["data_valid"]]["data_valid"] = True
        elif step in ("scale_container_up", "dr_container_up"):
            reg = p.get("registered")
            cid = p.get("container_up")
            if cid:
                c = self.containers.get(cid)
                if c is None:  # container created at runtime by a scale-out
                    c = {"id": cid, "zone": (reg or {}).get("zone", ""),
                         "role": "web_server", "up": False, "data_valid": True}
                    self.containers[cid] = c
                c["up"] = True
                c["data_valid"] = True
            if reg:
                self.backends[reg["id"]] = {**reg, "draining": False}
        elif step == "dr_serving":
            for zid, serving in p.get("zones_serving", {}).items():
                self.zone_serving[zid] = serving
            for reg in p.get("registered", []):
                self.backends[reg["id"]] = {**reg, "draining": False}
            self.master = p.get("db_master")
            self.write_blocked = False


def replay_availability(trace_lines: Iterable[str]) -> dict:
    """Independent availability recomputation over an exported trace.

    Returns the same shape as the online tracker's percentages block.
    """
    state = None
    last_t = 0
    read_down = write_down = both_down = any_down = 0

    def integrate(until: int) -> None:
        nonlocal read_down, write_down, both_down, any_down, last_t
        elapsed = until - last_t
        if elapsed > 0 and state is not None:
            r, w = state.read_path(), state.write_path()
            if not r:
                read_down += elapsed
            if not w:
                write_down += elapsed
            if not r and not w:
                both_down += elapsed
            if not r or not w:
                any_down += elapsed
        last_t = until

    for line in trace_lines:
        line = line.strip()
        if not line:
            continue
        record = json.loads(line)
        if state is None:
            if record["kind"] != "Init":
                raise IncompleteTraceError("trace must start with an Init record")
            state = _ReplayState(record["payload"])
            last_t = 0
            continue
        integrate(record["t"])
        state.apply(record["kind"], record["payload"])

    if state is None:
        raise IncompleteTraceError("empty trace")
    integrate(state.duration)
    duration = state.duration

    def pct(down: int) -> float:
        return (duration - down) * 100 / duration if duration > 0 else 100.0

    return {
        "overall_percent": pct(any_down),
        "read_percent": pct(read_down),
        "write_percent": pct(write_down),
        "downtime_ms": {
            "overall": any_down,
            "read": read_down,
            "write": write_down,
            "both": both_down,
        },
    }
