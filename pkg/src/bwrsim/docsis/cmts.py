"""CMTS upstream scheduler: MAP calendar, REQ service, UGS, BWR just-in-time grants."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

from .. import bwr
from ..bwr import BwrMessage
from ..traffic import Packet
from .cm import CONTENTION, POLL, UNICAST, Burst, DocsisGrant, Req, serialization_us

log = logging.getLogger(__name__)


@dataclass
class MapMessage:
    map_index: int
    emitted_at: int
    cover_start: int
    cover_end: int
    allocations: list[DocsisGrant] = field(default_factory=list)

    def trace_line(self) -> str:
        grants = ",".join(f"({g.flow_id},{g.start},{g.size},{g.kind})"
                          for g in self.allocations)
        return f"{self.emitted_at},{self.cover_start},grants=[{grants}]"


@dataclass
class GrantIntent:
    flow_id: int
    bytes: int
    not_before: int
    source: str  # req | bwr | ugs
    received_at: int = 0


@dataclass
class PeriodicFlow:
    """A UGS (or RTPS-polled) flow provisioned at the CMTS."""

    flow_id: int
    period: int
    grant_bytes: int
    polled: bool = False


class Timeline:
    """Busy intervals of one MAP window on the shared upstream channel."""

    def __init__(self, start: int, end: int):
        self.start = start
        self.end = end
        self.busy: list[tuple[int, int]] = []

    def place(self, earliest: int, duration: int) -> Optional[int]:
        t = max(earliest, self.start)
        for b0, b1 in sorted(self.busy):
            if t + duration <= b0:
                break
            if b1 > t:
                t = b1
        if t + duration > self.end or (duration == 0 and t >= self.end):
            return None
        self.busy.append((t, t + duration))
        return t

    def free_after(self, earliest: int) -> int:
        """Largest duration placeable at or after ``earliest``."""
        t = max(earliest, self.start)
        best = 0
        for b0, b1 in sorted(self.busy) + [(self.end, self.end)]:
            if b0 > t:
                best = max(best, b0 - t)
            t = max(t, b1)
        return best


class Cmts:
    def __init__(self, data_flow: int, map_interval: int = 2000, proc_us: int = 500,
                 rate_mbps: float = 100.0, cm_lead_us: int = 500, bwr_lead_us: int = 4000,
                 map_offset: int = 0):
        self.data_flow = data_flow
        self.map_interval = map_interval
        self.proc_us = proc_us
        self.rate_mbps = rate_mbps
        self.cm_lead_us = cm_lead_us
        self.bwr_lead_us = bwr_lead_us
        self.map_offset = map_offset
        self.periodic: list[PeriodicFlow] = []
        self.req_intents: list[GrantIntent] = []
        self.bwr_intents: list[GrantIntent] = []
        self.maps: list[MapMessage] = []
        self.deliver_map: Callable[[MapMessage], None] = lambda m: None
        self.on_egress: Callable[[Packet, int], None] = lambda p, t: None
        self.bwr_accepted = 0
        self.bwr_dropped = 0
        self.bwr_granted_bytes = 0
        self.bwr_announced_bytes = 0
        self.reqs_received = 0
        self.map_trace: Optional[list[str]] = None

    # -- calendar ------------------------------------------------------
    def emit_time(self, k: int) -> int:
        return k * self.map_interval + self.map_offset

    def build_deadline(self, k: int) -> int:
        return self.emit_time(k) - self.proc_us

    def coverage(self, k: int) -> tuple[int, int]:
        s = self.emit_time(k) + self.map_interval
        return s, s + self.map_interval

    def map_for_request(self, now: int) -> int:
        """Index of the earliest MAP whose build deadline is not before ``now``."""
        k = -(-(now + self.proc_us - self.map_offset) // self.map_interval)
        while self.build_deadline(k) < now:
            k += 1
        return k

    # -- inputs --------------------------------------------------------
    def add_periodic_flow(self, flow: PeriodicFlow) -> None:
        self.periodic.append(flow)

    def on_req(self, req: Req, now: int) -> None:
        self.reqs_received += 1
        for intent in self.req_intents:
            if intent.flow_id == req.flow_id:
                intent.bytes += req.nbytes
                return
        self.req_intents.append(GrantIntent(req.flow_id, req.nbytes, now, "req", now))

    def on_bwr(self, msg: BwrMessage, now: int) -> bool:
        """Record a just-in-time intent; return False when the report is too late."""
        self.bwr_announced_bytes += msg.total_bytes
        if now > msg.expected_arrival - self.bwr_lead_us:
            self.bwr_dropped += 1
            log.debug("late BWR for sf %d dropped at %d", msg.grant_subframe, now)
            return False
        self.bwr_accepted += 1
        if msg.total_bytes > 0:
            # data becomes sendable once the CM has processed it
            self.bwr_intents.append(GrantIntent(self.data_flow, msg.total_bytes,
                                                msg.expected_arrival + self.cm_lead_us,
                                                "bwr", now))
        return True

    def on_burst(self, burst: Burst, now: int) -> list[Packet]:
        """Upstream burst fully received at ``now``; return packets egressing
        after CMTS processing.  BWRs are decoded and applied at the same time."""
        done = now + self.proc_us
        out = []
        for item in burst.items:
            if isinstance(item, Packet):
                item.t_egress_cmts = done
                out.append(item)
            elif isinstance(item, (bytes, bytearray)):
                self.on_bwr(bwr.decode(bytes(item)), done)
        return out

    # -- MAP construction ---------------------------------------------
    def _grant(self, tl: Timeline, flow_id: int, earliest: int, nbytes: int,
               source: str, kind: str = UNICAST) -> Optional[DocsisGrant]:
        start = tl.place(earliest, serialization_us(nbytes, self.rate_mbps))
        if start is None:
            return None
        return DocsisGrant(flow_id, start, nbytes, kind, source)

    def build_map(self, k: int) -> MapMessage:
        start, end = self.coverage(k)
        tl = Timeline(start, end)
        allocs: list[DocsisGrant] = []

        for pf in self.periodic:
            first = start + (-(start - self.map_offset) % pf.period)
            for t in range(first, end, pf.period):
                if pf.polled:
                    allocs.append(DocsisGrant(pf.flow_id, t, 0, POLL, "poll"))
                else:
                    g = self._grant(tl, pf.flow_id, t, pf.grant_bytes, "ugs")
                    if g is not None:
                        allocs.append(g)

        keep = []
        for intent in sorted(self.bwr_intents, key=lambda i: i.not_before):
            if intent.not_before >= end:
                keep.append(intent)
                continue
            g = self._grant(tl, intent.flow_id, intent.not_before, intent.bytes, "bwr")
            if g is None:
                keep.append(intent)
                continue
            self.bwr_granted_bytes += intent.bytes
            allocs.append(g)
        self.bwr_intents = keep

        keep = []
        for intent in self.req_intents:
            room = tl.free_after(start) * self.rate_mbps // 8
            nbytes = int(min(intent.bytes, room))
            g = self._grant(tl, intent.flow_id, start, nbytes, "req") if nbytes > 0 else None
            if g is not None:
                allocs.append(g)
                intent.bytes -= nbytes
            if intent.bytes > 0:
                keep.append(intent)
        self.req_intents = keep

        allocs.append(DocsisGrant(0, start, 0, CONTENTION, "contention"))
        allocs.sort(key=lambda g: (g.start, g.kind != CONTENTION))
        mp = MapMessage(k, self.emit_time(k), start, end, allocs)
        self.maps.append(mp)
        if self.map_trace is not None:
            self.map_trace.append(mp.trace_line())
        return mp
