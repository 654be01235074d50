"""Cable modem upstream: service flows, contention REQs, grant use."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from ..kernel import RngStream
from ..traffic import Packet

BE_DATA = "be_data"
UGS_BWR = "ugs_bwr"

CONTENTION = "contention_region"
UNICAST = "unicast"
POLL = "poll"

BACKOFF_EXP_MAX = 10


def serialization_us(nbytes: int, rate_mbps: float) -> int:
    """Burst duration rounded up to whole microseconds (bits / Mbps = us)."""
    if rate_mbps <= 0:
        raise ValueError("upstream rate must be positive")
    return math.ceil(nbytes * 8 / rate_mbps - 1e-9)


@dataclass
class DocsisGrant:
    flow_id: int
    start: int
    size: int
    kind: str = UNICAST
    source: str = "req"
    used: int = 0

    @property
    def unspent(self) -> int:
        return self.size - self.used


@dataclass
class QueuedItem:
    item: Any
    size: int
    ready_at: int


@dataclass
class ServiceFlow:
    flow_id: int
    kind: str
    queue: deque = field(default_factory=deque)
    queued_bytes: int = 0
    window_exp: int = 0
    defer: int = 0
    retry_count: int = 0
    req_armed: bool = False
    req_ready_at: int = 0
    req_outstanding: bool = False
    bytes_in: int = 0
    bytes_out: int = 0
    reqs_sent: int = 0


@dataclass
class Burst:
    flow_id: int
    grant: DocsisGrant
    items: list
    nbytes: int
    start: int
    end: int


@dataclass
class Req:
    flow_id: int
    nbytes: int
    time: int


class CableModem:
    """Single CM.  ``send_req`` and ``send_burst`` deliver upstream; the
    owner wires them to the CMTS and to the event kernel."""

    def __init__(self, rate_mbps: float = 100.0, proc_us: int = 500, overhead_us: int = 0,
                 p_collide: float = 0.0, contention_rng: Optional[RngStream] = None,
                 schedule: Optional[Callable[[int, str, Any, Callable[[], Any]], Any]] = None):
        self.rate_mbps = rate_mbps
        self.proc_us = proc_us
        self.overhead_us = overhead_us
        self.p_collide = p_collide
        self.rng = contention_rng
        self.flows: dict[int, ServiceFlow] = {}
        self.grants: dict[int, list[DocsisGrant]] = {}
        self.schedule = schedule
        self.send_req: Callable[[Req], None] = lambda req: None
        self.send_burst: Callable[[Burst], None] = lambda burst: None
        self.wasted_bytes = 0
        self.collisions = 0

    def add_flow(self, flow_id: int, kind: str) -> ServiceFlow:
        if kind not in (BE_DATA, UGS_BWR):
            raise ValueError(f"unknown service flow kind {kind!r}")
        f = ServiceFlow(flow_id, kind)
        self.flows[flow_id] = f
        self.grants[flow_id] = []
        return f

    # -- bookkeeping ---------------------------------------------------
    def covered_bytes(self, flow_id: int, now: int) -> int:
        return sum(g.unspent for g in self.grants[flow_id] if g.start >= now)

    def _shortfall(self, flow: ServiceFlow, now: int) -> int:
        return flow.queued_bytes - self.covered_bytes(flow.flow_id, now)

    def _reconsider_req(self, flow: ServiceFlow, now: int) -> None:
        if flow.kind != BE_DATA or flow.req_outstanding or flow.req_armed:
            return
        if self._shortfall(flow, now) > 0:
            flow.req_armed = True
            flow.req_ready_at = now + self.proc_us

    # -- operations ----------------------------------------------------
    def on_ingress(self, flow_id: int, item: Any, size: int, now: int) -> None:
        if size <= 0:
            raise ValueError("ingress item must have positive size")
        flow = self.flows[flow_id]
        if isinstance(item, Packet):
            item.t_arrival_cm = now
        # data passes CM processing and framing before it can be sent;
        # BWRs ride pre-provisioned UGS slots with no added lead
        ready = now + self.proc_us + self.overhead_us if flow.kind == BE_DATA else now
        flow.queue.append(QueuedItem(item, size, ready))
        flow.queued_bytes += size
        flow.bytes_in += size
        self._reconsider_req(flow, now)

    def contention_request(self, flow: ServiceFlow, opportunity: int,
                           collided: Optional[bool] = None) -> Optional[Req]:
        """Try to send the armed REQ in the contention region at ``opportunity``."""
        if not flow.req_armed or opportunity < flow.req_ready_at:
            return None
        if flow.defer > 0:
            flow.defer -= 1
            return None
        nbytes = self._shortfall(flow, opportunity)
        if nbytes <= 0:
            flow.req_armed = False
            return None
        if collided is None:
            collided = self.rng.bernoulli(self.p_collide) if self.rng is not None else False
        if collided:
            self.collisions += 1
            flow.retry_count += 1
            flow.window_exp = min(flow.window_exp + 1, BACKOFF_EXP_MAX)
            hi = 2 ** flow.window_exp
            flow.defer = (self.rng.integers(1, hi) if self.rng is not None else hi) - 1
            return None
        flow.req_armed = False
        flow.req_outstanding = True
        flow.window_exp = 0
        flow.retry_count = 0
        flow.reqs_sent += 1
        return Req(flow.flow_id, nbytes, opportunity)

    def apply_map(self, mp, now: int) -> None:
        for g in mp.allocations:
            if g.kind == CONTENTION:
                if self.schedule is not None:
                    self.schedule(g.start, "cm", "contention",
                                  lambda g=g: self._on_contention(g))
                continue
            if g.flow_id not in self.flows:
                raise KeyError(f"MAP grant for unknown flow {g.flow_id}")
            if g.kind == POLL:
                if self.schedule is not None:
                    self.schedule(g.start, "cm", f"poll flow={g.flow_id}",
                                  lambda g=g: self._on_poll(g))
                continue
            self.grants[g.flow_id].append(g)
            if g.source == "req":
                self.flows[g.flow_id].req_outstanding = False
            if self.schedule is not None:
                self.schedule(g.start, "cm", f"grant flow={g.flow_id} bytes={g.size}",
                              lambda g=g: self.transmit_grant(g, g.start))
        for flow in self.flows.values():
            self._reconsider_req(flow, now)

    def _on_contention(self, region: DocsisGrant) -> None:
        for flow in self.flows.values():
            if flow.kind != BE_DATA:
                continue
            req = self.contention_request(flow, region.start)
            if req is not None:
                self.send_req(req)

    def _on_poll(self, poll: DocsisGrant) -> None:
        flow = self.flows[poll.flow_id]
        nbytes = flow.queued_bytes - self.covered_bytes(flow.flow_id, poll.start)
        if nbytes > 0:
            flow.reqs_sent += 1
            self.send_req(Req(flow.flow_id, nbytes, poll.start))

    def transmit_grant(self, grant: DocsisGrant, now: int) -> Burst:
        """Send whole ready items, FIFO, up to the grant size."""
        flow = self.flows[grant.flow_id]
        self.grants[grant.flow_id] = [g for g in self.grants[grant.flow_id] if g is not grant]
        room = grant.size
        items = []
        while flow.queue and flow.queue[0].size <= room and flow.queue[0].ready_at <= now:
            q = flow.queue.popleft()
            room -= q.size
            items.append(q.item)
        sent = grant.size - room
        grant.used = sent
        flow.queued_bytes -= sent
        flow.bytes_out += sent
        self.wasted_bytes += room
        end = now + serialization_us(sent, self.rate_mbps)
        burst = Burst(flow.flow_id, grant, items, sent, now, end)
        self._reconsider_req(flow, now)
        if items:
            self.send_burst(burst)
        return burst
