"""UE side of the uplink request ladder: buffering, SR, BSR, grant fill."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from ..traffic import Packet


@dataclass
class UlGrant:
    """Uplink grant computed by the eNB at ``grant_subframe``.

    ``bytes`` counts data capacity; a grant answering an SR carries the BSR
    only and has ``bytes == 0`` with ``bsr_request`` set.
    """

    ue_id: int
    grant_subframe: int
    bytes: int
    per_lcg_bytes: tuple[int, int, int, int] = (0, 0, 0, 0)
    tx_offset: int = 4
    decode_offset: int = 6
    bsr_request: bool = False
    n_prb: int = 0

    def __post_init__(self):
        if self.bytes < 0:
            raise ValueError("grant bytes must be >= 0")
        if sum(self.per_lcg_bytes) != self.bytes:
            raise ValueError("per_lcg_bytes must sum to bytes")

    @property
    def tx_subframe(self) -> int:
        return self.grant_subframe + self.tx_offset

    @property
    def decode_subframe(self) -> int:
        return self.grant_subframe + self.decode_offset


@dataclass
class TransportBlock:
    ue_id: int
    grant: UlGrant
    packets: list[Packet]
    bsr: Optional[tuple[int, int, int, int]]
    tx_subframe: int
    harq_pid: int
    tx_count: int = 1
    rlc_seq: Optional[int] = None
    decoded_at: Optional[int] = None

    @property
    def data_bytes(self) -> int:
        return sum(p.size for p in self.packets)


@dataclass
class Ue:
    ue_id: int
    enb_id: int = 0
    sr_period: int = 5000
    sr_offset: int = 500
    bsr_period: int = 10_000
    proc_floor: int = 500
    buffer: list[deque] = field(default_factory=lambda: [deque() for _ in range(4)])
    buffered_bytes: int = 0
    sr_pending: bool = False
    pending_grants: dict[int, UlGrant] = field(default_factory=dict)
    last_bsr_time: Optional[int] = None
    bytes_arrived: int = 0
    bytes_sent: int = 0
    srs_sent: int = 0

    def _pending_capacity(self) -> int:
        return sum(g.bytes for g in self.pending_grants.values())

    def has_valid_grant(self) -> bool:
        """Any pending grant with unspent data bytes counts as valid."""
        return self._pending_capacity() > 0

    def handle_arrival(self, p: Packet) -> None:
        self.buffer[p.lcg].append(p)
        self.buffered_bytes += p.size
        self.bytes_arrived += p.size
        if not self.sr_pending and not self.has_valid_grant():
            self.sr_pending = True

    def is_sr_opportunity(self, now: int) -> bool:
        return now % self.sr_period == self.sr_offset % self.sr_period

    def next_sr_opportunity(self, now: int) -> int:
        base = self.sr_offset % self.sr_period
        if now <= base:
            return base
        k = -(-(now - base) // self.sr_period)
        return base + k * self.sr_period

    def handle_sr_opportunity(self, now: int) -> bool:
        """Return True when an SR is sent at this opportunity."""
        if not self.sr_pending:
            return False
        self.sr_pending = False
        self.srs_sent += 1
        return True

    def build_bsr(self) -> tuple[int, int, int, int]:
        return tuple(sum(p.size for p in q) for q in self.buffer)  # type: ignore[return-value]

    def receive_grant(self, grant: UlGrant) -> None:
        self.pending_grants[grant.tx_subframe] = grant

    def transmit_on_grant(self, grant: UlGrant, now: int, harq_pid: int = 0) -> TransportBlock:
        """Fill ``grant`` with whole packets, LCG0 first, FIFO within an LCG.

        Packets younger than ``proc_floor`` are not yet ready.  A BSR rides in
        the block when the grant asked for one or the periodic timer ran out;
        it reports what stays buffered after this block.
        """
        self.pending_grants.pop(grant.tx_subframe, None)
        room = grant.bytes
        sent: list[Packet] = []
        for q in self.buffer:
            while q and q[0].size <= room and q[0].t_arrival_ue + self.proc_floor <= now:
                p = q.popleft()
                room -= p.size
                sent.append(p)
        nbytes = sum(p.size for p in sent)
        self.buffered_bytes -= nbytes
        self.bytes_sent += nbytes

        bsr = None
        periodic_due = self.last_bsr_time is None or now - self.last_bsr_time >= self.bsr_period
        if grant.bsr_request or (periodic_due and self.buffered_bytes > 0):
            bsr = self.build_bsr()
            self.last_bsr_time = now
        return TransportBlock(self.ue_id, grant, sent, bsr, grant.tx_subframe, harq_pid)
