"""eNB MAC/RLC: round-robin uplink scheduler, HARQ, in-order RLC, BWR builder."""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

from ..bwr import BwrMessage
from ..kernel import subframe_start
from ..traffic import Packet
from .channel import N_PRB_MAX, ChannelState, TbsTable
from .ue import TransportBlock, Ue, UlGrant

log = logging.getLogger(__name__)

N_HARQ = 8
RETX_INTERVAL = 8
FLUSH_WINDOW = 8

NO_FLUSH = "no_flush"
FLUSH = "flush"


class ModelError(RuntimeError):
    pass


class GrantHistory:
    """Per-UE record of data grants keyed by grant subframe."""

    def __init__(self, capacity: int = 32):
        if capacity < FLUSH_WINDOW + 1:
            raise ValueError("history must hold at least 9 subframes")
        self.capacity = capacity
        self._grants: dict[int, UlGrant] = {}

    def record(self, grant: UlGrant) -> None:
        self._grants[grant.grant_subframe] = grant
        oldest = grant.grant_subframe - self.capacity + 1
        for sf in [sf for sf in self._grants if sf < oldest]:
            del self._grants[sf]

    def lookup(self, x: int) -> int:
        g = self._grants.get(x)
        return g.bytes if g else 0

    def lookup_lcg(self, x: int) -> tuple[int, int, int, int]:
        g = self._grants.get(x)
        return g.per_lcg_bytes if g else (0, 0, 0, 0)

    def grants_between(self, lo: int, hi: int) -> list[UlGrant]:
        """Grants with ``lo <= grant_subframe <= hi``."""
        return [g for sf, g in sorted(self._grants.items()) if lo <= sf <= hi]


@dataclass
class HarqProcess:
    state: str = "idle"  # idle | awaiting_decode | awaiting_retx
    tb: Optional[TransportBlock] = None
    retx_subframe: Optional[int] = None


class HarqProcessTable:
    """Eight synchronous processes; process id is the tx subframe mod 8."""

    def __init__(self):
        self.procs = [HarqProcess() for _ in range(N_HARQ)]

    @staticmethod
    def pid_for(tx_subframe: int) -> int:
        return tx_subframe % N_HARQ

    def busy_for_new_tx(self, tx_subframe: int) -> bool:
        p = self.procs[self.pid_for(tx_subframe)]
        return p.state == "awaiting_retx" and p.retx_subframe == tx_subframe

    def start(self, tb: TransportBlock) -> None:
        p = self.procs[tb.harq_pid]
        if p.state == "awaiting_decode":
            raise ModelError(f"HARQ process {tb.harq_pid} already has a block in flight")
        p.state, p.tb, p.retx_subframe = "awaiting_decode", tb, None

    def resolve(self, tb: TransportBlock, passed: bool) -> None:
        p = self.procs[tb.harq_pid]
        if p.state != "awaiting_decode" or p.tb is not tb:
            raise ModelError(f"CRC outcome for idle HARQ process {tb.harq_pid}")
        if passed:
            p.state, p.tb, p.retx_subframe = "idle", None, None
        else:
            p.state, p.retx_subframe = "awaiting_retx", tb.tx_subframe + RETX_INTERVAL

    def retx_due(self, tx_subframe: int) -> Optional[TransportBlock]:
        p = self.procs[self.pid_for(tx_subframe)]
        if p.state == "awaiting_retx" and p.retx_subframe == tx_subframe:
            return p.tb
        return None

    def retx_prbs(self, tx_subframe: int) -> int:
        tb = self.retx_due(tx_subframe)
        return tb.grant.n_prb if tb else 0


class RlcQueue:
    """In-order delivery of decoded blocks for one UE.

    Blocks carrying packets get a sequence number at first transmission;
    a block egresses only when every earlier block has been decoded.
    """

    def __init__(self):
        self._next_seq = 0
        self._deliver_seq = 0
        self._received: dict[int, TransportBlock] = {}
        self._missing_until: dict[int, int] = {}

    def assign(self, tb: TransportBlock) -> None:
        if tb.packets and tb.rlc_seq is None:
            tb.rlc_seq = self._next_seq
            self._next_seq += 1

    @property
    def hold_until(self) -> Optional[int]:
        pending = [sf for seq, sf in self._missing_until.items() if seq >= self._deliver_seq]
        return max(pending) if pending else None

    def mark_missing(self, tb: TransportBlock, retx_decode: int) -> None:
        if tb.rlc_seq is not None:
            self._missing_until[tb.rlc_seq] = retx_decode

    def receive(self, tb: TransportBlock) -> None:
        if tb.rlc_seq is None:
            return
        self._missing_until.pop(tb.rlc_seq, None)
        self._received[tb.rlc_seq] = tb

    def pop_ready(self) -> list[TransportBlock]:
        ready = []
        while self._deliver_seq in self._received:
            ready.append(self._received.pop(self._deliver_seq))
            self._deliver_seq += 1
        return ready

    def __len__(self) -> int:
        return len(self._received)


@dataclass
class UeContext:
    """Per-UE eNB state."""

    ue: Ue
    history: GrantHistory = field(default_factory=GrantHistory)
    harq: HarqProcessTable = field(default_factory=HarqProcessTable)
    rlc: RlcQueue = field(default_factory=RlcQueue)
    estimate: list[int] = field(default_factory=lambda: [0, 0, 0, 0])
    sr_grant_due: Optional[int] = None

    @property
    def backlog(self) -> int:
        return sum(self.estimate)


@dataclass
class LteTiming:
    tx_offset: int = 4
    decode: int = 2
    turnaround: int = 4000  # us; SR -> grant and BSR tx -> grant
    n_prb: int = N_PRB_MAX

    @property
    def decode_offset(self) -> int:
        return self.tx_offset + self.decode


def apportion(nbytes: int, estimate: list[int]) -> tuple[int, int, int, int]:
    """Split ``nbytes`` over LCGs from the estimate, LCG0 first; any excess
    beyond the estimate lands on the last non-empty LCG."""
    out = [0, 0, 0, 0]
    left = nbytes
    for i in range(4):
        take = min(left, max(estimate[i], 0))
        out[i] = take
        left -= take
    if left:
        last = max((i for i in range(4) if estimate[i] > 0), default=0)
        out[last] += left
    return tuple(out)  # type: ignore[return-value]


def build_bwr(enb_id: int, t: int, contexts: list[UeContext], mode: str,
              failed: set[int], timing: LteTiming) -> list[BwrMessage]:
    """Reports for subframe ``t``.

    Each UE contributes its grant at ``t``, expected at the CM after the
    tx + decode ladder.  In flush mode a UE whose block failed CRC at ``t``
    instead contributes every grant from ``t - 8`` through ``t``, expected
    when the retransmission releases the RLC hold.  UEs with the same
    expected arrival share one message.
    """
    regular = [0, 0, 0, 0]
    flushed = [0, 0, 0, 0]
    any_regular = any_flush = False
    for ctx in contexts:
        uid = ctx.ue.ue_id
        if mode == FLUSH and uid in failed:
            any_flush = True
            for x in range(t - FLUSH_WINDOW, t + 1):
                for i, b in enumerate(ctx.history.lookup_lcg(x)):
                    flushed[i] += b
        else:
            any_regular = True
            for i, b in enumerate(ctx.history.lookup_lcg(t)):
                regular[i] += b
    msgs = []
    if any_regular:
        msgs.append(BwrMessage(enb_id, t, subframe_start(t + timing.decode_offset),
                               sum(regular), tuple(regular)))
    if any_flush:
        msgs.append(BwrMessage(enb_id, t, subframe_start(t + RETX_INTERVAL),
                               sum(flushed), tuple(flushed), flush_included=True))
    return msgs


class Enb:
    """One eNB with its UEs, driven once per subframe by :meth:`subframe`."""

    def __init__(self, enb_id: int, ues: list[Ue], channel: ChannelState,
                 tbs: Optional[TbsTable] = None, timing: Optional[LteTiming] = None,
                 bwr_mode: Optional[str] = None):
        self.enb_id = enb_id
        self.ctx = [UeContext(ue) for ue in ues]
        self._by_id = {c.ue.ue_id: c for c in self.ctx}
        self.channel = channel
        self.tbs = tbs or TbsTable()
        self.timing = timing or LteTiming()
        self.bwr_mode = bwr_mode
        self._rr = 0
        self._inflight: dict[int, list[TransportBlock]] = defaultdict(list)
        self._bsr_ready: dict[int, list[tuple[UeContext, tuple, int]]] = defaultdict(list)
        self.failures: list[tuple[int, int]] = []  # (subframe, ue_id)
        self.bwr_log: list[BwrMessage] = []

    # -- SR path -------------------------------------------------------
    def on_sr(self, ue_id: int, now: int) -> None:
        ctx = self._by_id[ue_id]
        due = -(-(now + self.timing.turnaround) // 1000)
        if ctx.sr_grant_due is None or due < ctx.sr_grant_due:
            ctx.sr_grant_due = due

    # -- uplink reception ---------------------------------------------
    def on_uplink_rx(self, t: int, tb: TransportBlock, passed: bool) -> bool:
        """Apply a CRC outcome; return True when the block failed."""
        ctx = self._by_id[tb.ue_id]
        ctx.harq.resolve(tb, passed)
        if passed:
            ctx.rlc.receive(tb)
            if tb.bsr is not None:
                # BSR usable one turnaround after the original transmission
                ready = max(t, tb.grant.tx_subframe + self.timing.turnaround // 1000)
                self._bsr_ready[ready].append((ctx, tb.bsr, tb.grant.tx_subframe))
            return False
        for p in tb.packets:
            p.harq_affected = True
        ctx.rlc.mark_missing(tb, t + RETX_INTERVAL)
        self.failures.append((t, tb.ue_id))
        return True

    def _apply_bsr(self, ctx: UeContext, bsr: tuple, bsr_tx: int) -> None:
        # grants transmitted after the BSR drain bytes it already counted
        est = list(bsr)
        for g in ctx.history.grants_between(bsr_tx - self.timing.tx_offset + 1, 10**9):
            for i in range(4):
                est[i] -= g.per_lcg_bytes[i]
        ctx.estimate = [max(0, e) for e in est]

    def egress_ready(self, t: int) -> list[Packet]:
        out = []
        now = subframe_start(t)
        for ctx in self.ctx:
            for tb in ctx.rlc.pop_ready():
                held = tb.decoded_at is not None and tb.decoded_at < t
                for p in tb.packets:
                    p.t_egress_enb = now
                    if held:
                        p.harq_affected = True
                    out.append(p)
        return out

    # -- scheduling ----------------------------------------------------
    def schedule_subframe(self, t: int) -> list[UlGrant]:
        tx_sf = t + self.timing.tx_offset
        n = len(self.ctx)
        order = [self.ctx[(self._rr + i) % n] for i in range(n)]
        self._rr = (self._rr + 1) % n if n else 0

        avail = self.timing.n_prb - sum(c.harq.retx_prbs(tx_sf) for c in self.ctx)
        want: dict[int, int] = {}
        sr_only: list[UeContext] = []
        for ctx in order:
            if ctx.harq.busy_for_new_tx(tx_sf):
                if ctx.sr_grant_due is not None and ctx.sr_grant_due <= t:
                    ctx.sr_grant_due = t + 1
                continue
            mcs = self.channel.mcs[ctx.ue.ue_id]
            if ctx.backlog > 0:
                want[ctx.ue.ue_id] = self.tbs.prbs_for(mcs, ctx.backlog)
            elif ctx.sr_grant_due is not None and ctx.sr_grant_due <= t:
                sr_only.append(ctx)

        # SR grants carry only the BSR and take one PRB each
        granted_sr = []
        for ctx in sr_only:
            if avail > 0:
                avail -= 1
                granted_sr.append(ctx)
        sr_only = granted_sr

        alloc = {uid: 0 for uid in want}
        while avail > 0:
            progressed = False
            for ctx in order:
                uid = ctx.ue.ue_id
                if uid in want and alloc[uid] < want[uid] and avail > 0:
                    alloc[uid] += 1
                    avail -= 1
                    progressed = True
            if not progressed:
                break

        grants = []
        for ctx in order:
            uid = ctx.ue.ue_id
            bsr_req = ctx.sr_grant_due is not None and ctx.sr_grant_due <= t
            if alloc.get(uid):
                mcs = self.channel.mcs[uid]
                nbytes = min(self.tbs.tbs_bytes(mcs, alloc[uid]), ctx.backlog)
                lcg = apportion(nbytes, ctx.estimate)
                for i in range(4):
                    ctx.estimate[i] -= lcg[i]
                g = UlGrant(uid, t, nbytes, lcg, self.timing.tx_offset,
                            self.timing.decode_offset, bsr_request=bsr_req, n_prb=alloc[uid])
            elif ctx in sr_only:
                g = UlGrant(uid, t, 0, (0, 0, 0, 0), self.timing.tx_offset,
                            self.timing.decode_offset, bsr_request=True, n_prb=1)
            else:
                continue
            if bsr_req:
                ctx.sr_grant_due = None
            if g.bytes:
                ctx.history.record(g)
            ctx.ue.receive_grant(g)
            grants.append(g)
        return grants

    # -- per-subframe driver -------------------------------------------
    def subframe(self, t: int) -> tuple[list[Packet], list[BwrMessage]]:
        """Run subframe ``t``: decode, egress, schedule, report, transmit."""
        for ctx in self.ctx:
            self.channel.mcs_at(ctx.ue.ue_id, subframe_start(t))
        failed: set[int] = set()
        for tb in self._inflight.pop(t, []):
            passed = self.channel.draw_harq(is_retx=tb.tx_count > 1)
            tb.decoded_at = t
            if self.on_uplink_rx(t, tb, passed):
                failed.add(tb.ue_id)
        for ctx, bsr, bsr_tx in self._bsr_ready.pop(t, []):
            self._apply_bsr(ctx, bsr, bsr_tx)

        egress = self.egress_ready(t)
        self.schedule_subframe(t)

        msgs: list[BwrMessage] = []
        if self.bwr_mode is not None:
            msgs = build_bwr(self.enb_id, t, self.ctx, self.bwr_mode, failed, self.timing)
            self.bwr_log.extend(msgs)

        now = subframe_start(t)
        for ctx in self.ctx:
            retx = ctx.harq.retx_due(t)
            if retx is not None:
                retx.tx_count += 1
                retx.tx_subframe = t
                ctx.harq.procs[retx.harq_pid].state = "awaiting_decode"
                self._inflight[t + self.timing.decode].append(retx)
                continue
            g = ctx.ue.pending_grants.get(t)
            if g is None:
                continue
            tb = ctx.ue.transmit_on_grant(g, now, HarqProcessTable.pid_for(t))
            ctx.rlc.assign(tb)
            ctx.harq.start(tb)
            self._inflight[t + self.timing.decode].append(tb)
        return egress, msgs
