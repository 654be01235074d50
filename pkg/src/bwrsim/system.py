"""Assemble UEs, eNBs, the CM and the CMTS on one kernel and run a scenario."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, TextIO

from . import bwr
from .docsis.cm import BE_DATA, UGS_BWR, CableModem
from .docsis.cmts import Cmts, MapMessage, PeriodicFlow
from .kernel import RngStreams, Simulator, ms, subframe_start
from .lte.channel import ChannelState, TbsTable
from .lte.enb import Enb, LteTiming
from .lte.ue import Ue
from .metrics import (FILTERS, SEGMENTS, ConservationReport, LatencyRecord, cdf_csv, cdf_points,
                      conservation_check, records_csv, summarize)
from .scenario import Scenario, TrafficConfig
from .traffic import Packet, TrafficSource

# same-instant ordering: arrivals, SR opportunities, subframe work, CM
# transmissions, CMTS processing, MAP build/emission
PRIO_TRAFFIC = 0
PRIO_SR = 1
PRIO_SUBFRAME = 2
PRIO_CM = 3
PRIO_CMTS = 4
PRIO_MAP = 5

DATA_FLOW = 1
BWR_FLOW = 2


@dataclass
class RunResult:
    scenario: Scenario
    packets: list[Packet]
    records: list[LatencyRecord]
    conservation: ConservationReport
    data_reqs: int
    bwr_sent: int
    bwr_dropped: int
    bwr_granted_bytes: int
    wasted_bytes: int
    harq_failures: int
    events: int
    map_trace: list[str] = field(default_factory=list)
    enbs: list[Enb] = field(default_factory=list)


class System:
    def __init__(self, scn: Scenario, trace: Optional[TextIO] = None, trace_maps: bool = False):
        scn.validate()
        self.scn = scn
        self.sim = Simulator(trace)
        self.streams = RngStreams(scn.seed)
        self.end = ms(scn.duration_ms)
        self.traffic_end = max(0, self.end - ms(scn.drain_ms))
        self.packets: list[Packet] = []
        self.egressed: set[int] = set()
        self._bwr_outbox: list[bwr.BwrMessage] = []
        self.bwr_sent = 0

        d, lte = scn.docsis, scn.lte
        self.bwr_period = ms(lte.bwr_period_ms)
        self.cm = CableModem(d.upstream_mbps, ms(d.cm_proc_ms), d.cm_overhead_us,
                             d.contention, self.streams["docsis.contention"],
                             schedule=lambda t, tgt, pl, act: self.sim.schedule(
                                 t, tgt, pl, act, PRIO_CM))
        self.cm.add_flow(DATA_FLOW, BE_DATA)
        self.cmts = Cmts(DATA_FLOW, ms(d.map_interval_ms), ms(d.cmts_proc_ms), d.upstream_mbps,
                         cm_lead_us=ms(d.cm_proc_ms) + d.cm_overhead_us,
                         bwr_lead_us=ms(d.bwr_lead_ms), map_offset=ms(d.map_offset_ms))
        if trace_maps:
            self.cmts.map_trace = []
        if scn.bwr_mode is not None:
            self.cm.add_flow(BWR_FLOW, UGS_BWR)
            self.cmts.add_periodic_flow(PeriodicFlow(BWR_FLOW, ms(d.ugs_period_ms),
                                                     d.ugs_grant_bytes,
                                                     polled=d.bwr_transport == "rtps"))
        self.cm.send_req = lambda req: self.cmts.on_req(req, self.sim.now())
        self.cm.send_burst = self._on_burst_sent

        tbs = TbsTable.from_csv(lte.tbs_table) if lte.tbs_table else TbsTable()
        timing = LteTiming(lte.tx_offset_ms, lte.decode_ms, ms(lte.turnaround_ms),
                           lte.bandwidth_prb)
        spec = scn.traffic.spec()
        ch = scn.channel
        self.enbs: list[Enb] = []
        self.sources: list[tuple[Ue, TrafficSource]] = []
        for e in range(scn.n_enb):
            channel = ChannelState(self.streams[f"channel.mcs.{e}"],
                                   self.streams[f"channel.bler.{e}"],
                                   update_period=ms(ch.update_ms), mcs_mean=ch.mcs_mean,
                                   mcs_lo=ch.mcs_lo, mcs_hi=ch.mcs_hi, mcs_sigma=ch.mcs_sigma,
                                   bler=scn.bler, retx_bler=ch.retx_bler, harq=scn.harq)
            ues = []
            for u in range(scn.n_ue):
                uid = e * scn.n_ue + u
                ue = Ue(uid, e, ms(lte.sr_period_ms), ms(lte.sr_offset_ms),
                        ms(lte.bsr_period_ms), ms(lte.ue_proc_ms))
                ues.append(ue)
                self.sources.append((ue, TrafficSource(spec, uid, e, first_id=uid * 10_000_000)))
            self.enbs.append(Enb(e, ues, channel, tbs, timing, scn.bwr_mode))
        self._enb_of = {ue.ue_id: self.enbs[ue.enb_id] for ue, _ in self.sources}

    # -- event handlers --------------------------------------------------
    def _schedule_arrival(self, ue: Ue, src: TrafficSource) -> None:
        if self.traffic_end <= 0:
            return
        t, pkt = src.next_arrival(self.sim.now())
        if t >= self.traffic_end:
            return

        def arrive():
            self.packets.append(pkt)
            ue.handle_arrival(pkt)
            self._schedule_arrival(ue, src)

        self.sim.schedule(t, f"ue{ue.ue_id}", f"arrival pkt={pkt.id}", arrive, PRIO_TRAFFIC)

    def _schedule_sr(self, ue: Ue, t: int) -> None:
        if t >= self.end:
            return

        def opportunity():
            if ue.handle_sr_opportunity(t):
                self._enb_of[ue.ue_id].on_sr(ue.ue_id, t)
            self._schedule_sr(ue, t + ue.sr_period)

        self.sim.schedule(t, f"ue{ue.ue_id}", "sr_opportunity", opportunity, PRIO_SR)

    def _schedule_subframe(self, sf: int) -> None:
        now = subframe_start(sf)
        if now >= self.end:
            return

        def tick():
            for enb in self.enbs:
                egress, msgs = enb.subframe(sf)
                for p in egress:
                    self.cm.on_ingress(DATA_FLOW, p, p.size, now)
                self._bwr_outbox.extend(m for m in msgs if m.total_bytes > 0)
            if self._bwr_outbox and now % self.bwr_period == 0:
                for m in self._bwr_outbox:
                    self.cm.on_ingress(BWR_FLOW, bwr.encode(m), bwr.BWR_LEN, now)
                    self.bwr_sent += 1
                self._bwr_outbox.clear()
            self._schedule_subframe(sf + 1)

        self.sim.schedule(now, "enb", f"subframe {sf}", tick, PRIO_SUBFRAME)

    def _schedule_map(self, k: int) -> None:
        build_at = max(self.cmts.build_deadline(k), 0)
        if build_at >= self.end:
            return

        def build():
            mp = self.cmts.build_map(k)
            self.sim.schedule(mp.emitted_at, "cmts", f"map_emit {k}",
                              lambda: self._deliver_map(mp), PRIO_MAP)
            self._schedule_map(k + 1)

        self.sim.schedule(build_at, "cmts", f"map_build {k}", build, PRIO_MAP)

    def _deliver_map(self, mp: MapMessage) -> None:
        self.cm.apply_map(mp, self.sim.now())

    def _on_burst_sent(self, burst) -> None:
        arrival = burst.end
        done = arrival + self.cmts.proc_us

        def receive():
            for p in self.cmts.on_burst(burst, arrival):
                self.egressed.add(p.id)

        self.sim.schedule(done, "cmts", f"burst flow={burst.flow_id} bytes={burst.nbytes}",
                          receive, PRIO_CMTS)

    def inject_at_cm(self, pkt: Packet, t: int) -> None:
        """Hand ``pkt`` straight to the CM at ``t``, bypassing the LTE leg."""

        def ingress():
            pkt.t_egress_enb = t
            self.packets.append(pkt)
            self.cm.on_ingress(DATA_FLOW, pkt, pkt.size, t)

        self.sim.schedule(t, "cm", f"inject pkt={pkt.id}", ingress, PRIO_TRAFFIC)

    # -- driver ----------------------------------------------------------
    def run(self) -> RunResult:
        for ue, src in self.sources:
            self._schedule_arrival(ue, src)
            self._schedule_sr(ue, ue.next_sr_opportunity(0))
        self._schedule_subframe(0)
        first_k = 0
        while self.cmts.emit_time(first_k) < 0:
            first_k += 1
        self._schedule_map(first_k)
        self.sim.run_until(self.end)

        records = [LatencyRecord.from_packet(p, self.scn.mode) for p in self.packets
                   if p.t_egress_cmts is not None]
        return RunResult(
            scenario=self.scn,
            packets=self.packets,
            records=records,
            conservation=conservation_check(self.packets, self.egressed),
            data_reqs=self.cm.flows[DATA_FLOW].reqs_sent,
            bwr_sent=self.bwr_sent,
            bwr_dropped=self.cmts.bwr_dropped,
            bwr_granted_bytes=self.cmts.bwr_granted_bytes,
            wasted_bytes=self.cm.wasted_bytes,
            harq_failures=sum(len(e.failures) for e in self.enbs),
            events=self.sim.executed,
            map_trace=self.cmts.map_trace or [],
            enbs=self.enbs,
        )


def run(scn: Scenario, trace: Optional[TextIO] = None, trace_maps: bool = False) -> RunResult:
    return System(scn, trace, trace_maps).run()


def docsis_probe(scn: Scenario, arrival_us: int, size: int = 200) -> LatencyRecord:
    """One packet through an otherwise idle CM/CMTS pair; return its record."""
    probe = copy.deepcopy(scn)
    probe.mode = "baseline"
    probe.drain_ms = 0.0
    probe.duration_ms = (arrival_us + 20_000) / 1000
    # an off-period longer than the run keeps the UE silent
    probe.traffic = TrafficConfig(kind="onoff", on_duration_ms=1.0,
                                  off_duration_ms=probe.duration_ms + 1)
    system = System(probe)
    system.inject_at_cm(Packet(0, size, 1, arrival_us), arrival_us)
    return system.run().records[0]


def round_floats(obj):
    if isinstance(obj, float):
        return round(obj, 6)
    if isinstance(obj, dict):
        return {k: round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v) for v in obj]
    return obj


def summary_document(result: RunResult) -> dict:
    mode = result.scenario.mode
    c = result.conservation
    return round_floats({
        "scenario": result.scenario.to_dict(),
        "summary": {mode: {f: summarize(result.records, f) for f in FILTERS}},
        "conservation": {"ok": c.ok, "generated_bytes": c.generated_bytes,
                         "egressed_bytes": c.egressed_bytes, "first_bad_id": c.first_bad_id,
                         "reason": c.reason},
        "counters": {"packets": len(result.packets), "data_reqs": result.data_reqs,
                     "bwr_sent": result.bwr_sent, "bwr_dropped": result.bwr_dropped,
                     "bwr_granted_bytes": result.bwr_granted_bytes,
                     "wasted_grant_bytes": result.wasted_bytes,
                     "harq_failures": result.harq_failures, "events": result.events},
    })


def write_outputs(result: RunResult, out_dir: str | Path) -> list[Path]:
    """Write the per-packet CSV, summary JSON and one CDF CSV per segment."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mode = result.scenario.mode
    written = [out / "packets.csv", out / "summary.json"]
    written[0].write_text(records_csv(result.records))
    written[1].write_text(json.dumps(summary_document(result), indent=2, sort_keys=True) + "\n")
    if result.records:
        for seg in SEGMENTS:
            path = out / f"cdf_{mode}_{seg}.csv"
            path.write_text(cdf_csv(cdf_points(result.records, seg)))
            written.append(path)
    if result.map_trace:
        path = out / "maps.txt"
        path.write_text("\n".join(result.map_trace) + "\n")
        written.append(path)
    return written
