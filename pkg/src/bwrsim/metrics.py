"""Per-packet latency records, summaries, CDFs and conservation checks."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .traffic import Packet

SEGMENTS = ("e2e", "docsis_only", "lte_only")
FILTERS = ("all", "harq_affected")
CSV_HEADER = ["id", "mode", "harq_affected", "t_arrival_ue_us", "t_egress_enb_us",
              "t_arrival_cm_us", "t_egress_cmts_us"]


class IncompleteRecord(ValueError):
    pass


@dataclass(frozen=True)
class LatencyRecord:
    id: int
    t_arrival_ue: int
    t_egress_enb: int
    t_arrival_cm: int
    t_egress_cmts: int
    harq_affected: bool = False
    mode: str = ""

    @classmethod
    def from_packet(cls, p: Packet, mode: str = "") -> "LatencyRecord":
        stamps = (p.t_egress_enb, p.t_arrival_cm, p.t_egress_cmts)
        if any(s is None for s in stamps):
            raise IncompleteRecord(f"packet {p.id} has an unset lifecycle timestamp")
        return cls(p.id, p.t_arrival_ue, p.t_egress_enb, p.t_arrival_cm, p.t_egress_cmts,
                   p.harq_affected, mode)

    def monotone(self) -> bool:
        return self.t_arrival_ue <= self.t_egress_enb <= self.t_arrival_cm <= self.t_egress_cmts

    def segment_us(self, segment: str) -> int:
        if segment == "e2e":
            return self.t_egress_cmts - self.t_arrival_ue
        if segment == "docsis_only":
            return self.t_egress_cmts - self.t_arrival_cm
        if segment == "lte_only":
            return self.t_egress_enb - self.t_arrival_ue
        raise ValueError(f"unknown segment {segment!r}")


def _select(records: Iterable[LatencyRecord], filt: str) -> list[LatencyRecord]:
    if filt == "all":
        return list(records)
    if filt == "harq_affected":
        return [r for r in records if r.harq_affected]
    raise ValueError(f"unknown filter {filt!r}")


def summarize(records: Iterable[LatencyRecord], filt: str = "all") -> dict:
    """Min/avg/max/p50/p95/p99 in milliseconds for each segment."""
    chosen = _select(records, filt)
    out: dict = {"count": len(chosen)}
    if not chosen:
        return out
    for seg in SEGMENTS:
        v = np.array([r.segment_us(seg) for r in chosen], dtype=float) / 1000.0
        out[seg] = {
            "min": float(v.min()), "avg": float(v.mean()), "max": float(v.max()),
            "p50": float(np.percentile(v, 50)), "p95": float(np.percentile(v, 95)),
            "p99": float(np.percentile(v, 99)),
        }
    return out


def cdf_points(records: Iterable[LatencyRecord], segment: str = "e2e") -> list[tuple[float, float]]:
    """Empirical CDF as ``(latency_ms, fraction)`` steps, one per distinct value."""
    values = sorted(r.segment_us(segment) for r in records)
    if not values:
        raise ValueError("cdf of an empty record set")
    n = len(values)
    points = []
    for i, v in enumerate(values):
        if i + 1 < n and values[i + 1] == v:
            continue
        points.append((v / 1000.0, (i + 1) / n))
    return points


@dataclass
class ConservationReport:
    ok: bool
    generated_bytes: int
    egressed_bytes: int
    first_bad_id: Optional[int] = None
    reason: str = ""


def conservation_check(packets: list[Packet], egressed_ids: Optional[set[int]] = None) -> ConservationReport:
    """Every generated packet must carry a complete, monotone record and have
    egressed at the CMTS exactly once."""
    generated = sum(p.size for p in packets)
    egressed = 0
    for p in packets:
        if p.t_egress_cmts is None or (egressed_ids is not None and p.id not in egressed_ids):
            return ConservationReport(False, generated, egressed, p.id, "never egressed at the CMTS")
        try:
            rec = LatencyRecord.from_packet(p)
        except IncompleteRecord:
            return ConservationReport(False, generated, egressed, p.id, "incomplete record")
        if not rec.monotone():
            return ConservationReport(False, generated, egressed, p.id, "timestamps out of order")
        egressed += p.size
    return ConservationReport(generated == egressed, generated, egressed)


def records_csv(records: Iterable[LatencyRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([r.id, r.mode, int(r.harq_affected), r.t_arrival_ue, r.t_egress_enb,
                    r.t_arrival_cm, r.t_egress_cmts])
    return buf.getvalue()


def cdf_csv(points: list[tuple[float, float]]) -> str:
    lines = ["latency_ms,fraction"]
    lines += [f"{x:.3f},{f:.6f}" for x, f in points]
    return "\n".join(lines) + "\n"


def paired_gain(before: list[LatencyRecord], after: list[LatencyRecord],
                segment: str = "docsis_only", filt: str = "harq_affected") -> dict:
    """Per-packet ``before - after`` latency, matched by packet id.  The cohort
    is taken from ``before`` (the records carry identical LTE history under
    common random numbers)."""
    a = {r.id: r for r in after}
    gains = [(r.segment_us(segment) - a[r.id].segment_us(segment)) / 1000.0
             for r in _select(before, filt) if r.id in a]
    if not gains:
        return {"count": 0}
    g = np.array(gains)
    return {"count": len(gains), "min": float(g.min()), "avg": float(g.mean()),
            "max": float(g.max())}
