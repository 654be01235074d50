"""Upstream packet sources at the UE."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional


@dataclass
class Packet:
    id: int
    size: int
    lcg: int
    t_arrival_ue: int
    ue_id: int = 0
    enb_id: int = 0
    t_egress_enb: Optional[int] = None
    t_arrival_cm: Optional[int] = None
    t_egress_cmts: Optional[int] = None
    harq_affected: bool = False

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError(f"packet {self.id}: size must be positive")
        if self.lcg not in (0, 1, 2, 3):
            raise ValueError(f"packet {self.id}: lcg {self.lcg} not in 0..3")


@dataclass(frozen=True)
class TrafficSpec:
    kind: str = "cbr"
    packet_size: int = 200
    inter_arrival: int = 1000
    on_duration: int = 0
    off_duration: int = 0
    rate_in_on: int = 1
    lcg: int = 1
    phase: int = 0

    def __post_init__(self):
        if self.kind not in ("cbr", "onoff"):
            raise ValueError(f"traffic kind {self.kind!r} must be 'cbr' or 'onoff'")
        if self.packet_size <= 0 or self.inter_arrival <= 0:
            raise ValueError("traffic packet_size and inter_arrival must be > 0")
        if self.kind == "onoff" and (self.on_duration <= 0 or self.off_duration <= 0
                                     or self.rate_in_on <= 0):
            raise ValueError("onoff traffic needs positive on/off durations and rate_in_on")
        if self.lcg not in (0, 1, 2, 3):
            raise ValueError(f"traffic lcg {self.lcg} not in 0..3")
        if self.phase < 0:
            raise ValueError("traffic phase must be >= 0")


class TrafficSource:
    """Deterministic arrival generator for one flow.

    For ``onoff`` traffic each cycle is an off-period followed by an
    on-period; inside the on-period ``rate_in_on`` packets are emitted every
    ``inter_arrival``.
    """

    def __init__(self, spec: TrafficSpec, ue_id: int = 0, enb_id: int = 0, first_id: int = 0):
        self.spec = spec
        self.ue_id = ue_id
        self.enb_id = enb_id
        self._next_id = first_id
        self._slot = 0  # index of the next emission instant
        self._burst_index = 0  # packets already emitted at the current instant

    def _slot_time(self, slot: int) -> int:
        s = self.spec
        if s.kind == "cbr":
            return s.phase + slot * s.inter_arrival
        per_on = -(-s.on_duration // s.inter_arrival)  # emission instants per on-period
        cycle, within = divmod(slot, per_on)
        return (s.phase + cycle * (s.on_duration + s.off_duration) + s.off_duration
                + within * s.inter_arrival)

    def next_arrival(self, now: int = 0) -> tuple[int, Packet]:
        """Next arrival at or after ``now``.  Packets sharing an instant
        (onoff bursts) are returned one per call with equal timestamps."""
        per_instant = self.spec.rate_in_on if self.spec.kind == "onoff" else 1
        while self._slot_time(self._slot) < now:
            self._slot += 1
            self._burst_index = 0
        t = self._slot_time(self._slot)
        pkt = Packet(self._next_id, self.spec.packet_size, self.spec.lcg, t,
                     ue_id=self.ue_id, enb_id=self.enb_id)
        self._next_id += 1
        self._burst_index += 1
        if self._burst_index >= per_instant:
            self._slot += 1
            self._burst_index = 0
        return t, pkt

    def arrivals(self, end: int) -> Iterator[Packet]:
        """All packets with arrival time in ``[now, end)``."""
        while True:
            if self._slot_time(self._slot) >= end:
                return
            _, pkt = self.next_arrival(0)
            yield pkt


def cbr_expected_bytes(spec: TrafficSpec, horizon: int) -> int:
    if spec.phase >= horizon:
        return 0
    return spec.packet_size * ((horizon - 1 - spec.phase) // spec.inter_arrival + 1)
