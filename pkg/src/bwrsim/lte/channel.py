"""Abstract uplink PHY: slow-fading MCS process, TBS mapping, HARQ CRC draws."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..kernel import RngStream

N_PRB_MAX = 50  # 10 MHz


class TbsTable:
    """Bytes per PRB by MCS index.  The default is ``6 * mcs``."""

    def __init__(self, bytes_per_prb: Optional[dict[int, int]] = None):
        self._table = dict(bytes_per_prb) if bytes_per_prb else None

    @classmethod
    def from_csv(cls, path: str | Path) -> "TbsTable":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["mcs", "bytes_per_prb"]:
                raise ValueError(f"{path}: header must be 'mcs,bytes_per_prb'")
            table = {int(row["mcs"]): int(row["bytes_per_prb"]) for row in reader}
        ordered = [table[k] for k in sorted(table)]
        if any(b < a for a, b in zip(ordered, ordered[1:])):
            raise ValueError(f"{path}: bytes_per_prb must be non-decreasing in mcs")
        return cls(table)

    def bytes_per_prb(self, mcs: int) -> int:
        if self._table is None:
            return 6 * mcs
        try:
            return self._table[mcs]
        except KeyError:
            raise ValueError(f"MCS {mcs} missing from TBS table") from None

    def tbs_bytes(self, mcs: int, n_prb: int) -> int:
        if not 0 < n_prb <= N_PRB_MAX:
            raise ValueError(f"n_prb={n_prb} outside 1..{N_PRB_MAX}")
        return n_prb * self.bytes_per_prb(mcs)

    def prbs_for(self, mcs: int, nbytes: int) -> int:
        """Smallest PRB count carrying ``nbytes`` (may exceed the band)."""
        per = self.bytes_per_prb(mcs)
        return max(1, -(-nbytes // per))


def tbs_bytes(mcs: int, n_prb: int) -> int:
    return TbsTable().tbs_bytes(mcs, n_prb)


@dataclass
class ChannelState:
    mcs_rng: RngStream
    bler_rng: RngStream
    update_period: int = 10_000
    mcs_mean: float = 22
    mcs_lo: int = 18
    mcs_hi: int = 26
    mcs_sigma: float = 2.0
    bler: float = 0.1
    retx_bler: float = 0.0
    harq: bool = True
    mcs: dict[int, int] = field(default_factory=dict)
    _window: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.bler <= 1.0 and 0.0 <= self.retx_bler <= 1.0):
            raise ValueError("bler and retx_bler must be probabilities")
        if not self.mcs_lo <= self.mcs_mean <= self.mcs_hi:
            raise ValueError("mcs_mean must lie inside [mcs_lo, mcs_hi]")

    def sample_mcs(self, ue_key: int) -> int:
        x = self.mcs_rng.normal(self.mcs_mean, self.mcs_sigma, self.mcs_lo, self.mcs_hi)
        mcs = int(round(x))
        self.mcs[ue_key] = mcs
        return mcs

    def mcs_at(self, ue_key: int, now: int) -> int:
        """MCS in force at ``now``; redrawn on entering a new update window."""
        window = now // self.update_period
        if self._window.get(ue_key) != window:
            self._window[ue_key] = window
            self.sample_mcs(ue_key)
        return self.mcs[ue_key]

    def draw_harq(self, is_retx: bool) -> bool:
        """True when the CRC passes.  Draws on the BLER stream even with HARQ
        off, so other streams stay aligned between runs."""
        p = self.retx_bler if is_retx else self.bler
        failed = self.bler_rng.bernoulli(p)
        if not self.harq:
            return True
        return not failed
