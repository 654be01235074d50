"""Bandwidth Report message and its fixed 80-byte wire format.

Layout, big-endian::

    offset  size  field
    0       1     version
    1       1     flags (bit 0: flush_included)
    2       4     enb_id             uint32
    6       4     grant_subframe     int32
    10      8     expected_arrival   uint64, microseconds
    18      4     total_bytes        uint32
    22      16    per_lcg_bytes      4 x uint32
    38      42    reserved, zero
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

BWR_LEN = 80
BWR_VERSION = 1
FLAG_FLUSH = 0x01

_FMT = struct.Struct(">BBIiQI4I")
_PAD = BWR_LEN - _FMT.size


class BwrCodecError(ValueError):
    pass


@dataclass(frozen=True)
class BwrMessage:
    enb_id: int
    grant_subframe: int
    expected_arrival: int
    total_bytes: int
    per_lcg_bytes: tuple[int, int, int, int]
    flush_included: bool = False
    version: int = BWR_VERSION

    def check(self) -> None:
        if len(self.per_lcg_bytes) != 4:
            raise BwrCodecError("per_lcg_bytes must have 4 entries")
        if sum(self.per_lcg_bytes) != self.total_bytes:
            raise BwrCodecError(
                f"total_bytes {self.total_bytes} != sum(per_lcg_bytes) {sum(self.per_lcg_bytes)}")


def _check_width(name: str, value: int, lo: int, hi: int) -> None:
    if not lo <= value <= hi:
        raise BwrCodecError(f"{name}={value} does not fit its field")


def encode(msg: BwrMessage) -> bytes:
    msg.check()
    _check_width("version", msg.version, 0, 0xFF)
    _check_width("enb_id", msg.enb_id, 0, 0xFFFFFFFF)
    _check_width("grant_subframe", msg.grant_subframe, -(2**31), 2**31 - 1)
    _check_width("expected_arrival", msg.expected_arrival, 0, 2**64 - 1)
    _check_width("total_bytes", msg.total_bytes, 0, 0xFFFFFFFF)
    for i, b in enumerate(msg.per_lcg_bytes):
        _check_width(f"per_lcg_bytes[{i}]", b, 0, 0xFFFFFFFF)
    flags = FLAG_FLUSH if msg.flush_included else 0
    head = _FMT.pack(msg.version, flags, msg.enb_id, msg.grant_subframe,
                     msg.expected_arrival, msg.total_bytes, *msg.per_lcg_bytes)
    return head + bytes(_PAD)


def decode(buf: bytes) -> BwrMessage:
    if len(buf) != BWR_LEN:
        raise BwrCodecError(f"BWR must be {BWR_LEN} bytes, got {len(buf)}")
    version, flags, enb_id, sf, arrival, total, *lcg = _FMT.unpack_from(buf)
    if flags & ~FLAG_FLUSH:
        raise BwrCodecError(f"unknown flag bits 0x{flags:02x}")
    if any(buf[_FMT.size:]):
        raise BwrCodecError("reserved bytes must be zero")
    msg = BwrMessage(enb_id, sf, arrival, total, tuple(lcg), bool(flags & FLAG_FLUSH), version)
    msg.check()
    return msg


def overhead_kbps(msg_bytes: int, period_us: int) -> float:
    """Upstream rate consumed by one ``msg_bytes`` report every ``period_us``."""
    if period_us <= 0:
        raise ValueError("period must be positive")
    # bits per microsecond equals Mbps; x1000 for kbps
    return msg_bytes * 8 * 1000 / period_us
