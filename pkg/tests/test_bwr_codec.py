import json
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from bwrsim.bwr import BWR_LEN, BwrCodecError, BwrMessage, decode, encode, overhead_kbps

VECTORS = json.loads((Path(__file__).parent / "data" / "bwr_vectors.json").read_text())


def _msg(v):
    return BwrMessage(v["enb_id"], v["grant_subframe"], v["expected_arrival"], v["total_bytes"],
                      tuple(v["per_lcg_bytes"]), v["flush_included"])


@pytest.mark.parametrize("vec", VECTORS, ids=[v["name"] for v in VECTORS])
def test_golden_vectors(vec):
    assert encode(_msg(vec)).hex() == vec["hex"]
    assert decode(bytes.fromhex(vec["hex"])) == _msg(vec)


def test_length_is_fixed():
    assert len(encode(_msg(VECTORS[0]))) == BWR_LEN == 80


def test_rejects_mismatched_lcg_sum():
    with pytest.raises(BwrCodecError):
        encode(BwrMessage(0, 1, 7000, 100, (10, 10, 10, 10)))
    raw = bytearray(bytes.fromhex(VECTORS[0]["hex"]))
    raw[21] ^= 1  # low byte of total_bytes
    with pytest.raises(BwrCodecError):
        decode(bytes(raw))


@pytest.mark.parametrize("mutate", [
    lambda b: b[:-1],
    lambda b: b + b"\0",
    lambda b: b[:1] + b"\x02" + b[2:],  # unknown flag bit
    lambda b: b[:79] + b"\x01",  # reserved byte set
])
def test_rejects_malformed(mutate):
    with pytest.raises(BwrCodecError):
        decode(mutate(bytes.fromhex(VECTORS[0]["hex"])))


def test_rejects_out_of_range_fields():
    with pytest.raises(BwrCodecError):
        encode(BwrMessage(-1, 0, 0, 0, (0, 0, 0, 0)))
    with pytest.raises(BwrCodecError):
        encode(BwrMessage(0, 2**31, 0, 0, (0, 0, 0, 0)))


u32 = st.integers(0, 2**30 - 1)
messages = st.builds(
    lambda enb, sf, arr, lcg, fl: BwrMessage(enb, sf, arr, sum(lcg), tuple(lcg), fl),
    st.integers(0, 2**32 - 1), st.integers(-(2**31), 2**31 - 1), st.integers(0, 2**64 - 1),
    st.lists(u32, min_size=4, max_size=4), st.booleans())


@settings(max_examples=2000, deadline=None)
@given(messages)
def test_round_trip_identity(msg):
    wire = encode(msg)
    assert len(wire) == BWR_LEN
    assert decode(wire) == msg


def test_overhead_arithmetic():
    assert overhead_kbps(80, 1000) == 640
    assert overhead_kbps(80, 2000) == 320
    with pytest.raises(ValueError):
        overhead_kbps(80, 0)
