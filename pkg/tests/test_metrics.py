import pytest
from hypothesis import given, strategies as st

from bwrsim.metrics import (CSV_HEADER, IncompleteRecord, LatencyRecord, cdf_csv, cdf_points,
                            conservation_check, paired_gain, records_csv, summarize)
from bwrsim.traffic import Packet


def rec(i, ue, enb, cm, cmts, harq=False):
    return LatencyRecord(i, ue, enb, cm, cmts, harq)


def done(i, ue=0, enb=8000, cm=8000, cmts=13400, size=200):
    p = Packet(i, size, 1, ue)
    p.t_egress_enb, p.t_arrival_cm, p.t_egress_cmts = enb, cm, cmts
    return p


def test_segments_and_summary():
    s = summarize([rec(0, 0, 8000, 8000, 13400)])
    assert s["count"] == 1
    assert s["e2e"]["avg"] == pytest.approx(13.4)
    assert s["docsis_only"]["max"] == pytest.approx(5.4)
    assert s["lte_only"]["p99"] == pytest.approx(8.0)


def test_harq_filter():
    rs = [rec(0, 0, 1, 2, 3), rec(1, 0, 1, 2, 5, harq=True)]
    assert summarize(rs, "harq_affected")["e2e"]["avg"] == pytest.approx(0.005)
    assert summarize(rs[:1], "harq_affected") == {"count": 0}
    with pytest.raises(ValueError):
        summarize(rs, "late")


def test_incomplete_packet_rejected():
    with pytest.raises(IncompleteRecord):
        LatencyRecord.from_packet(Packet(0, 200, 1, 0))


def test_cdf_steps():
    rs = [rec(i, 0, 0, 0, (i + 1) * 1000) for i in range(4)]
    assert cdf_points(rs, "e2e") == [(1.0, 0.25), (2.0, 0.5), (3.0, 0.75), (4.0, 1.0)]
    same = [rec(i, 0, 0, 0, 2000) for i in range(3)]
    assert cdf_points(same) == [(2.0, 1.0)]
    with pytest.raises(ValueError):
        cdf_points([])
    assert cdf_csv([(2.0, 1.0)]) == "latency_ms,fraction\n2.000,1.000000\n"


@given(st.lists(st.integers(0, 50_000), min_size=1, max_size=200))
def test_cdf_monotone(latencies):
    pts = cdf_points([rec(i, 0, 0, 0, v) for i, v in enumerate(latencies)])
    xs, fs = zip(*pts)
    assert list(xs) == sorted(set(xs)) and list(fs) == sorted(fs)
    assert fs[-1] == 1.0


def test_conservation():
    pkts = [done(0), done(1)]
    c = conservation_check(pkts, {0, 1})
    assert c.ok and c.generated_bytes == c.egressed_bytes == 400
    lost = Packet(2, 200, 1, 0)
    c = conservation_check(pkts + [lost], {0, 1})
    assert not c.ok and c.first_bad_id == 2
    c = conservation_check([done(3, ue=9000, enb=8000)])
    assert not c.ok and c.reason == "timestamps out of order"
    assert conservation_check([]).ok


def test_records_csv_header():
    text = records_csv([LatencyRecord.from_packet(done(0), "bwr_flush")])
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[1] == "0,bwr_flush,0,0,8000,8000,13400"


def test_paired_gain_matches_ids():
    before = [rec(0, 0, 0, 0, 6000, True), rec(1, 0, 0, 0, 5000, False)]
    after = [rec(0, 0, 0, 0, 2000, True), rec(1, 0, 0, 0, 1000, False)]
    g = paired_gain(before, after)
    assert g["count"] == 1 and g["avg"] == pytest.approx(4.0)
    assert paired_gain([], after) == {"count": 0}
