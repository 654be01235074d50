from hypothesis import given, settings, strategies as st

from bwrsim import bwr
from bwrsim.bwr import BwrMessage
from bwrsim.docsis.cm import CONTENTION, POLL, Burst, DocsisGrant, Req
from bwrsim.docsis.cmts import Cmts, PeriodicFlow, Timeline
from bwrsim.traffic import Packet


def report(expected, nbytes=400, flush=False):
    return BwrMessage(0, expected // 1000 - 6, expected, nbytes, (0, nbytes, 0, 0), flush)


def unicast(mp):
    return [g for g in mp.allocations if g.kind != CONTENTION]


def test_calendar():
    c = Cmts(1)
    assert c.emit_time(3) == 6000
    assert c.build_deadline(3) == 5500
    assert c.coverage(3) == (8000, 10000)


def test_map_for_request_respects_build_deadline():
    c = Cmts(1)
    assert c.map_for_request(1400) == 1 and c.coverage(1)[0] == 4000
    assert c.map_for_request(1600) == 2 and c.coverage(2)[0] == 6000


def test_req_granted_at_window_start():
    c = Cmts(1)
    c.on_req(Req(1, 200, 1400), 1400)
    mp = c.build_map(1)
    (g,) = unicast(mp)
    assert (g.start, g.size, g.source) == (4000, 200, "req")
    assert c.req_intents == []


def test_reqs_for_one_flow_coalesce():
    c = Cmts(1)
    c.on_req(Req(1, 200, 0), 0)
    c.on_req(Req(1, 300, 100), 100)
    assert len(c.req_intents) == 1 and c.req_intents[0].bytes == 500


def test_bwr_lead_is_a_hard_cutoff():
    c = Cmts(1, cm_lead_us=0)
    assert c.on_bwr(report(10_000), 6000)
    assert not c.on_bwr(report(10_000), 7000)
    assert (c.bwr_accepted, c.bwr_dropped) == (1, 1)


def test_bwr_grant_placed_after_cm_processing():
    c = Cmts(1, cm_lead_us=0)
    c.on_bwr(report(8000), 4000)
    (g,) = unicast(c.build_map(3))
    assert g.start == 8000 and g.source == "bwr"
    c = Cmts(1, cm_lead_us=300)
    c.on_bwr(report(8000), 4000)
    (g,) = unicast(c.build_map(3))
    assert g.start == 8300


def test_flush_report_is_one_grant():
    c = Cmts(1, cm_lead_us=0)
    c.on_bwr(report(8000, 4800, flush=True), 3000)
    (g,) = unicast(c.build_map(3))
    assert g.size == 4800 and c.bwr_granted_bytes == 4800


def test_intent_beyond_window_waits_for_next_map():
    c = Cmts(1, cm_lead_us=0)
    c.on_bwr(report(9000, 2500), 4000)
    # 2500 B take 200 us, so one starting at 9900 would overrun 10000
    c.bwr_intents[0].not_before = 9900
    assert unicast(c.build_map(3)) == []
    (g,) = unicast(c.build_map(4))
    assert g.start == 10_000


def test_empty_map_still_has_contention_region():
    c = Cmts(1)
    mp = c.build_map(0)
    assert [g.kind for g in mp.allocations] == [CONTENTION]


def test_ugs_and_rtps_slots():
    c = Cmts(1)
    c.add_periodic_flow(PeriodicFlow(2, 2000, 160))
    (g,) = unicast(c.build_map(0))
    assert (g.flow_id, g.start, g.size, g.source) == (2, 2000, 160, "ugs")
    c = Cmts(1)
    c.add_periodic_flow(PeriodicFlow(2, 1000, 160, polled=True))
    polls = unicast(c.build_map(0))
    assert [(g.kind, g.start) for g in polls] == [(POLL, 2000), (POLL, 3000)]


def test_burst_egress_after_processing():
    c = Cmts(1)
    p = Packet(0, 200, 1, 0)
    burst = Burst(1, DocsisGrant(1, 4000, 200), [p], 200, 4000, 4016)
    assert c.on_burst(burst, 4016) == [p]
    assert p.t_egress_cmts == 4516


def test_bwr_inside_burst_is_decoded():
    c = Cmts(1, cm_lead_us=0)
    raw = bwr.encode(report(10_000))
    burst = Burst(2, DocsisGrant(2, 2000, 160), [raw], 80, 2000, 2007)
    assert c.on_burst(burst, 2007) == []
    assert c.bwr_accepted == 1 and c.bwr_intents[0].not_before == 10_000


def test_map_trace_line():
    c = Cmts(1)
    c.map_trace = []
    c.on_req(Req(1, 200, 0), 0)
    c.build_map(1)
    assert c.map_trace == ["2000,4000,grants=[(0,4000,0,contention_region),(1,4000,200,unicast)]"]


def test_timeline_places_around_busy_spans():
    tl = Timeline(0, 100)
    assert tl.place(0, 30) == 0
    assert tl.place(10, 30) == 30
    assert tl.free_after(0) == 40
    assert tl.place(0, 50) is None


@settings(max_examples=200)
@given(st.lists(st.tuples(st.integers(4000, 20_000), st.integers(1, 6000)), max_size=12))
def test_granted_never_exceeds_announced(reports):
    c = Cmts(1)
    for e, n in reports:
        c.on_bwr(report(e, n), 0)
    for k in range(12):
        c.build_map(k)
    assert c.bwr_granted_bytes <= c.bwr_announced_bytes
    for mp in c.maps:
        spans = sorted((g.start, g.start + (g.size * 8 + 99) // 100) for g in unicast(mp))
        for (a0, a1), (b0, _) in zip(spans, spans[1:]):
            assert a1 <= b0
        assert all(mp.cover_start <= s < mp.cover_end for s, _ in spans)
