import pytest

from bwrsim.docsis.cm import (BE_DATA, CONTENTION, POLL, UGS_BWR, CableModem, DocsisGrant,
                              serialization_us)
from bwrsim.docsis.cmts import MapMessage
from bwrsim.kernel import RngStream
from bwrsim.traffic import Packet


def modem(**kw):
    cm = CableModem(100.0, 500, 0, **kw)
    cm.add_flow(1, BE_DATA)
    cm.add_flow(2, UGS_BWR)
    sent = {"reqs": [], "bursts": []}
    cm.send_req = sent["reqs"].append
    cm.send_burst = sent["bursts"].append
    return cm, sent


def test_serialization_rounds_up():
    assert serialization_us(200, 100.0) == 16
    assert serialization_us(201, 100.0) == 17
    assert serialization_us(0, 100.0) == 0
    with pytest.raises(ValueError):
        serialization_us(10, 0)


def test_ingress_arms_req_after_processing():
    cm, _ = modem()
    p = Packet(0, 200, 1, 0)
    cm.on_ingress(1, p, 200, 1000)
    f = cm.flows[1]
    assert p.t_arrival_cm == 1000
    assert f.req_armed and f.req_ready_at == 1500
    assert cm.contention_request(f, 1400) is None
    req = cm.contention_request(f, 1500, collided=False)
    assert req.nbytes == 200 and f.req_outstanding and not f.req_armed


def test_jit_grant_already_covering_suppresses_req():
    cm, _ = modem()
    cm.grants[1].append(DocsisGrant(1, 3000, 400, source="bwr"))
    cm.on_ingress(1, Packet(0, 200, 1, 0), 200, 2000)
    assert not cm.flows[1].req_armed


def test_bwr_flow_never_requests():
    cm, _ = modem()
    cm.on_ingress(2, b"\0" * 80, 80, 0)
    assert not cm.flows[2].req_armed


def test_collision_defers_within_window():
    cm, sent = modem(contention_rng=RngStream(3, "c"))
    f = cm.flows[1]
    cm.on_ingress(1, Packet(0, 200, 1, 0), 200, 0)
    assert cm.contention_request(f, 500, collided=True) is None
    assert f.window_exp == 1 and f.retry_count == 1
    assert 0 <= f.defer < 2
    waits = f.defer
    for _ in range(waits):
        assert cm.contention_request(f, 1000, collided=False) is None
    assert cm.contention_request(f, 2000, collided=False) is not None
    assert f.window_exp == 0 and cm.collisions == 1


def test_transmit_sends_whole_ready_packets():
    cm, sent = modem()
    pkts = [Packet(i, 200, 1, 0) for i in range(3)]
    for p in pkts:
        cm.on_ingress(1, p, 200, 0)
    g = DocsisGrant(1, 600, 500)
    cm.grants[1].append(g)
    burst = cm.transmit_grant(g, 600)
    assert burst.items == pkts[:2] and burst.nbytes == 400
    assert burst.end == 600 + 32
    assert cm.wasted_bytes == 100
    assert cm.flows[1].queued_bytes == 200
    assert sent["bursts"] == [burst]


def test_items_not_ready_stay_queued():
    cm, sent = modem()
    cm.on_ingress(1, Packet(0, 200, 1, 0), 200, 0)
    g = DocsisGrant(1, 400, 200)
    burst = cm.transmit_grant(g, 400)
    assert burst.items == [] and cm.wasted_bytes == 200 and sent["bursts"] == []


def test_req_rearms_once_map_clears_outstanding():
    cm, _ = modem()
    f = cm.flows[1]
    for i in range(3):
        cm.on_ingress(1, Packet(i, 200, 1, 0), 200, 0)
    cm.contention_request(f, 500, collided=False)
    assert f.req_outstanding
    # partial grant: 500 of the 600 requested
    mp = MapMessage(0, 1000, 2000, 4000, [DocsisGrant(1, 2000, 500, source="req")])
    cm.apply_map(mp, 1000)
    assert not f.req_outstanding
    assert cm.covered_bytes(1, 1000) == 500
    assert f.req_armed  # the 100-byte shortfall needs another REQ


def test_apply_map_schedules_grants_polls_and_contention():
    calls = []
    cm = CableModem(schedule=lambda t, tgt, payload, action: calls.append((t, payload)))
    cm.add_flow(1, BE_DATA)
    mp = MapMessage(0, 0, 2000, 4000, [
        DocsisGrant(0, 2000, 0, CONTENTION, "contention"),
        DocsisGrant(1, 2100, 0, POLL, "poll"),
        DocsisGrant(1, 2200, 300, source="bwr"),
    ])
    cm.apply_map(mp, 0)
    assert [t for t, _ in calls] == [2000, 2100, 2200]


def test_ugs_grant_carries_two_reports():
    cm, sent = modem()
    for _ in range(3):
        cm.on_ingress(2, b"\1" * 80, 80, 0)
    burst = cm.transmit_grant(DocsisGrant(2, 100, 160, source="ugs"), 100)
    assert len(burst.items) == 2 and len(cm.flows[2].queue) == 1


def test_unknown_flow_in_map():
    cm, _ = modem()
    with pytest.raises(KeyError):
        cm.apply_map(MapMessage(0, 0, 0, 2000, [DocsisGrant(9, 0, 100)]), 0)


def test_bad_flow_kind_and_size():
    cm, _ = modem()
    with pytest.raises(ValueError):
        cm.add_flow(5, "cbr")
    with pytest.raises(ValueError):
        cm.on_ingress(1, Packet(0, 200, 1, 0), 0, 0)
