import numpy as np
import pytest

from bwrsim.kernel import RngStream
from bwrsim.lte.channel import ChannelState, TbsTable, tbs_bytes


def _channel(**kw):
    return ChannelState(RngStream(1, "channel.mcs"), RngStream(1, "channel.bler"), **kw)


def test_tbs_default_mapping():
    assert tbs_bytes(22, 50) == 6600
    assert tbs_bytes(18, 50) == 5400
    with pytest.raises(ValueError):
        tbs_bytes(22, 0)
    with pytest.raises(ValueError):
        tbs_bytes(22, 51)


def test_tbs_is_monotone():
    t = TbsTable()
    for mcs in range(18, 27):
        row = [t.tbs_bytes(mcs, n) for n in range(1, 51)]
        assert row == sorted(row)
        if mcs > 18:
            assert t.tbs_bytes(mcs, 10) >= t.tbs_bytes(mcs - 1, 10)


def test_tbs_table_from_csv(tmp_path):
    path = tmp_path / "tbs.csv"
    path.write_text("mcs,bytes_per_prb\n" + "".join(f"{m},{10 * m}\n" for m in range(18, 27)))
    assert TbsTable.from_csv(path).tbs_bytes(20, 3) == 600
    path.write_text("mcs,bytes_per_prb\n18,50\n19,40\n")
    with pytest.raises(ValueError):
        TbsTable.from_csv(path)
    path.write_text("index,size\n18,50\n")
    with pytest.raises(ValueError):
        TbsTable.from_csv(path)


def test_zero_sigma_pins_mcs():
    ch = _channel(mcs_sigma=0.0)
    assert {ch.sample_mcs(0) for _ in range(100)} == {22}


def test_mcs_statistics():
    # oracle: the clamp at +/-2 sigma is symmetric, so the mean stays at 22
    ch = _channel()
    xs = np.array([ch.sample_mcs(0) for _ in range(10_000)])
    assert abs(xs.mean() - 22) <= 0.1
    assert xs.min() >= 18 and xs.max() <= 26


def test_mcs_held_inside_window():
    ch = _channel()
    a = ch.mcs_at(0, 10_000)
    assert all(ch.mcs_at(0, t) == a for t in range(10_000, 20_000, 1000))


def test_harq_draws():
    assert all(_channel(harq=False, bler=1.0).draw_harq(False) for _ in range(100))
    assert all(_channel(bler=1.0).draw_harq(True) for _ in range(100))
    ch = _channel(bler=0.1)
    fails = sum(not ch.draw_harq(False) for _ in range(10_000)) / 10_000
    # binomial sd ~ 0.003
    assert abs(fails - 0.1) <= 0.01


def test_retx_bler_switch():
    ch = _channel(retx_bler=1.0)
    assert not any(ch.draw_harq(True) for _ in range(50))


def test_rejects_bad_probability():
    with pytest.raises(ValueError):
        _channel(bler=1.5)
