import pytest

from cloudfog.delay import (
    DelayConstants,
    OffGridError,
    SaturationError,
    build_lookup,
    build_lookups,
    delay_report,
    mm1_delay,
    path_queuing,
    propagation_delay,
    subset_sums,
)
from cloudfog.topology import FIBRE, WIRELESS, Link, NodeKind, route

C = DelayConstants()


def test_constants():
    assert C.speed_of_light == 299792
    assert C.packet_size == 12000
    assert C.service_rate(NodeKind.OLT) == pytest.approx(10e9 / 12000)
    assert C.service_rate(NodeKind.AP) == pytest.approx(1e9 / 12000)
    assert C.service_rate(NodeKind.CLOUD_DC) == pytest.approx(40e9 / 12000)
    assert C.service_rate(NodeKind.IOT) is None
    with pytest.raises(ValueError):
        DelayConstants(refractive_index_ratio=0)
    with pytest.raises(ValueError):
        DelayConstants(packet_size=0)


def test_propagation_examples():
    assert propagation_delay([]) == 0.0
    assert propagation_delay([Link(0, 1, 1, 300.0, FIBRE)]) == pytest.approx(300 / (2 / 3 * 299792), rel=1e-12)
    assert propagation_delay([Link(0, 1, 1, 300.0, FIBRE)]) * 1e3 == pytest.approx(1.5010, abs=1e-4)
    assert propagation_delay([Link(0, 1, 1, 0.1, WIRELESS)]) * 1e6 == pytest.approx(0.3336, abs=1e-4)


def test_propagation_to_dc(topo):
    dc = topo.of_kind(NodeKind.CLOUD_DC)[0]
    fibre_km = 0.1 + 10 + 5 + 0 + 300 + 2500 + 0
    expected = 0.1 / 299792 + fibre_km / (2 / 3 * 299792)
    assert propagation_delay(route(topo, 0, dc)) == pytest.approx(expected, rel=1e-12)


def test_mm1_examples():
    mu10 = 10e9 / 12000
    assert mu10 == pytest.approx(833333.333, rel=1e-9)
    assert mm1_delay(0, mu10) == pytest.approx(1.2e-6, rel=1e-12)
    mu1 = 1e9 / 12000
    assert mm1_delay(mu1 / 2, mu1) == pytest.approx(24e-6, rel=1e-12)
    with pytest.raises(SaturationError):
        mm1_delay(mu1, mu1)
    with pytest.raises(ValueError):
        mm1_delay(-1, mu1)


def test_subset_sums():
    assert subset_sums([1, 1]) == [0, 1, 2]
    assert subset_sums([5]) == [0, 5]
    assert subset_sums([1, 2, 4]) == list(range(8))


def test_lookup_examples():
    t = build_lookup([1, 1], 10)
    assert t.traffic == (0, 1, 2)
    service = 10e9 / 12000
    for x, dly in zip(t.traffic, t.delays):
        assert dly == pytest.approx(1 / (service - x * 1e6 / 12000), rel=1e-15)
    assert [round(d * 1e6, 4) for d in t.delays] == [1.2, 1.2001, 1.2002]
    assert build_lookup([5], 10).traffic == (0, 5)
    sat = build_lookup([600, 600], 1)
    assert sat.infeasible == (1200,)
    with pytest.raises(SaturationError):
        sat.delay_at(1200)
    with pytest.raises(OffGridError):
        sat.delay_at(3)
    with pytest.raises(ValueError):
        build_lookup([], 10)
    with pytest.raises(ValueError):
        build_lookup([0], 10)


def test_lookup_strictly_increasing():
    t = build_lookup([1, 2, 3, 7, 9], 1)
    assert all(a < b for a, b in zip(t.delays, t.delays[1:]))
    assert all(a < t.service_rate for a in t.arrivals)


def test_path_queuing(topo):
    assert path_queuing(topo, [], {}) == 0.0
    olt = topo.of_kind(NodeKind.OLT)[0]
    ms = topo.of_kind(NodeKind.METRO_SWITCH)[0]
    mr = topo.of_kind(NodeKind.METRO_ROUTER)[0]
    path = [topo.arc(olt, ms), topo.arc(ms, mr)]
    onu = topo.of_kind(NodeKind.ONU)[0]
    path = [topo.arc(onu, olt)] + path
    assert path_queuing(topo, path, {}) == pytest.approx(3 * 1.2e-6, rel=1e-12)
    ap = topo.of_kind(NodeKind.AP)[0]
    q = path_queuing(topo, [topo.arc(0, ap)], {ap: 100.0})
    assert q == pytest.approx(1 / 75000, rel=1e-12)
    lookups = build_lookups([100.0])
    assert path_queuing(topo, [topo.arc(0, ap)], {ap: 100.0}, C, lookups) == pytest.approx(q, rel=1e-15)


def test_delay_report_totals(topo):
    dc = topo.of_kind(NodeKind.CLOUD_DC)[0]
    pairs = [(0, dc), (5, 5)]
    arrivals = {}
    rep = delay_report(topo, pairs, arrivals, demands=2)
    assert rep.propagation[(5, 5)] == 0.0 and rep.queuing[(5, 5)] == 0.0
    assert rep.total_propagation == pytest.approx(sum(rep.propagation.values()))
    assert rep.total_queuing == pytest.approx(sum(rep.queuing.values()))
    # 8 queued hops towards the DC: AP 1G, six 10G/40G nodes
    expected_q = 12000 / 1e9 + 12000 / 10e9 * 4 + 12000 / 40e9 * 3
    assert rep.queuing[(0, dc)] == pytest.approx(expected_q, rel=1e-12)
    rec = rep.as_record()
    assert rec["avg_queuing_us"] == pytest.approx(expected_q / 2 * 1e6)


def test_constants_from_dict():
    c = DelayConstants.from_dict({"packet_size": 8000, "service_rates": {"AP": 2.0}})
    assert c.packet_size == 8000
    assert c.service_rates[NodeKind.AP] == 2.0
    assert c.service_rates[NodeKind.OLT] == 10.0
