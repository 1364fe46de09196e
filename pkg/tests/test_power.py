import math
from dataclasses import replace

import pytest

from cloudfog.catalog import default_catalog
from cloudfog.power import (
    CATEGORIES,
    UNSCALED_CATEGORIES,
    PowerBreakdown,
    PowerModelError,
    capacity_violations,
    ceil_count,
    derive_flows,
    derive_usage,
    lan_power,
    network_power,
    processing_power,
    total_power,
)
from cloudfog.topology import NodeKind, build_reference


def _state(topo, catalog, traffic, placement, policy="minimal"):
    flows = derive_flows(topo, traffic, placement)
    return flows, derive_usage(topo, flows, catalog, policy)


def _ids(topo):
    return {k: topo.of_kind(k) for k in NodeKind}


def test_empty_is_zero(topo, catalog):
    flows, usage = _state(topo, catalog, {}, {})
    assert total_power(topo, flows, usage, catalog).total == 0.0


def test_local_task(topo, catalog):
    flows, usage = _state(topo, catalog, {0: 1.0}, {(0, 0): 1000.0})
    assert network_power(topo, flows, usage, catalog).total == 0.0
    p = total_power(topo, flows, usage, catalog)
    assert p.proc_iot == pytest.approx(3460e-6 * 1000 + 0.5, rel=1e-12)
    assert p.total == pytest.approx(3.96, rel=1e-12)


def test_task_to_own_onu(topo, catalog):
    onu = _ids(topo)[NodeKind.ONU][0]
    flows, usage = _state(topo, catalog, {0: 1.0}, {(0, onu): 1000.0})
    p = network_power(topo, flows, usage, catalog)
    eps_iot = (0.56 - 0.34) / 0.1
    assert eps_iot == pytest.approx(2.2)
    assert p.iot_transceiver == pytest.approx(eps_iot * 0.001 + 0.34, rel=1e-12)
    assert p.ap == 0.0
    # ONU: (15 - 9)/0.3 W per Gb/s, full idle
    assert p.access_onu == pytest.approx((15 - 9) / 0.3 * 0.001 + 9, rel=1e-12)
    assert p.access_olt == 0.0


def test_dc_processing(topo, catalog):
    dc = _ids(topo)[NodeKind.CLOUD_DC][0]
    _, usage = _state(topo, catalog, {0: 1.0}, {(0, dc): 1000.0})
    p = processing_power(topo, usage, catalog)
    assert p.proc_dc == pytest.approx(1.12 * ((130 - 78) / 108000 * 1000 + 78), rel=1e-12)
    assert p.proc_dc == pytest.approx(87.9, abs=0.05)


def test_dc_lan(topo, catalog):
    dc = _ids(topo)[NodeKind.CLOUD_DC][0]
    flows, _ = _state(topo, catalog, {0: 10.0}, {(0, dc): 10000.0})
    lan = lan_power(topo, flows, catalog)
    slope = (30 - 27) / 40 + (470 - 423) / 600
    assert lan.lan_dc == pytest.approx(1.12 * (slope * 0.01 + 0.03 * (27 + 423)), rel=1e-12)
    assert lan.lan_dc == pytest.approx(15.12, abs=0.01)


def test_inactive_dc_has_no_lan(topo, catalog):
    flows, _ = _state(topo, catalog, {0: 1.0}, {(0, 0): 1000.0})
    assert lan_power(topo, flows, catalog).lan_dc == 0.0


def test_active_site_without_traffic_is_an_error(topo, catalog):
    ms = _ids(topo)[NodeKind.METRO_SWITCH][0]
    flows, _ = _state(topo, catalog, {0: 1.0}, {(0, ms): 1000.0})
    broken = replace(flows, lan_inflow={})
    with pytest.raises(PowerModelError):
        lan_power(topo, broken, catalog)


def test_processing_on_non_processing_node(topo, catalog):
    ap = _ids(topo)[NodeKind.AP][0]
    flows, usage = _state(topo, catalog, {0: 1.0}, {(0, 0): 1000.0})
    with pytest.raises(PowerModelError):
        processing_power(topo, replace(usage, mips={ap: 10.0}), catalog)


def test_dc_path_network_power(topo, catalog):
    """Every category of a 1 Mbps flow to the DC, computed by hand from the device profiles."""
    ids = _ids(topo)
    dc = ids[NodeKind.CLOUD_DC][0]
    flows, usage = _state(topo, catalog, {0: 1.0}, {(0, dc): 1000.0})
    p = network_power(topo, flows, usage, catalog)
    g = 0.001  # Gb/s
    d = 0.03
    assert p.access_olt == pytest.approx(1.5 * ((1940 - 60) / 8600 * g + d * 60), rel=1e-12)
    assert p.metro_switch == pytest.approx(1.4 * ((470 - 423) / 600 * g + d * 423), rel=1e-12)
    assert p.metro_router == pytest.approx(1.4 * 2 * ((30 - 27) / 40 * g + d * 27), rel=1e-12)
    # core node 1 carries the single core hop: one aggregation port, one wavelength, one fibre
    eps_r = (638 - 574.2) / 40
    assert p.core_router_ports == pytest.approx(1.5 * (eps_r * g + d * 574.2 * 2), rel=1e-12)
    assert p.core_transponders == pytest.approx(1.5 * ((129 - 116) / 40 * g + d * 116), rel=1e-12)
    # core node 2 only receives on the core hop, so it carries no core traffic of its own
    assert p.core_optical_switches == pytest.approx(1.5 * ((85 - 76.5) / 40 * g + d * 76.5), rel=1e-12)
    assert p.core_edfas == pytest.approx(1.5 * 32 * ((8 - 7.2) / 40 * g + d * 7.2), rel=1e-12)
    assert p.core_regenerators == 0.0


def test_baseline_server_steps(topo, catalog):
    dc = _ids(topo)[NodeKind.CLOUD_DC][0]
    iots = _ids(topo)[NodeKind.IOT]
    for mips, servers in ((5000, 1), (6000, 2)):
        placement = {(s, dc): float(mips) for s in iots}
        _, usage = _state(topo, catalog, {s: mips / 1000 for s in iots}, placement)
        assert usage.servers[dc] == servers == math.ceil(20 * mips / 108000)


def test_baseline_flat_until_second_server(topo, catalog):
    dc = _ids(topo)[NodeKind.CLOUD_DC][0]
    idle = []
    for mips in range(1000, 11000, 1000):
        flows, usage = _state(topo, catalog, {0: mips / 1000}, {(0, dc): float(mips)})
        p = total_power(topo, flows, usage, catalog)
        idle.append(p.proc_dc - 1.12 * catalog.proc("dc").energy_per_mips * mips)
        assert usage.servers[dc] == 1
    assert max(idle) - min(idle) < 1e-9


def test_server_policy_all(topo, catalog):
    olt = _ids(topo)[NodeKind.OLT][0]
    _, usage = _state(topo, catalog, {0: 1.0}, {(0, olt): 1000.0}, "all")
    assert usage.servers[olt] == 2
    _, usage = _state(topo, catalog, {0: 1.0}, {(0, olt): 1000.0}, "minimal")
    assert usage.servers[olt] == 1


def test_capacity_violations(topo, catalog):
    flows, usage = _state(topo, catalog, {0: 2.0}, {(0, 0): 2000.0})
    assert any("0" in v for v in capacity_violations(topo, flows, usage, catalog))
    onu = _ids(topo)[NodeKind.ONU][0]
    flows, usage = _state(topo, catalog, {0: 200.0}, {(0, onu): 2000.0})
    assert capacity_violations(topo, flows, usage, catalog)


def test_flow_invariants(topo, catalog):
    ms = _ids(topo)[NodeKind.METRO_SWITCH][0]
    flows, _ = _state(topo, catalog, {0: 3.0, 5: 2.0}, {(0, ms): 3000.0, (5, ms): 2000.0})
    assert flows.lan_inflow[ms] == pytest.approx(5.0)
    assert flows.lan_inflow[ms] <= flows.node_traffic[ms] + 1e-12
    assert ms in flows.proc_active
    assert all(m in flows.node_active for m, v in flows.node_traffic.items() if v > 0)


def test_breakdown_record_and_sum():
    b = PowerBreakdown(**{c: float(i) for i, c in enumerate(CATEGORIES)})
    rec = b.as_record()
    assert rec["total_w"] == pytest.approx(sum(range(len(CATEGORIES))))
    assert rec["total_w"] == pytest.approx(rec["net_pc_w"] + rec["pr_pc_w"])
    assert list(rec)[: len(CATEGORIES)] == [f"{c}_w" for c in CATEGORIES]
    assert (b + b).total == pytest.approx(2 * b.total)


def test_pue_scaling_exact(topo):
    base = default_catalog()
    scaled = base.with_pue(base.pue.scaled(2.0))
    ids = _ids(topo)
    dc = ids[NodeKind.CLOUD_DC][0]
    placement = {(0, dc): 1000.0, (5, ids[NodeKind.ONU][1]): 1000.0, (10, 10): 1000.0, (15, ids[NodeKind.OLT][0]): 500.0}
    traffic = {0: 1.0, 5: 1.0, 10: 1.0, 15: 0.5}
    a = total_power(topo, *_state(topo, base, traffic, placement), base)
    b = total_power(topo, *_state(topo, scaled, traffic, placement), scaled)
    for c in CATEGORIES:
        if c in UNSCALED_CATEGORIES:
            assert getattr(b, c) == pytest.approx(getattr(a, c), rel=1e-12), c
        elif c == "access_onu":
            # CPE PUE taken from the CPE entry
            assert getattr(b, c) == pytest.approx(2 * getattr(a, c), rel=1e-12)
        else:
            assert getattr(b, c) == pytest.approx(2 * getattr(a, c), rel=1e-12), c


def test_ceil_count():
    assert ceil_count(0) == 0
    assert ceil_count(-1) == 0
    assert ceil_count(1.0) == 1
    assert ceil_count(1.0 + 1e-12) == 1
    assert ceil_count(1.01) == 2
