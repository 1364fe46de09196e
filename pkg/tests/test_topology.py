from dataclasses import replace

import pytest

from cloudfog.topology import (
    FIBRE,
    LAYER_RANK,
    WIRELESS,
    Layer,
    Link,
    NodeKind,
    RouteError,
    Topology,
    TopologyError,
    build_from_overrides,
    build_reference,
    dump_adjacency,
    edfa_count,
    path_nodes,
    regenerator_count,
    route,
    validate,
)


def test_reference_counts(topo):
    assert len(topo.nodes) == 34
    counts = {k: len(topo.of_kind(k)) for k in NodeKind}
    assert counts == {
        NodeKind.IOT: 20,
        NodeKind.AP: 4,
        NodeKind.ONU: 4,
        NodeKind.OLT: 1,
        NodeKind.METRO_SWITCH: 1,
        NodeKind.METRO_ROUTER: 1,
        NodeKind.CORE: 2,
        NodeKind.CLOUD_DC: 1,
    }
    assert len(topo.processing_nodes) == 20 + 4 + 1 + 1 + 1
    assert validate(topo) == []


def test_minimal_build_is_a_path():
    t = build_reference(1, 1)
    kinds = [t.node(n).kind for n in path_nodes(route(t, 0, t.of_kind(NodeKind.CLOUD_DC)[0]))]
    assert kinds == [
        NodeKind.AP,
        NodeKind.ONU,
        NodeKind.OLT,
        NodeKind.METRO_SWITCH,
        NodeKind.METRO_ROUTER,
        NodeKind.CORE,
        NodeKind.CORE,
        NodeKind.CLOUD_DC,
    ]


@pytest.mark.parametrize("groups,per", [(0, 5), (4, 0)])
def test_nonpositive_counts(groups, per):
    with pytest.raises(TopologyError):
        build_reference(groups, per)


def test_counts_formulas():
    assert regenerator_count(2500, 2500) == 0
    assert regenerator_count(5000, 2500) == 1
    assert edfa_count(80, 80) == 2
    assert edfa_count(2500, 80) == 32


def test_core_link_amplifiers(topo):
    core = [l for l in topo.links if l.core]
    assert len(core) == 1
    assert core[0].distance == 2500
    assert core[0].edfas == 32
    assert core[0].regenerators == 0


def test_routes(topo):
    assert route(topo, 0, 0) == ()
    onu2 = topo.of_kind(NodeKind.ONU)[1]
    p = route(topo, 0, onu2)
    assert [topo.node(n).kind for n in [0] + path_nodes(p)] == [
        NodeKind.IOT,
        NodeKind.AP,
        NodeKind.ONU,
        NodeKind.OLT,
        NodeKind.ONU,
    ]
    dc = topo.of_kind(NodeKind.CLOUD_DC)[0]
    p = route(topo, 0, dc)
    assert len(p) == 8
    assert [topo.node(h.b).kind for h in p[-2:]] == [NodeKind.CORE, NodeKind.CLOUD_DC]
    assert p[0].medium == WIRELESS and all(h.medium == FIBRE for h in p[1:])


def test_route_reverse_symmetry(topo):
    for s in (0, 7, 19):
        for d in topo.processing_nodes:
            fwd = route(topo, s, d)
            back = route(topo, d, s)
            assert tuple(h.reversed() for h in reversed(fwd)) == back


def test_no_layer_skipping(topo):
    dc = topo.of_kind(NodeKind.CLOUD_DC)[0]
    ranks = [LAYER_RANK[topo.node(n).layer] for n in [0] + path_nodes(route(topo, 0, dc)) if topo.node(n).layer]
    assert ranks == sorted(ranks)
    assert set(ranks) == set(LAYER_RANK.values())


def test_capacities_cover_single_task(topo):
    dc = topo.of_kind(NodeKind.CLOUD_DC)[0]
    for s in topo.of_kind(NodeKind.IOT):
        assert all(h.capacity >= 10 for h in route(topo, s, dc))


def test_default_link_capacities(topo):
    ap = topo.of_kind(NodeKind.AP)[0]
    onu = topo.of_kind(NodeKind.ONU)[0]
    olt = topo.of_kind(NodeKind.OLT)[0]
    assert topo.arc(0, ap).capacity == 100
    assert topo.arc(ap, onu).capacity == 300
    assert topo.arc(onu, olt).capacity == 300
    assert topo.arc(olt, topo.of_kind(NodeKind.METRO_SWITCH)[0]).capacity == 8_600_000
    core = next(l for l in topo.links if l.core)
    assert core.capacity == 40 * 32 * 1000


def test_default_max_servers(topo):
    by_kind = {topo.node(n).kind: topo.node(n).max_servers for n in topo.processing_nodes}
    assert by_kind == {
        NodeKind.IOT: 1,
        NodeKind.ONU: 1,
        NodeKind.OLT: 2,
        NodeKind.METRO_SWITCH: 2,
        NodeKind.CLOUD_DC: None,
    }


def test_disconnected_route():
    t = build_reference(1, 1)
    nodes = list(t.nodes)
    links = list(t.links)[:2]
    small = Topology(nodes, links)
    assert any("disconnected" in p for p in validate(small))
    with pytest.raises(RouteError):
        route(small, 0, nodes[-1].id)


def test_pon_tree_breach(topo):
    olt = topo.of_kind(NodeKind.OLT)[0]
    onu = topo.of_kind(NodeKind.ONU)[0]
    extra = replace(topo.node(olt), id=99)
    links = list(topo.links) + [
        Link(onu, 99, 1000.0, 1.0),
        Link(99, topo.of_kind(NodeKind.METRO_SWITCH)[0], 1000.0, 1.0),
    ]
    broken = Topology(list(topo.nodes) + [extra], links)
    assert any("PON tree breach" in p and f"node {onu}" in p for p in validate(broken))


def test_zero_capacity_link_named(topo):
    bad = [replace(l, capacity=0.0) if l.a == 0 else l for l in topo.links]
    report = validate(Topology(topo.nodes, bad))
    assert any(p.startswith("link 0-") and "capacity" in p for p in report)


def test_wireless_only_on_iot_ap(topo):
    bad = [replace(l, medium=WIRELESS) if l.core else l for l in topo.links]
    assert any("wireless" in p for p in validate(Topology(topo.nodes, bad)))


def test_overrides():
    t = build_from_overrides({"groups": 2, "iot_per_group": 3, "distances": {"core_core": 5000}})
    assert len(t.of_kind(NodeKind.IOT)) == 6
    core = next(l for l in t.links if l.core)
    assert core.regenerators == 1
    assert core.edfas == edfa_count(5000, 80)
    with pytest.raises(TopologyError):
        build_from_overrides({"distances": {"nowhere": 1}})
    with pytest.raises(TopologyError):
        build_from_overrides({"colour": "red"})
    t = build_from_overrides('{"max_servers": {"metro_fog": 3}}')
    assert t.node(t.of_kind(NodeKind.METRO_SWITCH)[0]).max_servers == 3


def test_adjacency_dump_deterministic(topo):
    a = dump_adjacency(topo)
    b = dump_adjacency(build_reference())
    assert a == b
    assert len(a["nodes"]) == 34 and len(a["links"]) == 33
    assert [(l["a"], l["b"]) for l in a["links"]] == sorted((l["a"], l["b"]) for l in a["links"])


def test_layers(topo):
    assert topo.node(0).layer == Layer.IOT
    assert topo.node(topo.of_kind(NodeKind.ONU)[0]).layer == Layer.CPE
    assert topo.node(topo.of_kind(NodeKind.METRO_SWITCH)[0]).layer == Layer.METRO_FOG
    assert topo.node(topo.of_kind(NodeKind.AP)[0]).layer is None
