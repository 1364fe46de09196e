"""Reference multilayer network: IoT groups, PON access, metro, IP/WDM core, cloud DC."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .catalog import DeviceCatalog, default_catalog


class NodeKind(str, Enum):
    IOT = "IoT"
    AP = "AP"
    ONU = "ONU"
    OLT = "OLT"
    METRO_SWITCH = "MetroSwitch"
    METRO_ROUTER = "MetroRouter"
    CORE = "CoreNode"
    CLOUD_DC = "CloudDC"


class Layer(str, Enum):
    """Processing layers, bottom-up."""

    IOT = "IoT"
    CPE = "CPE"
    ACCESS_FOG = "AccessFog"
    METRO_FOG = "MetroFog"
    CLOUD_DC = "CloudDC"


LAYER_OF_KIND = {
    NodeKind.IOT: Layer.IOT,
    NodeKind.ONU: Layer.CPE,
    NodeKind.OLT: Layer.ACCESS_FOG,
    NodeKind.METRO_SWITCH: Layer.METRO_FOG,
    NodeKind.CLOUD_DC: Layer.CLOUD_DC,
}
PROCESSOR_ROLE = {
    NodeKind.IOT: "iot",
    NodeKind.ONU: "cpe",
    NodeKind.OLT: "access_fog",
    NodeKind.METRO_SWITCH: "metro_fog",
    NodeKind.CLOUD_DC: "dc",
}
LAYER_RANK = {layer: i for i, layer in enumerate(Layer)}
PROCESSING_KINDS = frozenset(LAYER_OF_KIND)

# Wiring order of the reference build; used to check that no route skips a layer.
KIND_RANK = {kind: i for i, kind in enumerate(NodeKind)}

WIRELESS = "wireless"
FIBRE = "fibre"

NodeId = int


class TopologyError(ValueError):
    pass


class RouteError(TopologyError):
    pass


@dataclass(frozen=True)
class Node:
    id: NodeId
    kind: NodeKind
    group: Optional[int] = None
    processor: Optional[str] = None  # catalog processor role
    max_servers: Optional[int] = None  # None = unbounded

    @property
    def layer(self) -> Optional[Layer]:
        return LAYER_OF_KIND.get(self.kind)

    @property
    def is_processing(self) -> bool:
        return self.processor is not None


@dataclass(frozen=True)
class Link:
    a: NodeId
    b: NodeId
    capacity: float  # Mbps
    distance: float  # km
    medium: str = FIBRE
    core: bool = False
    edfas: int = 0  # per fibre, core links only
    regenerators: int = 0

    @property
    def key(self) -> Tuple[NodeId, NodeId]:
        return (self.a, self.b)

    def reversed(self) -> "Link":
        return replace(self, a=self.b, b=self.a)


def regenerator_count(distance: float, span: float) -> int:
    if distance < 0 or span <= 0:
        raise ValueError("distance must be >= 0 and span > 0")
    return max(0, math.floor(distance / span - 1))


def edfa_count(distance: float, span: float) -> int:
    if distance < 0 or span <= 0:
        raise ValueError("distance must be >= 0 and span > 0")
    return math.floor(distance / span - 1) + 2


class Topology:
    """Bidirectional graph with typed nodes.  Immutable once built."""

    def __init__(self, nodes: Iterable[Node], links: Iterable[Link]):
        self.nodes: Tuple[Node, ...] = tuple(sorted(nodes, key=lambda n: n.id))
        self.links: Tuple[Link, ...] = tuple(links)
        self._by_id: Dict[NodeId, Node] = {n.id: n for n in self.nodes}
        self._neighbors: Dict[NodeId, List[NodeId]] = {n.id: [] for n in self.nodes}
        self._arcs: Dict[Tuple[NodeId, NodeId], Link] = {}
        for link in self.links:
            for end in (link.a, link.b):
                if end in self._neighbors:
                    continue
                self._neighbors[end] = []
            self._neighbors[link.a].append(link.b)
            self._neighbors[link.b].append(link.a)
            self._arcs[(link.a, link.b)] = link
            self._arcs[(link.b, link.a)] = link.reversed()
        for nbrs in self._neighbors.values():
            nbrs.sort()
        self._routes: Dict[Tuple[NodeId, NodeId], Tuple[Link, ...]] = {}

    def node(self, node_id: NodeId) -> Node:
        return self._by_id[node_id]

    def __contains__(self, node_id) -> bool:
        return node_id in self._by_id

    def neighbors(self, node_id: NodeId) -> List[NodeId]:
        return self._neighbors[node_id]

    def arc(self, m: NodeId, n: NodeId) -> Link:
        return self._arcs[(m, n)]

    def has_arc(self, m: NodeId, n: NodeId) -> bool:
        return (m, n) in self._arcs

    def arcs(self) -> List[Link]:
        """Both directions of every link, in deterministic order."""
        return [self._arcs[k] for k in sorted(self._arcs)]

    def of_kind(self, *kinds: NodeKind) -> List[NodeId]:
        return [n.id for n in self.nodes if n.kind in kinds]

    @property
    def processing_nodes(self) -> List[NodeId]:
        return [n.id for n in self.nodes if n.is_processing]

    def route(self, src: NodeId, dst: NodeId) -> List[Link]:
        return list(route(self, src, dst))

    def __repr__(self):
        return f"Topology({len(self.nodes)} nodes, {len(self.links)} links)"


def route(topology: Topology, src: NodeId, dst: NodeId) -> Tuple[Link, ...]:
    """Links from ``src`` to ``dst`` oriented along the direction of travel."""
    for end in (src, dst):
        if end not in topology:
            raise RouteError(f"unknown node {end}")
    key = (src, dst)
    cached = topology._routes.get(key)
    if cached is not None:
        return cached
    if src == dst:
        path: Tuple[Link, ...] = ()
    else:
        parent = {src: None}
        queue = deque([src])
        while queue and dst not in parent:
            m = queue.popleft()
            for n in topology.neighbors(m):
                if n not in parent:
                    parent[n] = m
                    queue.append(n)
        if dst not in parent:
            raise RouteError(f"no route between {src} and {dst}")
        hops = []
        n = dst
        while parent[n] is not None:
            hops.append(topology.arc(parent[n], n))
            n = parent[n]
        path = tuple(reversed(hops))
    topology._routes[key] = path
    return path


# Segment names used by override documents, bottom-up.
SEGMENTS = ("iot_ap", "ap_onu", "onu_olt", "olt_metro", "metro_switch_router", "metro_core", "core_core", "core_dc")

DEFAULT_DISTANCES = {
    "iot_ap": 0.1,
    "ap_onu": 0.1,
    "onu_olt": 10.0,
    "olt_metro": 5.0,
    "metro_switch_router": 0.0,
    "metro_core": 300.0,
    "core_core": 2500.0,
    "core_dc": 0.0,
}


def default_capacities(catalog: DeviceCatalog) -> Dict[str, float]:
    """Link capacities (Mbps) taken from the data rate of the lower-layer device."""
    rate = lambda role: catalog.net(role).profile.capacity * 1000.0  # noqa: E731
    return {
        "iot_ap": rate("iot_wifi"),
        "ap_onu": rate("onu"),
        "onu_olt": rate("onu"),
        "olt_metro": rate("olt"),
        "metro_switch_router": rate("metro_switch"),
        "metro_core": rate("metro_router"),
        "core_core": catalog.wavelength_rate * catalog.wavelengths_per_fiber * 1000.0,
        "core_dc": rate("dc_lan_router"),
    }


def default_max_servers(catalog: DeviceCatalog) -> Dict[str, Optional[int]]:
    return {role: spec.max_servers for role, spec in catalog.processors.items()}


def build_reference(
    groups: int = 4,
    iot_per_group: int = 5,
    catalog: Optional[DeviceCatalog] = None,
    distances: Optional[Mapping[str, float]] = None,
    capacities: Optional[Mapping[str, float]] = None,
    max_servers: Optional[Mapping[str, Optional[int]]] = None,
) -> Topology:
    """IoT -wireless→ AP → ONU per group; ONUs → OLT → metro switch → metro
    router → core 1 → core 2 → cloud DC.

    Node ids are allocated layer by layer (IoT nodes first, DC last).
    """
    if groups < 1 or iot_per_group < 1:
        raise TopologyError("groups and iot_per_group must be >= 1")
    catalog = catalog or default_catalog()
    dist = {**DEFAULT_DISTANCES, **_checked(distances, "distances")}
    caps = {**default_capacities(catalog), **_checked(capacities, "capacities")}
    servers = {**default_max_servers(catalog), **(max_servers or {})}

    counter = iter(range(10**9))
    nodes: List[Node] = []

    def add(kind: NodeKind, group=None) -> NodeId:
        nid = next(counter)
        role = PROCESSOR_ROLE.get(kind)
        nodes.append(Node(nid, kind, group, role, servers[role] if role else None))
        return nid

    iots = [[add(NodeKind.IOT, g) for _ in range(iot_per_group)] for g in range(groups)]
    aps = [add(NodeKind.AP, g) for g in range(groups)]
    onus = [add(NodeKind.ONU, g) for g in range(groups)]
    olt = add(NodeKind.OLT)
    ms = add(NodeKind.METRO_SWITCH)
    mr = add(NodeKind.METRO_ROUTER)
    c1 = add(NodeKind.CORE)
    c2 = add(NodeKind.CORE)
    dc = add(NodeKind.CLOUD_DC)

    def link(a, b, seg, medium=FIBRE, core=False):
        d = dist[seg]
        extra = {}
        if core:
            extra = dict(
                edfas=edfa_count(d, catalog.edfa_span),
                regenerators=regenerator_count(d, catalog.regenerator_span),
            )
        return Link(a, b, caps[seg], d, medium, core, **extra)

    links: List[Link] = []
    for g in range(groups):
        links += [link(i, aps[g], "iot_ap", WIRELESS) for i in iots[g]]
        links.append(link(aps[g], onus[g], "ap_onu"))
        links.append(link(onus[g], olt, "onu_olt"))
    links += [
        link(olt, ms, "olt_metro"),
        link(ms, mr, "metro_switch_router"),
        link(mr, c1, "metro_core"),
        link(c1, c2, "core_core", core=True),
        link(c2, dc, "core_dc"),
    ]
    return Topology(nodes, links)


def _checked(values: Optional[Mapping[str, float]], what: str) -> Dict[str, float]:
    values = dict(values or {})
    unknown = sorted(set(values) - set(SEGMENTS))
    if unknown:
        raise TopologyError(f"unknown {what} segment(s) {unknown}; expected {list(SEGMENTS)}")
    return values


_OVERRIDE_KEYS = {"groups", "iot_per_group", "distances", "capacities", "max_servers"}


def build_from_overrides(
    doc: "str | Mapping | None", catalog: Optional[DeviceCatalog] = None
) -> Topology:
    """Reference build with a topology override document applied."""
    if isinstance(doc, str):
        doc = json.loads(doc) if doc.strip() else {}
    doc = dict(doc or {})
    unknown = sorted(set(doc) - _OVERRIDE_KEYS)
    if unknown:
        raise TopologyError(f"unknown topology field(s) {unknown}")
    return build_reference(
        doc.get("groups", 4),
        doc.get("iot_per_group", 5),
        catalog=catalog,
        distances=doc.get("distances"),
        capacities=doc.get("capacities"),
        max_servers=doc.get("max_servers"),
    )


# Allowed neighbor kinds per node kind in a well-formed build.
_WIRING = {
    NodeKind.IOT: {NodeKind.AP},
    NodeKind.AP: {NodeKind.IOT, NodeKind.ONU},
    NodeKind.ONU: {NodeKind.AP, NodeKind.OLT},
    NodeKind.OLT: {NodeKind.ONU, NodeKind.METRO_SWITCH},
    NodeKind.METRO_SWITCH: {NodeKind.OLT, NodeKind.METRO_ROUTER},
    NodeKind.METRO_ROUTER: {NodeKind.METRO_SWITCH, NodeKind.CORE},
    NodeKind.CORE: {NodeKind.METRO_ROUTER, NodeKind.CORE, NodeKind.CLOUD_DC},
    NodeKind.CLOUD_DC: {NodeKind.CORE},
}


def validate(topology: Topology) -> List[str]:
    """Structural checks; returns a list of violations (empty when valid)."""
    problems: List[str] = []
    ids = [n.id for n in topology.nodes]
    if len(ids) != len(set(ids)):
        problems.append("duplicate node ids")
    for link in topology.links:
        name = f"link {link.a}-{link.b}"
        if link.a not in topology or link.b not in topology:
            problems.append(f"{name}: endpoint does not exist")
            continue
        if not link.capacity > 0:
            problems.append(f"{name}: capacity must be > 0 (got {link.capacity})")
        if link.distance < 0:
            problems.append(f"{name}: negative distance")
        kinds = {topology.node(link.a).kind, topology.node(link.b).kind}
        if link.medium == WIRELESS and kinds != {NodeKind.IOT, NodeKind.AP}:
            problems.append(f"{name}: wireless medium only allowed on IoT-AP links")
        if link.medium not in (WIRELESS, FIBRE):
            problems.append(f"{name}: unknown medium {link.medium!r}")
        if link.core and kinds != {NodeKind.CORE}:
            problems.append(f"{name}: core flag on a non core-core link")
        a, b = topology.node(link.a), topology.node(link.b)
        if b.kind not in _WIRING[a.kind]:
            problems.append(f"{name}: {a.kind.value} cannot connect to {b.kind.value}")
    for node in topology.nodes:
        if node.is_processing != (node.kind in PROCESSING_KINDS):
            problems.append(f"node {node.id}: processing attached to {node.kind.value}")
        if node.is_processing and node.max_servers is not None and node.max_servers < 1:
            problems.append(f"node {node.id}: max servers must be >= 1")
        if node.kind == NodeKind.ONU:
            parents = [n for n in topology.neighbors(node.id) if topology.node(n).kind == NodeKind.OLT]
            if len(parents) != 1:
                problems.append(f"node {node.id}: PON tree breach ({len(parents)} parent OLTs)")
        if node.kind == NodeKind.IOT:
            aps = [n for n in topology.neighbors(node.id) if topology.node(n).kind == NodeKind.AP]
            if len(aps) != 1:
                problems.append(f"node {node.id}: IoT node must attach to exactly one AP")
    if topology.nodes:
        start = topology.nodes[0].id
        seen = {start}
        queue = deque([start])
        while queue:
            m = queue.popleft()
            for n in topology.neighbors(m):
                if n not in seen:
                    seen.add(n)
                    queue.append(n)
        missing = [n.id for n in topology.nodes if n.id not in seen]
        if missing:
            problems.append(f"graph is disconnected; unreachable nodes {missing}")
    return problems


def dump_adjacency(topology: Topology) -> dict:
    return {
        "nodes": [
            {
                "id": n.id,
                "kind": n.kind.value,
                "group": n.group,
                "processor": n.processor,
                "max_servers": n.max_servers,
            }
            for n in topology.nodes
        ],
        "links": [
            {
                "a": l.a,
                "b": l.b,
                "capacity_mbps": l.capacity,
                "distance_km": l.distance,
                "medium": l.medium,
                "core": l.core,
                "edfas": l.edfas,
                "regenerators": l.regenerators,
            }
            for l in sorted(topology.links, key=lambda l: (l.a, l.b))
        ],
    }


def path_nodes(path: Sequence[Link]) -> List[NodeId]:
    """Nodes entered along a path (excludes the starting node)."""
    return [hop.b for hop in path]
