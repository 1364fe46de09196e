"""Network, processing and intra-site LAN power of a placement.

Traffic is carried in Mbps throughout and converted to Gb/s where it meets an
energy-per-bit figure.  Processing loads are in MIPS.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

from .catalog import DeviceCatalog
from .topology import NodeId, NodeKind, Topology, route

CEIL_TOL = 1e-9

Pair = Tuple[NodeId, NodeId]


class PowerModelError(ValueError):
    pass


def ceil_count(x: float) -> int:
    """Ceiling that forgives floating-point dust just above an integer."""
    if x <= 0:
        return 0
    return int(math.ceil(x - CEIL_TOL))


@dataclass(frozen=True)
class FlowSet:
    pair_traffic: Dict[Pair, float]  # Mbps per (source, destination), remote placements only
    arc_flows: Dict[Tuple[NodeId, NodeId, NodeId, NodeId], float]  # (s, d, m, n) -> Mbps
    link_traffic: Dict[Pair, float]  # per directed arc
    node_traffic: Dict[NodeId, float]  # Mbps through each node (sent plus received for IoT nodes)
    lan_inflow: Dict[NodeId, float]  # traffic arriving at d for processing there
    node_active: frozenset  # nodes carrying traffic
    proc_active: frozenset  # processing sites in use
    assigned: Dict[Pair, float] = field(default_factory=dict)  # (source, destination) -> MIPS
    arrivals: Dict[NodeId, float] = field(default_factory=dict)  # incoming Mbps per node

    def mips_at(self, d: NodeId) -> float:
        return sum(v for (s, dd), v in self.assigned.items() if dd == d)


@dataclass(frozen=True)
class ServerUsage:
    mips: Dict[NodeId, float]
    servers: Dict[NodeId, int]  # active servers per site
    wavelengths: Dict[Pair, int]  # core arcs
    fibers: Dict[Pair, int]  # core arcs
    agg_ports: Dict[NodeId, int]  # Ag_m, core nodes


def derive_flows(
    topology: Topology,
    traffic: Mapping[NodeId, float],
    assignment: Mapping[Pair, float],
) -> FlowSet:
    """Flows induced by an assignment.

    ``traffic`` maps each source to its traffic demand (Mbps); ``assignment`` maps (s, d) to the
    MIPS of s processed at d.  A source sends its full traffic to every remote
    destination it uses.
    """
    pair_traffic: Dict[Pair, float] = {}
    arc_flows: Dict[Tuple[NodeId, NodeId, NodeId, NodeId], float] = {}
    link_traffic: Dict[Pair, float] = {}
    into: Dict[NodeId, float] = {}
    source_out: Dict[NodeId, float] = {}
    core_out: Dict[NodeId, float] = {}
    lan_inflow: Dict[NodeId, float] = {}
    assigned: Dict[Pair, float] = {}
    for (s, d), mips in sorted(assignment.items()):
        if mips < 0:
            raise PowerModelError(f"negative assignment {mips} for pair {(s, d)}")
        if mips == 0:
            continue
        if s not in traffic:
            raise PowerModelError(f"assignment for unknown source {s}")
        if not topology.node(d).is_processing:
            raise PowerModelError(f"node {d} has no processing capability")
        assigned[(s, d)] = float(mips)
        if s == d:
            continue
        t = float(traffic[s])
        if t < 0:
            raise PowerModelError(f"negative traffic at source {s}")
        pair_traffic[(s, d)] = t
        lan_inflow[d] = lan_inflow.get(d, 0.0) + t
        source_out[s] = source_out.get(s, 0.0) + t
        for hop in route(topology, s, d):
            arc_flows[(s, d, hop.a, hop.b)] = t
            link_traffic[hop.key] = link_traffic.get(hop.key, 0.0) + t
            into[hop.b] = into.get(hop.b, 0.0) + t
            if hop.core:
                core_out[hop.a] = core_out.get(hop.a, 0.0) + t

    node_traffic: Dict[NodeId, float] = {}
    for node in topology.nodes:
        m = node.id
        if node.kind == NodeKind.CORE:
            value = core_out.get(m, 0.0)
        elif node.kind == NodeKind.IOT:
            value = source_out.get(m, 0.0) + into.get(m, 0.0)
        else:
            value = into.get(m, 0.0)
        if value > 0:
            node_traffic[m] = value
    return FlowSet(
        pair_traffic=pair_traffic,
        arc_flows=arc_flows,
        link_traffic=link_traffic,
        node_traffic=node_traffic,
        lan_inflow=lan_inflow,
        node_active=frozenset(node_traffic),
        proc_active=frozenset(d for (_, d) in assigned),
        assigned=assigned,
        arrivals=into,
    )


SERVER_POLICIES = ("minimal", "all")


def derive_usage(
    topology: Topology,
    flows: FlowSet,
    catalog: DeviceCatalog,
    policy: str = "minimal",
) -> ServerUsage:
    """Server, wavelength, fibre and port counts for ``flows``.

    ``minimal`` activates ⌈load/capacity⌉ servers; ``all`` switches on every
    available server at active sites with a finite server limit.  Counts may
    exceed the limit; :func:`capacity_violations` reports that.
    """
    if policy not in SERVER_POLICIES:
        raise ValueError(f"unknown server policy {policy!r}")
    mips: Dict[NodeId, float] = {}
    for (_, d), v in flows.assigned.items():
        mips[d] = mips.get(d, 0.0) + v
    servers: Dict[NodeId, int] = {}
    for d, load in mips.items():
        node = topology.node(d)
        cap = catalog.proc(node.processor).capacity_mips
        n = max(1, ceil_count(load / cap))
        if policy == "all" and node.max_servers is not None:
            n = max(n, node.max_servers)
        servers[d] = n

    rate = catalog.wavelength_rate * 1000.0  # Mbps per wavelength
    wavelengths: Dict[Pair, int] = {}
    fibers: Dict[Pair, int] = {}
    for key, t in flows.link_traffic.items():
        if topology.arc(*key).core and t > 0:
            w = ceil_count(t / rate)
            wavelengths[key] = w
            fibers[key] = ceil_count(w / catalog.wavelengths_per_fiber)
    agg_ports = {
        m: ceil_count(t / rate)
        for m, t in flows.node_traffic.items()
        if topology.node(m).kind == NodeKind.CORE
    }
    return ServerUsage(mips, servers, wavelengths, fibers, agg_ports)


def capacity_violations(
    topology: Topology, flows: FlowSet, usage: ServerUsage, catalog: DeviceCatalog, tol: float = 1e-6
) -> list:
    out = []
    for key, t in sorted(flows.link_traffic.items()):
        link = topology.arc(*key)
        if t > link.capacity + tol:
            out.append(f"link {key[0]}->{key[1]}: traffic {t:g} Mbps exceeds capacity {link.capacity:g}")
    for d, load in sorted(usage.mips.items()):
        node = topology.node(d)
        cap = catalog.proc(node.processor).capacity_mips
        n = usage.servers.get(d, 0)
        if node.max_servers is not None and n > node.max_servers:
            out.append(f"node {d}: {n} servers exceed the limit of {node.max_servers}")
        if load > n * cap + tol:
            out.append(f"node {d}: load {load:g} MIPS exceeds {n} x {cap:g}")
    return out


CATEGORIES = (
    "iot_transceiver",
    "ap",
    "access_onu",
    "access_olt",
    "metro_router",
    "metro_switch",
    "core_router_ports",
    "core_transponders",
    "core_edfas",
    "core_optical_switches",
    "core_regenerators",
    "proc_iot",
    "proc_cpe",
    "proc_access",
    "proc_metro",
    "proc_dc",
    "lan_access",
    "lan_metro",
    "lan_dc",
)
NETWORK_CATEGORIES = CATEGORIES[:11]
PROCESSING_CATEGORIES = CATEGORIES[11:16]
LAN_CATEGORIES = CATEGORIES[16:]
# Categories that carry no PUE factor.
UNSCALED_CATEGORIES = ("iot_transceiver", "ap", "proc_iot", "proc_cpe")


@dataclass
class PowerBreakdown:
    """Watts per category."""

    iot_transceiver: float = 0.0
    ap: float = 0.0
    access_onu: float = 0.0
    access_olt: float = 0.0
    metro_router: float = 0.0
    metro_switch: float = 0.0
    core_router_ports: float = 0.0
    core_transponders: float = 0.0
    core_edfas: float = 0.0
    core_optical_switches: float = 0.0
    core_regenerators: float = 0.0
    proc_iot: float = 0.0
    proc_cpe: float = 0.0
    proc_access: float = 0.0
    proc_metro: float = 0.0
    proc_dc: float = 0.0
    lan_access: float = 0.0
    lan_metro: float = 0.0
    lan_dc: float = 0.0

    @property
    def net_pc(self) -> float:
        return sum(getattr(self, c) for c in NETWORK_CATEGORIES)

    @property
    def processing(self) -> float:
        return sum(getattr(self, c) for c in PROCESSING_CATEGORIES)

    @property
    def lan(self) -> float:
        return sum(getattr(self, c) for c in LAN_CATEGORIES)

    @property
    def pr_pc(self) -> float:
        """Processing plus the intra-site LANs."""
        return self.processing + self.lan

    @property
    def total(self) -> float:
        return math.fsum(getattr(self, c) for c in CATEGORIES)

    def __add__(self, other: "PowerBreakdown") -> "PowerBreakdown":
        return PowerBreakdown(**{c: getattr(self, c) + getattr(other, c) for c in CATEGORIES})

    def as_record(self) -> Dict[str, float]:
        rec = {f"{c}_w": getattr(self, c) for c in CATEGORIES}
        rec["net_pc_w"] = self.net_pc
        rec["pr_pc_w"] = self.pr_pc
        rec["total_w"] = self.total
        return rec


def _gbps(mbps: float) -> float:
    return mbps / 1000.0


def network_power(
    topology: Topology, flows: FlowSet, usage: ServerUsage, catalog: DeviceCatalog
) -> PowerBreakdown:
    for key, t in flows.link_traffic.items():
        if not topology.has_arc(*key):
            raise PowerModelError(f"flow on nonexistent link {key}")
        if t < 0:
            raise PowerModelError(f"negative traffic on link {key}")
    pue = catalog.pue
    out = PowerBreakdown()

    def device(role: str, load_mbps: float, active: bool) -> float:
        spec = catalog.net(role)
        return spec.energy_per_bit * _gbps(load_mbps) + (spec.profile.attributed_idle if active else 0.0)

    for node in topology.nodes:
        m = node.id
        load = flows.node_traffic.get(m, 0.0)
        active = m in flows.node_active
        if not active:
            continue
        kind = node.kind
        if kind == NodeKind.IOT:
            out.iot_transceiver += device("iot_wifi", load, active)
        elif kind == NodeKind.AP:
            out.ap += device("ap", load, active)
        elif kind == NodeKind.ONU:
            out.access_onu += pue.cpe * device("onu", load, active)
        elif kind == NodeKind.OLT:
            out.access_olt += pue.access * device("olt", load, active)
        elif kind == NodeKind.METRO_ROUTER:
            spec = catalog.net("metro_router")
            out.metro_router += pue.metro * spec.redundancy * device("metro_router", load, active)
        elif kind == NodeKind.METRO_SWITCH:
            out.metro_switch += pue.metro * device("metro_switch", load, active)
        elif kind == NodeKind.CORE:
            _core_node(topology, m, load, flows, usage, catalog, out)
    return out


def _core_node(topology, m, load, flows, usage, catalog, out: PowerBreakdown):
    pue_c = catalog.pue.core
    g = _gbps(load)
    arcs = [(m, n) for n in topology.neighbors(m) if topology.arc(m, n).core]
    w_sum = sum(usage.wavelengths.get(k, 0) for k in arcs)

    router = catalog.net("core_router_port")
    out.core_router_ports += pue_c * (
        router.energy_per_bit * g + router.profile.attributed_idle * (usage.agg_ports.get(m, 0) + w_sum)
    )
    trans = catalog.net("transponder")
    out.core_transponders += pue_c * (trans.energy_per_bit * g + trans.profile.attributed_idle * w_sum)
    osw = catalog.net("optical_switch")
    out.core_optical_switches += pue_c * (osw.energy_per_bit * g + osw.profile.attributed_idle)

    edfa = catalog.net("edfa")
    regen = catalog.net("regenerator")
    for k in arcs:
        link = topology.arc(*k)
        arc_g = _gbps(flows.link_traffic.get(k, 0.0))
        fibers = usage.fibers.get(k, 0)
        w = usage.wavelengths.get(k, 0)
        out.core_edfas += pue_c * (
            edfa.energy_per_bit * arc_g * link.edfas * fibers
            + edfa.profile.attributed_idle * link.edfas * fibers
        )
        out.core_regenerators += pue_c * (
            regen.energy_per_bit * arc_g * link.regenerators * w
            + regen.profile.attributed_idle * link.regenerators * w
        )


_LAN_ROLES = {
    "access_fog": ("access_fog_router", "access_fog_switch", "access", "lan_access"),
    "metro_fog": ("metro_fog_router", "metro_fog_switch", "metro", "lan_metro"),
    "dc": ("dc_lan_router", "dc_lan_switch", "dc", "lan_dc"),
}
_PROC_CATEGORY = {
    "iot": ("proc_iot", None),
    "cpe": ("proc_cpe", None),
    "access_fog": ("proc_access", "access"),
    "metro_fog": ("proc_metro", "metro"),
    "dc": ("proc_dc", "dc"),
}


def processing_power(topology: Topology, usage: ServerUsage, catalog: DeviceCatalog) -> PowerBreakdown:
    out = PowerBreakdown()
    for d in sorted(set(usage.mips) | set(usage.servers)):
        node = topology.node(d)
        if not node.is_processing:
            raise PowerModelError(f"assignment to node {d} without processing")
        spec = catalog.proc(node.processor)
        cat, pue_name = _PROC_CATEGORY[node.processor]
        factor = getattr(catalog.pue, pue_name) if pue_name else 1.0
        watts = spec.energy_per_mips * usage.mips.get(d, 0.0) + spec.profile.idle_power * usage.servers.get(d, 0)
        setattr(out, cat, getattr(out, cat) + factor * watts)
    return out


def lan_power(topology: Topology, flows: FlowSet, catalog: DeviceCatalog) -> PowerBreakdown:
    out = PowerBreakdown()
    for d in sorted(flows.proc_active):
        node = topology.node(d)
        roles = _LAN_ROLES.get(node.processor)
        if roles is None:
            continue
        lan_inflow = flows.lan_inflow.get(d, 0.0)
        if lan_inflow <= 0:
            raise PowerModelError(f"processing site {d} is active but receives no traffic")
        router_role, switch_role, pue_name, cat = roles
        watts = 0.0
        for role in (router_role, switch_role):
            spec = catalog.net(role)
            watts += spec.energy_per_bit * _gbps(lan_inflow) + spec.profile.attributed_idle
        setattr(out, cat, getattr(out, cat) + getattr(catalog.pue, pue_name) * watts)
    return out


def total_power(
    topology: Topology, flows: FlowSet, usage: ServerUsage, catalog: DeviceCatalog
) -> PowerBreakdown:
    return (
        network_power(topology, flows, usage, catalog)
        + processing_power(topology, usage, catalog)
        + lan_power(topology, flows, catalog)
    )
