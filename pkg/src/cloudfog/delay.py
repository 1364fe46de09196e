"""Propagation and M/M/1 queuing delay, plus the exact arrival-rate lookup tables."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .topology import FIBRE, WIRELESS, Link, NodeId, NodeKind, Topology

# Subset sums closer than this (Mbps) are treated as the same grid point.
GRID_TOL = 1e-9


class SaturationError(ValueError):
    """Arrival rate at or above the service rate."""


class OffGridError(ValueError):
    pass


def _default_rates():
    return {
        NodeKind.AP: 1.0,
        NodeKind.ONU: 10.0,
        NodeKind.OLT: 10.0,
        NodeKind.METRO_SWITCH: 10.0,
        NodeKind.METRO_ROUTER: 10.0,
        NodeKind.CORE: 40.0,
        NodeKind.CLOUD_DC: 40.0,
    }


@dataclass(frozen=True)
class DelayConstants:
    speed_of_light: float = 299792.0  # km/s
    refractive_index_ratio: float = 2.0 / 3.0
    packet_size: float = 1500 * 8  # bits
    # Gb/s per node kind; kinds absent here (IoT) are not queued.
    service_rates: Mapping[NodeKind, float] = field(default_factory=_default_rates)

    def __post_init__(self):
        if not 0 < self.refractive_index_ratio <= 1:
            raise ValueError("refractive index ratio must lie in (0, 1]")
        if self.packet_size <= 0:
            raise ValueError("packet size must be > 0")
        if self.speed_of_light <= 0:
            raise ValueError("speed of light must be > 0")
        rates = {NodeKind(k): float(v) for k, v in dict(self.service_rates).items()}
        if any(v <= 0 for v in rates.values()):
            raise ValueError("service rates must be > 0")
        object.__setattr__(self, "service_rates", rates)

    def packets_per_second(self, mbps: float) -> float:
        return mbps * 1e6 / self.packet_size

    def service_rate(self, kind: NodeKind) -> Optional[float]:
        """Service rate in packets/s, or None for kinds without a queue."""
        gbps = self.service_rates.get(kind)
        return None if gbps is None else gbps * 1e9 / self.packet_size

    @classmethod
    def from_dict(cls, doc: Mapping) -> "DelayConstants":
        doc = dict(doc)
        rates = doc.pop("service_rates", None)
        kwargs = {k: float(v) for k, v in doc.items()}
        if rates is not None:
            merged = _default_rates()
            merged.update({NodeKind(k): v for k, v in rates.items()})
            kwargs["service_rates"] = merged
        return cls(**kwargs)


def propagation_delay(path: Iterable[Link], constants: DelayConstants = DelayConstants()) -> float:
    """Seconds spent in flight along ``path``."""
    total = 0.0
    for link in path:
        if link.medium == WIRELESS:
            total += link.distance / constants.speed_of_light
        elif link.medium == FIBRE:
            total += link.distance / (constants.refractive_index_ratio * constants.speed_of_light)
        else:
            raise ValueError(f"unknown medium {link.medium!r}")
    return total


def mm1_delay(arrival: float, service: float) -> float:
    """Sojourn time 1/(service - arrival) in seconds; rates in packets/s."""
    if arrival < 0:
        raise ValueError("arrival rate must be >= 0")
    if arrival >= service:
        raise SaturationError(f"arrival {arrival:g} pkt/s saturates service {service:g} pkt/s")
    return 1.0 / (service - arrival)


@dataclass(frozen=True)
class QueueLookup:
    """Delay per achievable aggregate arrival rate for one service-rate class."""

    service_rate: float  # packets/s
    traffic: Tuple[float, ...]  # grid in Mbps, ascending
    arrivals: Tuple[float, ...]  # same grid in packets/s
    delays: Tuple[float, ...]  # seconds
    infeasible: Tuple[float, ...] = ()  # saturating aggregates, Mbps

    @property
    def entries(self) -> List[Tuple[float, float]]:
        return list(zip(self.arrivals, self.delays))

    def index(self, mbps: float) -> int:
        i = bisect.bisect_left(self.traffic, mbps - GRID_TOL)
        if i < len(self.traffic) and abs(self.traffic[i] - mbps) <= GRID_TOL:
            return i
        if any(abs(x - mbps) <= GRID_TOL for x in self.infeasible):
            raise SaturationError(f"aggregate {mbps:g} Mbps saturates the queue")
        raise OffGridError(f"aggregate {mbps:g} Mbps is not a grid point")

    def delay_at(self, mbps: float) -> float:
        return self.delays[self.index(mbps)]


def subset_sums(demands: Sequence[float]) -> List[float]:
    """Distinct sums over all subsets (including the empty one), ascending."""
    sums = [0.0]
    for t in demands:
        merged = sorted(sums + [x + t for x in sums])
        sums = []
        for x in merged:
            if not sums or x - sums[-1] > GRID_TOL:
                sums.append(x)
    return sums


def build_lookup(
    demands: Sequence[float], service_gbps: float, constants: DelayConstants = DelayConstants()
) -> QueueLookup:
    if not demands:
        raise ValueError("empty demand set")
    if any(t <= 0 for t in demands):
        raise ValueError("demands must be > 0")
    service = service_gbps * 1e9 / constants.packet_size
    traffic, arrivals, delays, bad = [], [], [], []
    for x in subset_sums(demands):
        arrival = constants.packets_per_second(x)
        if arrival >= service:
            bad.append(x)
            continue
        traffic.append(x)
        arrivals.append(arrival)
        delays.append(mm1_delay(arrival, service))
    return QueueLookup(service, tuple(traffic), tuple(arrivals), tuple(delays), tuple(bad))


def build_lookups(
    demands: Sequence[float], constants: DelayConstants = DelayConstants()
) -> Dict[float, QueueLookup]:
    """One table per distinct service rate (Gb/s)."""
    return {
        rate: build_lookup(demands, rate, constants)
        for rate in sorted(set(constants.service_rates.values()))
    }


def node_queue_delay(
    topology: Topology,
    node: NodeId,
    arrival_mbps: float,
    constants: DelayConstants,
    lookups: Optional[Mapping[float, QueueLookup]] = None,
) -> float:
    kind = topology.node(node).kind
    gbps = constants.service_rates.get(kind)
    if gbps is None:
        return 0.0
    if lookups is not None:
        return lookups[gbps].delay_at(arrival_mbps)
    return mm1_delay(constants.packets_per_second(arrival_mbps), constants.service_rate(kind))


def path_queuing(
    topology: Topology,
    path: Sequence[Link],
    arrivals: Mapping[NodeId, float],
    constants: DelayConstants = DelayConstants(),
    lookups: Optional[Mapping[float, QueueLookup]] = None,
) -> float:
    """Sum of queue delays at every node entered along ``path``.

    ``arrivals`` holds aggregate incoming traffic per node in Mbps.
    """
    return sum(
        node_queue_delay(topology, hop.b, arrivals.get(hop.b, 0.0), constants, lookups) for hop in path
    )


@dataclass
class DelayReport:
    propagation: Dict[Tuple[NodeId, NodeId], float]  # seconds per (source, destination)
    queuing: Dict[Tuple[NodeId, NodeId], float]  # seconds per (source, destination)
    node_queuing: Dict[NodeId, float]  # Q_i for every queued node, s
    demands: int = 0

    @property
    def total_propagation(self) -> float:
        return sum(self.propagation.values())

    @property
    def total_queuing(self) -> float:
        return sum(self.queuing.values())

    @property
    def total(self) -> float:
        return self.total_propagation + self.total_queuing

    @property
    def avg_propagation(self) -> float:
        return self.total_propagation / self.demands if self.demands else 0.0

    @property
    def avg_queuing(self) -> float:
        return self.total_queuing / self.demands if self.demands else 0.0

    def as_record(self) -> Dict[str, float]:
        return {
            "total_propagation_s": self.total_propagation,
            "total_queuing_s": self.total_queuing,
            "avg_propagation_ms": self.avg_propagation * 1e3,
            "avg_queuing_us": self.avg_queuing * 1e6,
        }


def delay_report(
    topology: Topology,
    pairs: Iterable[Tuple[NodeId, NodeId]],
    arrivals: Mapping[NodeId, float],
    constants: DelayConstants = DelayConstants(),
    lookups: Optional[Mapping[float, QueueLookup]] = None,
    demands: Optional[int] = None,
) -> DelayReport:
    """Delays for every (source, destination) pair with a placement.

    Local placements appear with zero delay.
    """
    pairs = sorted(set(pairs))
    node_q = {
        n.id: node_queue_delay(topology, n.id, arrivals.get(n.id, 0.0), constants, lookups)
        for n in topology.nodes
        if n.kind in constants.service_rates
    }
    prop, queue = {}, {}
    for s, d in pairs:
        path = topology.route(s, d)
        prop[(s, d)] = propagation_delay(path, constants)
        queue[(s, d)] = sum(node_q.get(hop.b, 0.0) for hop in path)
    n = demands if demands is not None else len({s for s, _ in pairs})
    return DelayReport(prop, queue, node_q, n)
