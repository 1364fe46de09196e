"""Placement problem, solution records and the from-scratch evaluator."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from ..catalog import DeviceCatalog, default_catalog
from ..delay import DelayConstants, DelayReport, QueueLookup, SaturationError, build_lookups, delay_report
from ..power import (
    FlowSet,
    PowerBreakdown,
    ServerUsage,
    capacity_violations,
    derive_flows,
    derive_usage,
    total_power,
)
from ..topology import LAYER_RANK, Layer, NodeId, NodeKind, Topology, build_reference

Pair = Tuple[NodeId, NodeId]


class InfeasibleError(ValueError):
    """No feasible placement; ``report`` lists the binding constraints."""

    def __init__(self, message: str, report: Sequence[str] = ()):
        super().__init__(message)
        self.report = list(report)


class UnsupportedError(NotImplementedError):
    pass


@dataclass(frozen=True)
class TaskRequest:
    source: NodeId
    cpu: float  # MIPS
    traffic: float  # Mbps

    def __post_init__(self):
        if not self.cpu > 0:
            raise ValueError("task cpu demand must be > 0")
        if not self.traffic > 0:
            raise ValueError("task traffic must be > 0")

    @classmethod
    def from_traffic(cls, source: NodeId, traffic: float, catalog: Optional[DeviceCatalog] = None):
        catalog = catalog or default_catalog()
        return cls(source, catalog.cpu_demand(traffic), traffic)


@dataclass(frozen=True)
class Weights:
    power: float = 1.0
    propagation: float = 0.0  # W per second of propagation delay
    queuing: float = 0.0  # W per second of queuing delay

    def __post_init__(self):
        for name in ("power", "propagation", "queuing"):
            v = getattr(self, name)
            if not v >= 0 or math.isinf(v):
                raise ValueError(f"weight {name} must be finite and >= 0")

    def scaled(self, k: float) -> "Weights":
        return Weights(self.power * k, self.propagation * k, self.queuing * k)

    @classmethod
    def parse(cls, text: str) -> "Weights":
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError("weights must be given as a,b,g")
        return cls(*(float(p) for p in parts))


class ObjectiveCase(Enum):
    POWER = 1
    PROPAGATION = 2
    POWER_PROPAGATION = 3
    QUEUING = 4
    POWER_QUEUING = 5
    POWER_PROPAGATION_QUEUING = 6

    @property
    def uses(self) -> Tuple[bool, bool, bool]:
        return {
            1: (True, False, False),
            2: (False, True, False),
            3: (True, True, False),
            4: (False, False, True),
            5: (True, False, True),
            6: (True, True, True),
        }[self.value]

    @classmethod
    def parse(cls, text) -> "ObjectiveCase":
        if isinstance(text, cls):
            return text
        s = str(text).strip()
        if s.isdigit():
            return cls(int(s))
        return cls[s.upper().replace("-", "_")]


SERVER_POLICIES = ("auto", "minimal", "all")


@dataclass(frozen=True)
class PlacementProblem:
    topology: Topology
    catalog: DeviceCatalog
    tasks: Tuple[TaskRequest, ...]
    weights: Weights = Weights()
    split_limit: int = 1
    delay: DelayConstants = DelayConstants()
    # auto: every server on at active sites when power carries no weight
    server_policy: str = "auto"
    exclude: frozenset = frozenset()  # destinations that may not host work

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(sorted(self.tasks, key=lambda t: t.source)))
        object.__setattr__(self, "exclude", frozenset(self.exclude))
        if not isinstance(self.split_limit, int) or self.split_limit < 1:
            raise ValueError("split limit must be an integer >= 1")
        if self.server_policy not in SERVER_POLICIES:
            raise ValueError(f"server policy must be one of {SERVER_POLICIES}")
        seen = set()
        for t in self.tasks:
            if t.source not in self.topology or self.topology.node(t.source).kind != NodeKind.IOT:
                raise ValueError(f"task source {t.source} is not an IoT node")
            if t.source in seen:
                raise ValueError(f"duplicate task source {t.source}")
            seen.add(t.source)

    @property
    def sources(self) -> List[NodeId]:
        return [t.source for t in self.tasks]

    @property
    def destinations(self) -> List[NodeId]:
        return [d for d in self.topology.processing_nodes if d not in self.exclude]

    @property
    def traffic(self) -> Dict[NodeId, float]:
        return {t.source: t.traffic for t in self.tasks}

    def task(self, source: NodeId) -> TaskRequest:
        for t in self.tasks:
            if t.source == source:
                return t
        raise KeyError(source)

    @property
    def effective_policy(self) -> str:
        if self.server_policy != "auto":
            return self.server_policy
        return "all" if self.weights.power == 0 else "minimal"

    def lookups(self) -> Dict[float, QueueLookup]:
        return build_lookups([t.traffic for t in self.tasks], self.delay) if self.tasks else {}

    def with_weights(self, weights: Weights) -> "PlacementProblem":
        return replace(self, weights=weights)

    def tie_key(self, node_id: NodeId) -> Tuple[int, int]:
        return (LAYER_RANK[self.topology.node(node_id).layer], node_id)


@dataclass
class PlacementSolution:
    assignment: Dict[Pair, float]  # (source, destination) -> MIPS
    flows: FlowSet
    usage: ServerUsage
    power: PowerBreakdown
    delays: DelayReport
    weights: Weights
    objective: float
    status: str = "optimal"
    explored: int = 0  # search nodes, when produced by a solver

    @property
    def destinations(self) -> Dict[NodeId, List[NodeId]]:
        out: Dict[NodeId, List[NodeId]] = {}
        for (s, d) in sorted(self.assignment):
            out.setdefault(s, []).append(d)
        return out

    def layer_mips(self, topology: Topology) -> Dict[Layer, float]:
        shares = {layer: 0.0 for layer in Layer}
        for (_, d), v in self.assignment.items():
            shares[topology.node(d).layer] += v
        return shares

    def variable_values(self, problem: PlacementProblem) -> Dict[str, float]:
        from .milp import solution_values

        return solution_values(problem, self)

    def to_dict(self, problem: Optional[PlacementProblem] = None) -> dict:
        doc = {
            "status": self.status,
            "objective": self.objective,
            "weights": _weights_dict(self.weights),
            "assignment": [
                {"source": s, "destination": d, "mips": v} for (s, d), v in sorted(self.assignment.items())
            ],
            "servers": {str(k): v for k, v in sorted(self.usage.servers.items())},
            "power": self.power.as_record(),
            "delay": self.delays.as_record(),
        }
        if problem is not None:
            doc["problem"] = problem_to_dict(problem)
            doc["variables"] = self.variable_values(problem)
        return doc

    def to_json(self, problem: Optional[PlacementProblem] = None) -> str:
        return json.dumps(self.to_dict(problem), indent=2, sort_keys=True)


def _weights_dict(w: Weights) -> dict:
    return {"power": w.power, "propagation": w.propagation, "queuing": w.queuing}


def problem_to_dict(problem: PlacementProblem) -> dict:
    return {
        "tasks": [{"source": t.source, "cpu": t.cpu, "traffic": t.traffic} for t in problem.tasks],
        "weights": _weights_dict(problem.weights),
        "split_limit": problem.split_limit,
        "server_policy": problem.server_policy,
        "exclude": sorted(problem.exclude),
    }


def problem_from_dict(doc: Mapping, topology: Topology, catalog: DeviceCatalog, delay=None) -> PlacementProblem:
    w = doc.get("weights", {})
    return PlacementProblem(
        topology=topology,
        catalog=catalog,
        tasks=tuple(TaskRequest(int(t["source"]), float(t["cpu"]), float(t["traffic"])) for t in doc["tasks"]),
        weights=Weights(w.get("power", 1.0), w.get("propagation", 0.0), w.get("queuing", 0.0)),
        split_limit=int(doc.get("split_limit", 1)),
        delay=delay or DelayConstants(),
        server_policy=doc.get("server_policy", "auto"),
        exclude=frozenset(doc.get("exclude", ())),
    )


def solution_from_dict(doc: Mapping, problem: PlacementProblem) -> PlacementSolution:
    """Rebuild a solution by re-evaluating its assignment."""
    placement = {(int(a["source"]), int(a["destination"])): float(a["mips"]) for a in doc["assignment"]}
    return evaluate(problem, placement)


def evaluate(
    problem: PlacementProblem, placement: Mapping[Pair, float], check: bool = True
) -> PlacementSolution:
    """Derive flows, usage, power and delay from scratch for an assignment."""
    topo, cat = problem.topology, problem.catalog
    flows = derive_flows(topo, problem.traffic, placement)
    usage = derive_usage(topo, flows, cat, problem.effective_policy)
    if check:
        problems = capacity_violations(topo, flows, usage, cat)
        for t in problem.tasks:
            got = sum(v for (s, _), v in flows.assigned.items() if s == t.source)
            if abs(got - t.cpu) > 1e-6 * max(1.0, t.cpu):
                problems.append(f"source {t.source}: assigned {got:g} of {t.cpu:g} MIPS")
            used = sum(1 for (s, _) in flows.assigned if s == t.source)
            if used > problem.split_limit:
                problems.append(f"source {t.source}: split across {used} > {problem.split_limit} nodes")
        for (_, d) in flows.assigned:
            if d in problem.exclude:
                problems.append(f"node {d} is excluded")
        if problems:
            raise InfeasibleError("placement violates capacity limits", problems)
    power = total_power(topo, flows, usage, cat)
    try:
        delays = delay_report(
            topo, flows.assigned.keys(), flows.arrivals, problem.delay, demands=len(problem.tasks)
        )
    except SaturationError as exc:
        raise InfeasibleError("placement saturates a queue", [str(exc)]) from None
    w = problem.weights
    objective = w.power * power.total
    if w.propagation:
        objective += w.propagation * delays.total_propagation
    if w.queuing:
        objective += w.queuing * delays.total_queuing
    return PlacementSolution(dict(flows.assigned), flows, usage, power, delays, w, objective)


def dc_nodes(problem: PlacementProblem) -> List[NodeId]:
    return [n for n in problem.topology.of_kind(NodeKind.CLOUD_DC) if n not in problem.exclude]


def baseline_cloud(problem: PlacementProblem) -> PlacementSolution:
    """Every task processed at the cloud DC."""
    dcs = dc_nodes(problem)
    if not dcs:
        raise InfeasibleError("no cloud DC reachable")
    dc = dcs[0]
    sol = evaluate(problem, {(t.source, dc): t.cpu for t in problem.tasks})
    sol.status = "baseline"
    return sol


def case_weights(problem: PlacementProblem, case: ObjectiveCase) -> Weights:
    """Default weights: delay terms scaled to the baseline power of the instance."""
    use_p, use_r, use_q = case.uses
    if not problem.tasks:
        return Weights(1.0 if use_p else 0.0, 1.0 if use_r else 0.0, 1.0 if use_q else 0.0)
    if not (use_r or use_q):
        return Weights(1.0, 0.0, 0.0)
    base = baseline_cloud(problem)
    power = base.power.total
    r, q = base.delays.total_propagation, base.delays.total_queuing
    return Weights(
        1.0 if use_p else 0.0,
        power / r if use_r and r > 0 else 0.0,
        power / q if use_q and q > 0 else 0.0,
    )
