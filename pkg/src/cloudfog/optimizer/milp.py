"""Linear model of the placement problem and its evaluation at a point."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping

from ..topology import NodeKind, route
from .problem import InfeasibleError, PlacementProblem, PlacementSolution, UnsupportedError

CONTINUOUS, BINARY, INTEGER = "C", "B", "I"
INF = math.inf
# delay variables are expressed in microseconds so that solver feasibility
# tolerances (~1e-7) stay well below the smallest delay differences
DELAY_UNIT = 1e-6


@dataclass
class Variable:
    name: str
    kind: str = CONTINUOUS
    lb: float = 0.0
    ub: float = INF


@dataclass
class Row:
    name: str
    coefs: Dict[str, float]
    sense: str  # "<=", ">=", "="
    rhs: float = 0.0

    def activity(self, values: Mapping[str, float]) -> float:
        return math.fsum(c * values.get(v, 0.0) for v, c in self.coefs.items())

    def violation(self, values: Mapping[str, float]) -> float:
        lhs = self.activity(values)
        if self.sense == "<=":
            return max(0.0, lhs - self.rhs)
        if self.sense == ">=":
            return max(0.0, self.rhs - lhs)
        return abs(lhs - self.rhs)


@dataclass
class MilpModel:
    name: str = "placement"
    variables: Dict[str, Variable] = field(default_factory=dict)
    rows: List[Row] = field(default_factory=list)
    objective: Dict[str, float] = field(default_factory=dict)

    def var(self, name: str, kind: str = CONTINUOUS, lb: float = 0.0, ub: float = INF) -> str:
        if name in self.variables:
            raise ValueError(f"duplicate variable {name}")
        if kind == BINARY:
            lb, ub = 0.0, 1.0
        self.variables[name] = Variable(name, kind, float(lb), float(ub))
        return name

    def row(self, name: str, coefs: Mapping[str, float], sense: str, rhs: float = 0.0) -> Row:
        clean: Dict[str, float] = {}
        for v, c in coefs.items():
            if v not in self.variables:
                raise KeyError(f"row {name} references unknown variable {v}")
            if c:
                clean[v] = clean.get(v, 0.0) + c
        r = Row(name, clean, sense, float(rhs))
        if not clean:
            # constant row: keep nothing if it holds, otherwise the model is infeasible
            if r.violation({}) > 0:
                raise InfeasibleError(f"row {name} cannot be satisfied", [name])
            return r
        self.rows.append(r)
        return r

    def cost(self, name: str, coef: float):
        if coef:
            if name not in self.variables:
                raise KeyError(f"objective references unknown variable {name}")
            self.objective[name] = self.objective.get(name, 0.0) + coef

    def objective_value(self, values: Mapping[str, float]) -> float:
        return math.fsum(c * values.get(v, 0.0) for v, c in self.objective.items())

    def counts(self) -> Dict[str, int]:
        out = {CONTINUOUS: 0, BINARY: 0, INTEGER: 0}
        for v in self.variables.values():
            out[v.kind] += 1
        return {"continuous": out[CONTINUOUS], "binary": out[BINARY], "integer": out[INTEGER], "rows": len(self.rows)}

    def violations(self, values: Mapping[str, float], tol: float = 1e-6) -> List[str]:
        out = []
        for name in values:
            if name not in self.variables:
                out.append(f"unknown variable {name}")
        for v in self.variables.values():
            x = values.get(v.name, 0.0)
            if x < v.lb - tol or x > v.ub + tol:
                out.append(f"bound {v.name}: {x:g} outside [{v.lb:g}, {v.ub:g}]")
            if v.kind in (BINARY, INTEGER) and abs(x - round(x)) > tol:
                out.append(f"integrality {v.name}: {x:g}")
        for r in self.rows:
            gap = r.violation(values)
            if gap > tol:
                out.append(f"{r.name}: violated by {gap:.6g} (lhs {r.activity(values):.9g} {r.sense} {r.rhs:.9g})")
        return out


# Variable names ----------------------------------------------------------------

def v_mips(s, d):
    return f"mips_s{s}_d{d}"


def v_place(s, d):
    return f"place_s{s}_d{d}"


def v_site_on(d):
    return f"site_on_d{d}"


def v_pair_mbps(s, d):
    return f"pair_mbps_s{s}_d{d}"


def v_arc_mbps(s, d, m, n):
    return f"arc_mbps_s{s}_d{d}_m{m}_n{n}"


def v_load(m):
    return f"load_m{m}"


def v_busy(m):
    return f"busy_m{m}"


def v_lan_mbps(d):
    return f"lan_mbps_d{d}"


def v_servers(d):
    return f"servers_d{d}"


def v_waves(m, n):
    return f"waves_m{m}_n{n}"


def v_fibres(m, n):
    return f"fibres_m{m}_n{n}"


def v_ports(m):
    return f"ports_m{m}"


def v_uses(s, d, m, n):
    return f"uses_s{s}_d{d}_m{m}_n{n}"


def v_prop(s, d):
    return f"prop_s{s}_d{d}"


def v_arrive(m):
    return f"arrive_m{m}"


def v_level(m, a):
    return f"level_m{m}_a{a}"


def v_node_queue(m):
    return f"node_queue_m{m}"


def v_hop_queue(s, d, m, n):
    return f"hop_queue_s{s}_d{d}_m{m}_n{n}"


def v_queue(s, d):
    return f"queue_s{s}_d{d}"


# Formulation -------------------------------------------------------------------

def _queued_nodes(problem: PlacementProblem):
    rates = problem.delay.service_rates
    return [n.id for n in problem.topology.nodes if n.kind in rates and n.id not in set(problem.sources)]


def _mandatory_saturation(problem: PlacementProblem, lookups) -> List[str]:
    """Queues that every capacity-feasible placement pushes past saturation."""
    topo, cat = problem.topology, problem.catalog
    forced: Dict[int, float] = {}
    for t in problem.tasks:
        options = []
        for d in problem.destinations:
            node = topo.node(d)
            cap = cat.proc(node.processor).capacity_mips
            if node.max_servers is not None and t.cpu > cap * node.max_servers + 1e-9:
                continue
            options.append(set(h.b for h in route(topo, t.source, d)))
        if not options:
            continue
        for m in set.intersection(*options):
            forced[m] = forced.get(m, 0.0) + t.traffic
    out = []
    for m, x in sorted(forced.items()):
        rate = problem.delay.service_rates.get(topo.node(m).kind)
        if rate is None or m in problem.sources:
            continue
        if problem.delay.packets_per_second(x) >= problem.delay.service_rate(topo.node(m).kind):
            out.append(f"node {m}: unavoidable aggregate {x:g} Mbps saturates its queue")
    return out


def formulate(problem: PlacementProblem) -> MilpModel:
    topo, cat, w = problem.topology, problem.catalog, problem.weights
    pue = cat.pue
    tasks = problem.tasks
    sources = problem.sources
    dests = problem.destinations
    traffic = problem.traffic
    cpu = {t.source: t.cpu for t in tasks}
    big_mips = sum(cpu.values()) or 1.0
    big_traffic = sum(traffic.values()) or 1.0
    min_traffic = min(traffic.values()) if traffic else 1.0
    wave_mbps = cat.wavelength_rate * 1000.0
    arcs = topo.arcs()
    core_arcs = [a for a in arcs if a.core]
    core_nodes = topo.of_kind(NodeKind.CORE)
    remote = [(s, d) for s in sources for d in dests if s != d]

    # Bilinear amplifier/regenerator terms collapse when one fibre (and one
    # wavelength where regenerators exist) always suffices.
    if core_arcs and big_traffic > cat.wavelengths_per_fiber * wave_mbps + 1e-9:
        raise UnsupportedError("total traffic may exceed one fibre on a core link")
    if any(a.regenerators for a in core_arcs) and big_traffic > wave_mbps + 1e-9:
        raise UnsupportedError("total traffic may exceed one wavelength on a regenerated core link")

    use_r = w.propagation > 0
    use_q = w.queuing > 0
    lookups = problem.lookups() if use_q else {}
    # tightest valid bound on a per-node queue delay, in model units
    big_delay = max((max(t.delays) for t in lookups.values() if t.delays), default=DELAY_UNIT) / DELAY_UNIT
    if use_q:
        bad = _mandatory_saturation(problem, lookups)
        if bad:
            raise InfeasibleError("queue saturated on a mandatory route", bad)

    m = MilpModel()

    for s in sources:
        for d in dests:
            m.var(v_mips(s, d), ub=cpu[s])
            m.var(v_place(s, d), BINARY)
    for d in dests:
        m.var(v_site_on(d), BINARY)
    for s, d in remote:
        m.var(v_pair_mbps(s, d), ub=traffic[s])
        for a in arcs:
            m.var(v_arc_mbps(s, d, a.a, a.b), ub=traffic[s])
    for node in topo.nodes:
        m.var(v_load(node.id))
        m.var(v_busy(node.id), BINARY)
    for d in dests:
        m.var(v_lan_mbps(d))
        m.var(v_servers(d), INTEGER, 0, INF if topo.node(d).max_servers is None else topo.node(d).max_servers)
    for a in core_arcs:
        m.var(v_waves(a.a, a.b), INTEGER)
        m.var(v_fibres(a.a, a.b), INTEGER)
    for c in core_nodes:
        m.var(v_ports(c), INTEGER)

    # flow conservation
    for s, d in remote:
        for node in topo.nodes:
            k = node.id
            coefs = {}
            for n in topo.neighbors(k):
                coefs[v_arc_mbps(s, d, k, n)] = coefs.get(v_arc_mbps(s, d, k, n), 0.0) + 1.0
                coefs[v_arc_mbps(s, d, n, k)] = coefs.get(v_arc_mbps(s, d, n, k), 0.0) - 1.0
            if k == s:
                coefs[v_pair_mbps(s, d)] = -1.0
            elif k == d:
                coefs[v_pair_mbps(s, d)] = 1.0
            m.row(f"flow_s{s}_d{d}_m{k}", coefs, "=", 0.0)
    # demand met
    for s in sources:
        m.row(f"demand_s{s}", {v_mips(s, d): 1.0 for d in dests}, "=", cpu[s])
    # assignment indicators
    for s in sources:
        for d in dests:
            m.row(f"assign_lo_s{s}_d{d}", {v_mips(s, d): 1.0, v_place(s, d): -1.0}, ">=", 0.0)
            m.row(f"assign_hi_s{s}_d{d}", {v_mips(s, d): 1.0, v_place(s, d): -big_mips}, "<=", 0.0)
    # split limit
    for s in sources:
        m.row(f"split_s{s}", {v_place(s, d): 1.0 for d in dests}, "<=", problem.split_limit)
    # server limit, written as a row for reporting
    for d in dests:
        vd = topo.node(d).max_servers
        if vd is not None:
            m.row(f"servers_d{d}", {v_servers(d): 1.0}, "<=", vd)
    # capacity coupling: assigned MIPS fit the active servers
    for d in dests:
        cap = cat.proc(topo.node(d).processor).capacity_mips
        coefs = {v_mips(s, d): 1.0 for s in sources}
        coefs[v_servers(d)] = -cap
        m.row(f"cap_d{d}", coefs, "<=", 0.0)
    # node activation
    n_src = max(1, len(sources))
    for d in dests:
        coefs = {v_place(s, d): 1.0 for s in sources}
        m.row(f"active_lo_d{d}", {**coefs, v_site_on(d): -1.0}, ">=", 0.0)
        m.row(f"active_hi_d{d}", {**coefs, v_site_on(d): -float(n_src)}, "<=", 0.0)
    # node traffic
    src_set = set(sources)
    for node in topo.nodes:
        k = node.id
        coefs = {v_load(k): 1.0}
        if node.kind == NodeKind.CORE:
            for s, d in remote:
                for n in topo.neighbors(k):
                    if topo.arc(k, n).core:
                        coefs[v_arc_mbps(s, d, k, n)] = -1.0
            name = f"core_traffic_m{k}"
        else:
            for s, d in remote:
                if s == k:
                    for n in topo.neighbors(k):
                        coefs[v_arc_mbps(s, d, k, n)] = -1.0
                else:
                    for n in topo.neighbors(k):
                        coefs[v_arc_mbps(s, d, n, k)] = -1.0
            name = f"src_traffic_m{k}" if k in src_set else f"node_traffic_m{k}"
        m.row(name, coefs, "=", 0.0)
    # traffic destined for processing at d
    for d in dests:
        m.row(f"lan_on_d{d}", {v_lan_mbps(d): 1.0, v_site_on(d): -big_traffic}, "<=", 0.0)
        m.row(f"lan_le_load_d{d}", {v_lan_mbps(d): 1.0, v_load(d): -1.0}, "<=", 0.0)
        coefs = {v_lan_mbps(d): 1.0, v_site_on(d): -big_traffic}
        for s in sources:
            if s != d:
                coefs[v_pair_mbps(s, d)] = -1.0
        m.row(f"lan_lo_d{d}", coefs, ">=", -big_traffic)
    # network activation
    for node in topo.nodes:
        k = node.id
        m.row(f"busy_lo_m{k}", {v_load(k): 1.0, v_busy(k): -min_traffic}, ">=", 0.0)
        m.row(f"busy_hi_m{k}", {v_load(k): 1.0, v_busy(k): -big_traffic}, "<=", 0.0)
    # demand traffic follows the assignment
    for s, d in remote:
        m.row(f"pair_traffic_s{s}_d{d}", {v_pair_mbps(s, d): 1.0, v_place(s, d): -traffic[s]}, "=", 0.0)
    # link capacity outside the core
    for a in arcs:
        if a.core:
            continue
        m.row(f"link_cap_m{a.a}_n{a.b}", {v_arc_mbps(s, d, a.a, a.b): 1.0 for s, d in remote}, "<=", a.capacity)
    # IP/WDM ports, wavelengths and fibres
    for c in core_nodes:
        m.row(f"agg_ports_m{c}", {v_ports(c): wave_mbps, v_load(c): -1.0}, ">=", 0.0)
    for a in core_arcs:
        coefs = {v_arc_mbps(s, d, a.a, a.b): 1.0 for s, d in remote}
        coefs[v_waves(a.a, a.b)] = -wave_mbps
        m.row(f"wavelengths_m{a.a}_n{a.b}", coefs, "<=", 0.0)
        m.row(
            f"fibres_m{a.a}_n{a.b}",
            {v_waves(a.a, a.b): 1.0, v_fibres(a.a, a.b): -float(cat.wavelengths_per_fiber)},
            "<=",
            0.0,
        )

    # Power objective ---------------------------------------------------------
    al = w.power
    if al:
        def dev(k, role, factor):
            spec = cat.net(role)
            m.cost(v_load(k), al * factor * spec.energy_per_bit / 1000.0)
            m.cost(v_busy(k), al * factor * spec.profile.attributed_idle)

        for node in topo.nodes:
            k, kind = node.id, node.kind
            if kind == NodeKind.IOT:
                dev(k, "iot_wifi", 1.0)
            elif kind == NodeKind.AP:
                dev(k, "ap", 1.0)
            elif kind == NodeKind.ONU:
                dev(k, "onu", pue.cpe)
            elif kind == NodeKind.OLT:
                dev(k, "olt", pue.access)
            elif kind == NodeKind.METRO_ROUTER:
                dev(k, "metro_router", pue.metro * cat.net("metro_router").redundancy)
            elif kind == NodeKind.METRO_SWITCH:
                dev(k, "metro_switch", pue.metro)
            elif kind == NodeKind.CORE:
                router, trans = cat.net("core_router_port"), cat.net("transponder")
                osw, edfa, regen = cat.net("optical_switch"), cat.net("edfa"), cat.net("regenerator")
                pc = al * pue.core
                m.cost(v_load(k), pc * (router.energy_per_bit + trans.energy_per_bit + osw.energy_per_bit) / 1000.0)
                m.cost(v_ports(k), pc * router.profile.attributed_idle)
                m.cost(v_busy(k), pc * osw.profile.attributed_idle)
                for n in topo.neighbors(k):
                    a = topo.arc(k, n)
                    if not a.core:
                        continue
                    m.cost(v_waves(k, n), pc * (router.profile.attributed_idle + trans.profile.attributed_idle))
                    m.cost(v_fibres(k, n), pc * edfa.profile.attributed_idle * a.edfas)
                    m.cost(v_waves(k, n), pc * regen.profile.attributed_idle * a.regenerators)
                    per_mbps = (edfa.energy_per_bit * a.edfas + regen.energy_per_bit * a.regenerators) / 1000.0
                    for s, d in remote:
                        m.cost(v_arc_mbps(s, d, k, n), pc * per_mbps)
        proc_pue = {"iot": 1.0, "cpe": 1.0, "access_fog": pue.access, "metro_fog": pue.metro, "dc": pue.dc}
        lan_roles = {
            "access_fog": ("access_fog_router", "access_fog_switch", pue.access),
            "metro_fog": ("metro_fog_router", "metro_fog_switch", pue.metro),
            "dc": ("dc_lan_router", "dc_lan_switch", pue.dc),
        }
        for d in dests:
            role = topo.node(d).processor
            spec = cat.proc(role)
            f = al * proc_pue[role]
            for s in sources:
                m.cost(v_mips(s, d), f * spec.energy_per_mips)
            m.cost(v_servers(d), f * spec.profile.idle_power)
            if role in lan_roles:
                r_role, s_role, lp = lan_roles[role]
                r_spec, s_spec = cat.net(r_role), cat.net(s_role)
                m.cost(v_lan_mbps(d), al * lp * (r_spec.energy_per_bit + s_spec.energy_per_bit) / 1000.0)
                m.cost(v_site_on(d), al * lp * (r_spec.profile.attributed_idle + s_spec.profile.attributed_idle))

    # Delay blocks ------------------------------------------------------------
    if use_r or use_q:
        for s, d in remote:
            for a in arcs:
                m.var(v_uses(s, d, a.a, a.b), BINARY)
                # route indicator follows the flow
                m.row(
                    f"route_lo_s{s}_d{d}_m{a.a}_n{a.b}",
                    {v_arc_mbps(s, d, a.a, a.b): 1.0, v_uses(s, d, a.a, a.b): -min(1.0, traffic[s])},
                    ">=",
                    0.0,
                )
                m.row(
                    f"route_hi_s{s}_d{d}_m{a.a}_n{a.b}",
                    {v_arc_mbps(s, d, a.a, a.b): 1.0, v_uses(s, d, a.a, a.b): -big_traffic},
                    "<=",
                    0.0,
                )
    if use_r:
        c = problem.delay.speed_of_light
        ri = problem.delay.refractive_index_ratio
        m.var("prop_sum")
        total = {"prop_sum": 1.0}
        for s, d in remote:
            m.var(v_prop(s, d))
            coefs = {v_prop(s, d): 1.0}
            for a in arcs:
                speed = c if a.medium == "wireless" else ri * c
                coefs[v_uses(s, d, a.a, a.b)] = -a.distance / speed / DELAY_UNIT
            m.row(f"prop_pair_s{s}_d{d}", coefs, "=", 0.0)
            total[v_prop(s, d)] = -1.0
        m.row("prop_total", total, "=", 0.0)
        m.cost("prop_sum", w.propagation * DELAY_UNIT)
    if use_q:
        queued = _queued_nodes(problem)
        for k in queued:
            kind = topo.node(k).kind
            table = lookups[problem.delay.service_rates[kind]]
            m.var(v_arrive(k))
            m.var(v_node_queue(k), ub=big_delay)
            coefs = {v_arrive(k): -1.0}
            for s, d in remote:
                if s == k:
                    continue
                for n in topo.neighbors(k):
                    coefs[v_arc_mbps(s, d, n, k)] = 1.0
            m.row(f"arrivals_m{k}", coefs, "=", 0.0)
            ind = {}
            qrow = {v_node_queue(k): -1.0}
            for i, x in enumerate(table.traffic):
                h = m.var(v_level(k, i), BINARY)
                ind[h] = x
                qrow[h] = table.delays[i] / DELAY_UNIT
            m.row(f"rate_pick_m{k}", {**ind, v_arrive(k): -1.0}, "=", 0.0)
            m.row(f"rate_one_m{k}", {h: 1.0 for h in ind}, "<=", 1.0)
            m.row(f"queue_delay_m{k}", qrow, "=", 0.0)
        qset = set(queued)
        m.var("queue_sum")
        total = {"queue_sum": 1.0}
        for s, d in remote:
            m.var(v_queue(s, d))
            qsd = {v_queue(s, d): 1.0}
            for a in arcs:
                if a.b not in qset:
                    continue
                q, z = v_hop_queue(s, d, a.a, a.b), v_uses(s, d, a.a, a.b)
                m.var(q, ub=big_delay)
                m.row(f"qhop_on_s{s}_d{d}_m{a.a}_n{a.b}", {q: 1.0, z: -big_delay}, "<=", 0.0)
                m.row(f"qhop_hi_s{s}_d{d}_m{a.a}_n{a.b}", {q: 1.0, v_node_queue(a.b): -1.0}, "<=", 0.0)
                m.row(f"qhop_lo_s{s}_d{d}_m{a.a}_n{a.b}", {q: 1.0, v_node_queue(a.b): -1.0, z: -big_delay}, ">=", -big_delay)
                qsd[q] = -1.0
            m.row(f"queue_pair_s{s}_d{d}", qsd, "=", 0.0)
            total[v_queue(s, d)] = -1.0
        m.row("queue_total", total, "=", 0.0)
        m.cost("queue_sum", w.queuing * DELAY_UNIT)
    return m


def solution_values(problem: PlacementProblem, sol: PlacementSolution) -> Dict[str, float]:
    """Full variable assignment of ``formulate(problem)`` implied by a solution."""
    topo, cat = problem.topology, problem.catalog
    sources, dests = problem.sources, problem.destinations
    flows, usage = sol.flows, sol.usage
    vals: Dict[str, float] = {}
    for (s, d), v in sol.assignment.items():
        vals[v_mips(s, d)] = v
        vals[v_place(s, d)] = 1.0
        vals[v_site_on(d)] = 1.0
    for (s, d), t in flows.pair_traffic.items():
        vals[v_pair_mbps(s, d)] = t
    for (s, d, a, b), t in flows.arc_flows.items():
        vals[v_arc_mbps(s, d, a, b)] = t
    for k, t in flows.node_traffic.items():
        vals[v_load(k)] = t
        vals[v_busy(k)] = 1.0
    for d, t in flows.lan_inflow.items():
        vals[v_lan_mbps(d)] = t
    for d, n in usage.servers.items():
        vals[v_servers(d)] = float(n)
    for (a, b), n in usage.wavelengths.items():
        vals[v_waves(a, b)] = float(n)
    for (a, b), n in usage.fibers.items():
        vals[v_fibres(a, b)] = float(n)
    for k, n in usage.agg_ports.items():
        vals[v_ports(k)] = float(n)
    w = problem.weights
    if w.propagation > 0 or w.queuing > 0:
        for (s, d, a, b) in flows.arc_flows:
            vals[v_uses(s, d, a, b)] = 1.0
    if w.propagation > 0:
        for (s, d), r in sol.delays.propagation.items():
            if s != d:
                vals[v_prop(s, d)] = r / DELAY_UNIT
        vals["prop_sum"] = sol.delays.total_propagation / DELAY_UNIT
    if w.queuing > 0:
        lookups = problem.lookups()
        for k in _queued_nodes(problem):
            arrival = flows.arrivals.get(k, 0.0)
            vals[v_arrive(k)] = arrival
            if arrival > 0:
                table = lookups[problem.delay.service_rates[topo.node(k).kind]]
                i = table.index(arrival)
                vals[v_level(k, i)] = 1.0
                vals[v_node_queue(k)] = table.delays[i] / DELAY_UNIT
        queued = set(_queued_nodes(problem))
        for (s, d, a, b) in flows.arc_flows:
            if b in queued:
                vals[v_hop_queue(s, d, a, b)] = vals.get(v_node_queue(b), 0.0)
        for (s, d), q in sol.delays.queuing.items():
            if s != d:
                vals[v_queue(s, d)] = q / DELAY_UNIT
        vals["queue_sum"] = sol.delays.total_queuing / DELAY_UNIT
    # zeros are implied
    return {k: v for k, v in sorted(vals.items()) if v != 0.0}
