"""Exact branch-and-bound placement and the exhaustive oracle.

Routes are unique, so a placement is fully described by one destination per
task.  The search keeps per-resource aggregates (node traffic, arrivals,
processing load) and re-prices only the resources a task touches.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from ..delay import SaturationError, propagation_delay
from ..power import ceil_count
from ..topology import NodeKind, route
from .problem import (
    InfeasibleError,
    PlacementProblem,
    PlacementSolution,
    UnsupportedError,
    evaluate,
)

TIE_RTOL = 1e-9
CAP_TOL = 1e-9


def _clean(x: float) -> float:
    # aggregates are sums of demands >= 1e-6; anything smaller is cancellation dust
    return 0.0 if abs(x) < 1e-7 else x


def _tie_tol(best: float) -> float:
    return TIE_RTOL * max(1.0, abs(best))


@dataclass
class _Option:
    dest: int
    rank: int  # position in the global tie-break order
    external: bool  # not one of the task's class sources
    nodes: Tuple[Tuple[int, float, float, int], ...]  # (node, dL, d_arrival, d_count)
    core_arcs: Tuple[Tuple[int, int], ...]
    arcs: Tuple[Tuple[int, int], ...]
    prop: float
    static_lb: float  # linear part of the marginal cost
    fixed: tuple  # (resource, fixed cost, max sharers) paid on first use
    queued: Tuple[int, ...]  # queued nodes entered


class _Pricer:
    """Incremental objective for a partial placement."""

    def __init__(self, problem: PlacementProblem):
        self.p = problem
        topo, cat, w = problem.topology, problem.catalog, problem.weights
        self.topo, self.cat, self.w = topo, cat, w
        self.w_power, self.w_prop, self.w_queue = w.power, w.propagation, w.queuing
        self.policy = problem.effective_policy
        pue = cat.pue
        n = max(x.id for x in topo.nodes) + 1 if topo.nodes else 0
        self.load = [0.0] * n
        self.arr = [0.0] * n
        self.cnt = [0] * n
        self.arc_t: Dict[Tuple[int, int], float] = {}
        self.mips: Dict[int, float] = {}
        self.lan_in: Dict[int, float] = {}
        self.node_cost = [0.0] * n
        self.proc_cost: Dict[int, float] = {}
        self.total = 0.0

        # per-kind linear device parameters: (factor, W per Mbps, idle)
        self.dev = {}
        roles = {
            NodeKind.IOT: ("iot_wifi", 1.0),
            NodeKind.AP: ("ap", 1.0),
            NodeKind.ONU: ("onu", pue.cpe),
            NodeKind.OLT: ("olt", pue.access),
            NodeKind.METRO_ROUTER: ("metro_router", pue.metro * cat.net("metro_router").redundancy),
            NodeKind.METRO_SWITCH: ("metro_switch", pue.metro),
        }
        for kind, (role, f) in roles.items():
            spec = cat.net(role)
            self.dev[kind] = (f, spec.energy_per_bit / 1000.0, spec.profile.attributed_idle)
        self.kind = [None] * n
        for x in topo.nodes:
            self.kind[x.id] = x.kind
        self.service = [None] * n
        srcs = set(problem.sources)
        for x in topo.nodes:
            if x.id not in srcs:
                self.service[x.id] = problem.delay.service_rate(x.kind)
        self.pkt = problem.delay.packet_size / 1e6  # Mbps -> pkt/s divisor

        r, t = cat.net("core_router_port"), cat.net("transponder")
        o, e, g = cat.net("optical_switch"), cat.net("edfa"), cat.net("regenerator")
        self.core = dict(
            pue=pue.core,
            slope=(r.energy_per_bit + t.energy_per_bit + o.energy_per_bit) / 1000.0,
            idle_port=r.profile.attributed_idle,
            idle_trans=t.profile.attributed_idle,
            idle_switch=o.profile.attributed_idle,
            edfa_slope=e.energy_per_bit / 1000.0,
            idle_edfa=e.profile.attributed_idle,
            regen_slope=g.energy_per_bit / 1000.0,
            idle_regen=g.profile.attributed_idle,
            rate=cat.wavelength_rate * 1000.0,
            wmax=cat.wavelengths_per_fiber,
        )
        self.core_arcs_of = {
            x.id: [(x.id, m) for m in topo.neighbors(x.id) if topo.arc(x.id, m).core]
            for x in topo.nodes
            if x.kind == NodeKind.CORE
        }

        proc_pue = {"iot": 1.0, "cpe": 1.0, "access_fog": pue.access, "metro_fog": pue.metro, "dc": pue.dc}
        lan = {
            "access_fog": ("access_fog_router", "access_fog_switch", pue.access),
            "metro_fog": ("metro_fog_router", "metro_fog_switch", pue.metro),
            "dc": ("dc_lan_router", "dc_lan_switch", pue.dc),
        }
        self.proc = {}
        for d in problem.destinations:
            node = topo.node(d)
            spec = cat.proc(node.processor)
            lan_slope = lan_idle = 0.0
            lan_pue = 1.0
            if node.processor in lan:
                rr, ss, lan_pue = lan[node.processor]
                lan_slope = (cat.net(rr).energy_per_bit + cat.net(ss).energy_per_bit) / 1000.0
                lan_idle = cat.net(rr).profile.attributed_idle + cat.net(ss).profile.attributed_idle
            self.proc[d] = dict(
                pue=proc_pue[node.processor],
                per_mips=spec.energy_per_mips,
                idle=spec.profile.idle_power,
                cap=spec.capacity_mips,
                vd=node.max_servers,
                lan_pue=lan_pue,
                lan_slope=lan_slope,
                lan_idle=lan_idle,
            )

    # pricing ----------------------------------------------------------------
    def servers(self, d: int, load: float) -> int:
        pr = self.proc[d]
        n = max(1, ceil_count(load / pr["cap"]))
        if self.policy == "all" and pr["vd"] is not None:
            n = max(n, pr["vd"])
        return n

    def price_proc(self, d: int) -> float:
        load = self.mips.get(d, 0.0)
        if load <= 0:
            return 0.0
        pr = self.proc[d]
        c = pr["pue"] * (pr["per_mips"] * load + pr["idle"] * self.servers(d, load))
        th = self.lan_in.get(d, 0.0)
        if pr["lan_idle"] or pr["lan_slope"]:
            if th > 0:
                c += pr["lan_pue"] * (pr["lan_slope"] * th + pr["lan_idle"])
        return self.w_power * c

    def price_node(self, m: int) -> float:
        kind = self.kind[m]
        c = 0.0
        if self.w_power:
            load = self.load[m]
            if kind == NodeKind.CORE:
                c = self.w_power * self._core_power(m)
            elif load > 0 and kind in self.dev:
                f, slope, idle = self.dev[kind]
                c = self.w_power * f * (slope * load + idle)
        if self.w_queue and self.cnt[m] > 0 and self.service[m] is not None:
            c += self.w_queue * self.cnt[m] / (self.service[m] - self.arr[m] / self.pkt)
        return c

    def _core_power(self, m: int) -> float:
        k = self.core
        load = self.load[m]
        arcs = self.core_arcs_of[m]
        if load <= 0 and not any(self.arc_t.get(a, 0.0) > 0 for a in arcs):
            return 0.0
        ag = ceil_count(load / k["rate"])
        c = k["slope"] * load + k["idle_port"] * ag + (k["idle_switch"] if load > 0 else 0.0)
        for a in arcs:
            t = self.arc_t.get(a, 0.0)
            if t <= 0:
                continue
            link = self.topo.arc(*a)
            w = ceil_count(t / k["rate"])
            f = ceil_count(w / k["wmax"])
            c += (k["idle_port"] + k["idle_trans"]) * w
            c += k["edfa_slope"] * t * link.edfas * f + k["idle_edfa"] * link.edfas * f
            c += k["regen_slope"] * t * link.regenerators * w + k["idle_regen"] * link.regenerators * w
        return k["pue"] * c

    # state changes ----------------------------------------------------------
    def feasible(self, task, opt: _Option) -> bool:
        pr = self.proc[opt.dest]
        if pr["vd"] is not None and self.mips.get(opt.dest, 0.0) + task.cpu > pr["vd"] * pr["cap"] * (1 + CAP_TOL):
            return False
        mbps = task.traffic
        for a in opt.arcs:
            link = self.topo.arc(*a)
            if not link.core and self.arc_t.get(a, 0.0) + mbps > link.capacity * (1 + CAP_TOL):
                return False
        for m in opt.queued:
            if (self.arr[m] + mbps) / self.pkt >= self.service[m]:
                return False
        return True

    def apply(self, task, opt: _Option, sign: int = 1) -> None:
        mbps = sign * task.traffic
        touched = set()
        for m, dl, da, dc in opt.nodes:
            self.load[m] = _clean(self.load[m] + sign * dl)
            self.arr[m] = _clean(self.arr[m] + sign * da)
            self.cnt[m] += sign * dc
            touched.add(m)
        for a in opt.arcs:
            v = _clean(self.arc_t.get(a, 0.0) + mbps)
            if v == 0.0:
                self.arc_t.pop(a, None)
            else:
                self.arc_t[a] = v
        for a in opt.core_arcs:
            touched.add(a[0])
        for m in touched:
            new = self.price_node(m)
            self.total += new - self.node_cost[m]
            self.node_cost[m] = new
        d = opt.dest
        self.mips[d] = _clean(self.mips.get(d, 0.0) + sign * task.cpu)
        if self.mips[d] == 0.0:
            self.mips.pop(d)
        if d != task.source:
            self.lan_in[d] = _clean(self.lan_in.get(d, 0.0) + mbps)
            if self.lan_in[d] == 0.0:
                self.lan_in.pop(d)
        new = self.price_proc(d)
        self.total += new - self.proc_cost.get(d, 0.0)
        self.proc_cost[d] = new
        self.total += sign * self.w_prop * opt.prop

    def resource_active(self, r: str) -> bool:
        kind, ident = r[0], int(r[1:])
        if kind == "n":
            return self.load[ident] > 0
        return self.mips.get(ident, 0.0) > 0

    def queue_now(self, opt: _Option, mbps: float) -> float:
        q = 0.0
        for m in opt.queued:
            q += 1.0 / (self.service[m] - self.arr[m] / self.pkt)
        return self.w_queue * q


def _options(problem: PlacementProblem, pricer: _Pricer) -> List[List[_Option]]:
    topo = problem.topology
    order = sorted(problem.destinations, key=problem.tie_key)
    rank = {d: i for i, d in enumerate(order)}
    # tasks interchangeable under a swap of their source nodes
    cls = _classes(problem)
    class_sources: Dict[int, set] = {}
    for t, c in zip(problem.tasks, cls):
        class_sources.setdefault(c, set()).add(t.source)
    w_power = pricer.w_power
    out = []
    for t, c in zip(problem.tasks, cls):
        opts = []
        for d in order:
            pr = pricer.proc[d]
            if pr["vd"] is not None and t.cpu > pr["vd"] * pr["cap"] * (1 + CAP_TOL):
                continue
            path = route(topo, t.source, d)
            if any((not h.core) and t.traffic > h.capacity * (1 + CAP_TOL) for h in path):
                continue
            changes: Dict[int, List] = {}
            if path:
                changes[t.source] = [t.traffic, 0.0, 0]
            for h in path:
                e = changes.setdefault(h.b, [0.0, 0.0, 0])
                if topo.node(h.b).kind != NodeKind.CORE:
                    e[0] += t.traffic
                e[1] += t.traffic
                e[2] += 1
                if h.core:
                    changes.setdefault(h.a, [0.0, 0.0, 0])[0] += t.traffic
            nodes = tuple((m, v[0], v[1], v[2]) for m, v in sorted(changes.items()))
            core_arcs = tuple(h.key for h in path if h.core)
            queued = tuple(h.b for h in path if pricer.service[h.b] is not None)
            prop = propagation_delay(path, problem.delay)
            # linear marginal cost and fixed charges
            lin = 0.0
            fixed = []
            for m, dl, _, _ in nodes:
                kind = pricer.kind[m]
                if kind == NodeKind.CORE:
                    k = pricer.core
                    arcs = pricer.core_arcs_of[m]
                    edfa = sum(topo.arc(*a).edfas for a in arcs if a in core_arcs)
                    regen = sum(topo.arc(*a).regenerators for a in arcs if a in core_arcs)
                    if dl > 0:
                        lin += w_power * k["pue"] * (k["slope"] + k["edfa_slope"] * edfa + k["regen_slope"] * regen) * dl
                        fixed.append(
                            (
                                f"n{m}",
                                w_power * k["pue"] * (2 * k["idle_port"] + k["idle_trans"] + k["idle_switch"] + k["idle_edfa"] * edfa + k["idle_regen"] * regen),
                            )
                        )
                elif kind in pricer.dev and dl > 0:
                    f, slope, idle = pricer.dev[kind]
                    lin += w_power * f * slope * dl
                    fixed.append((f"n{m}", w_power * f * idle))
            ppr = pricer.proc[d]
            lin += w_power * ppr["pue"] * ppr["per_mips"] * t.cpu
            n_min = 1
            if pricer.policy == "all" and ppr["vd"] is not None:
                n_min = ppr["vd"]
            pfix = ppr["pue"] * ppr["idle"] * n_min
            if path:
                lin += w_power * ppr["lan_pue"] * ppr["lan_slope"] * t.traffic
                pfix += ppr["lan_pue"] * ppr["lan_idle"]
            fixed.append((f"p{d}", w_power * pfix))
            opts.append(
                _Option(
                    dest=d,
                    rank=rank[d],
                    external=d not in class_sources[c],
                    nodes=nodes,
                    core_arcs=core_arcs,
                    arcs=tuple(h.key for h in path),
                    prop=prop,
                    static_lb=lin + pricer.w_prop * prop,
                    fixed=tuple(x for x in fixed if x[1] > 0),
                    queued=queued,
                )
            )
        out.append(opts)
    _share_limits(problem, pricer, out)
    return out


def _share_limits(problem: PlacementProblem, pricer: _Pricer, options: List[List[_Option]]) -> None:
    """Attach to each fixed charge the most tasks that could ever split idle_trans."""
    users: Dict[str, set] = {}
    for i, opts in enumerate(options):
        for opt in opts:
            for r, _ in opt.fixed:
                users.setdefault(r, set()).add(i)
    tasks = problem.tasks
    sources = {t.source for t in tasks}

    def proc_slots(d: int, who) -> float:
        pr = pricer.proc.get(d)
        if pr is None or pr["vd"] is None or not who:
            return math.inf if pr is not None and who else 0
        smallest = min(tasks[i].cpu for i in who)
        return math.floor(pr["vd"] * pr["cap"] / smallest * (1 + CAP_TOL))

    limit: Dict[str, int] = {}
    for r, who in users.items():
        ident = int(r[1:])
        k = float(len(who))
        if r[0] == "p":
            k = min(k, proc_slots(ident, who))
        elif pricer.kind[ident] == NodeKind.IOT:
            served = users.get(f"p{ident}", set())
            k = min(k, (1 if ident in sources else 0) + proc_slots(ident, served))
        limit[r] = max(1, int(k))
    for opts in options:
        for opt in opts:
            opt.fixed = tuple((r, f, limit[r]) for r, f in opt.fixed)


def _classes(problem: PlacementProblem) -> List[int]:
    """Equivalence class per task: same IoT group and identical demand."""
    topo = problem.topology
    keys: Dict[tuple, int] = {}
    out = []
    for t in problem.tasks:
        k = (topo.node(t.source).group, t.cpu, t.traffic)
        out.append(keys.setdefault(k, len(keys)))
    return out


@dataclass
class _Search:
    best: float = math.inf
    best_key: Optional[Tuple[int, ...]] = None
    best_choice: Optional[Tuple[int, ...]] = None
    nodes: int = 0


def solve_exact(problem: PlacementProblem, node_limit: Optional[int] = None) -> PlacementSolution:
    """Globally optimal single-destination placement."""
    if problem.split_limit != 1:
        raise UnsupportedError("the exact solver handles unsplittable tasks only (split_limit = 1)")
    tasks = problem.tasks
    if not tasks:
        sol = evaluate(problem, {})
        sol.status = "optimal"
        return sol
    pricer = _Pricer(problem)
    options = _options(problem, pricer)
    for t, opts in zip(tasks, options):
        if not opts:
            raise InfeasibleError(
                "no destination can host a task",
                [f"source {t.source}: {t.cpu:g} MIPS / {t.traffic:g} Mbps exceeds every node or link"],
            )
    cls = _classes(problem)
    n = len(tasks)
    search = _Search()

    def consider(choice: Tuple[int, ...], cost: float):
        key = tuple(options[i][j].rank for i, j in enumerate(choice))
        tol = _tie_tol(search.best)
        if cost < search.best - tol or (cost <= search.best + tol and (search.best_key is None or key < search.best_key)):
            search.best, search.best_key, search.best_choice = cost, key, choice

    # incumbents: greedy, and everything on one node
    _seed_incumbents(problem, pricer, options, consider)

    prev_ext: List[Optional[int]] = [None] * n  # last external rank per class position
    class_last: Dict[int, int] = {}
    choice: List[int] = []

    def lower_bound(i: int) -> float:
        rem = n - i
        lb = pricer.total
        for k in range(i, n):
            t = tasks[k]
            best_k = math.inf
            for opt in options[k]:
                v = opt.static_lb
                for r, f, k in opt.fixed:
                    if not pricer.resource_active(r):
                        v += f / (k if k < rem else rem)
                if pricer.w_queue:
                    v += pricer.queue_now(opt, t.traffic)
                if v < best_k:
                    best_k = v
            lb += best_k
        return lb

    def recurse(i: int):
        search.nodes += 1
        if node_limit is not None and search.nodes > node_limit:
            raise RuntimeError("search node limit exceeded")
        if i == n:
            consider(tuple(choice), pricer.total)
            return
        lb = lower_bound(i)
        tol = _tie_tol(search.best)
        if lb > search.best + tol:
            return
        if lb >= search.best - tol and search.best_key is not None:
            prefix = tuple(options[k][j].rank for k, j in enumerate(choice))
            if prefix > search.best_key[:i]:
                return
        t = tasks[i]
        c = cls[i]
        floor = class_last.get(c)
        cand = []
        for j, opt in enumerate(options[i]):
            if opt.external and floor is not None and opt.rank < floor:
                continue
            if not pricer.feasible(t, opt):
                continue
            before = pricer.total
            pricer.apply(t, opt)
            cand.append((pricer.total - before, opt.rank, j))
            pricer.apply(t, opt, -1)
        cand.sort()
        for _, _, j in cand:
            opt = options[i][j]
            saved = class_last.get(c)
            if opt.external:
                class_last[c] = opt.rank
            pricer.apply(t, opt)
            choice.append(j)
            recurse(i + 1)
            choice.pop()
            pricer.apply(t, opt, -1)
            if saved is None:
                class_last.pop(c, None)
            else:
                class_last[c] = saved

    recurse(0)
    if search.best_choice is None:
        raise InfeasibleError(
            "capacities exhausted: no joint placement fits", _binding_report(problem)
        )
    assignment = {(tasks[i].source, options[i][j].dest): tasks[i].cpu for i, j in enumerate(search.best_choice)}
    sol = evaluate(problem, assignment)
    if abs(sol.objective - search.best) > 1e-6 * max(1.0, abs(sol.objective)):
        raise AssertionError(
            f"incremental objective {search.best!r} disagrees with evaluation {sol.objective!r}"
        )
    sol.status = "optimal"
    sol.explored = search.nodes
    return sol


def _seed_incumbents(problem, pricer: _Pricer, options, consider):
    tasks = problem.tasks
    n = len(tasks)
    # greedy: cheapest feasible marginal placement in task order
    applied = []
    ok = True
    for i in range(n):
        best = None
        for j, opt in enumerate(options[i]):
            if not pricer.feasible(tasks[i], opt):
                continue
            before = pricer.total
            pricer.apply(tasks[i], opt)
            gain = pricer.total - before
            pricer.apply(tasks[i], opt, -1)
            if best is None or gain < best[0] - 1e-12:
                best = (gain, j)
        if best is None:
            ok = False
            break
        pricer.apply(tasks[i], options[i][best[1]])
        applied.append(best[1])
    if ok:
        consider(tuple(applied), pricer.total)
    for i in reversed(range(len(applied))):
        pricer.apply(tasks[i], options[i][applied[i]], -1)
    # all tasks on one shared destination
    dests = set.intersection(*[{o.dest for o in opts} for opts in options]) if options else set()
    for d in sorted(dests):
        picks = [next(j for j, o in enumerate(opts) if o.dest == d) for opts in options]
        done = []
        for i, j in enumerate(picks):
            if not pricer.feasible(tasks[i], options[i][j]):
                break
            pricer.apply(tasks[i], options[i][j])
            done.append(j)
        if len(done) == n:
            consider(tuple(done), pricer.total)
        for i in reversed(range(len(done))):
            pricer.apply(tasks[i], options[i][done[i]], -1)
    pricer.total = 0.0


def _binding_report(problem: PlacementProblem) -> List[str]:
    cat, topo = problem.catalog, problem.topology
    total = sum(t.cpu for t in problem.tasks)
    cap = 0.0
    for d in problem.destinations:
        node = topo.node(d)
        if node.max_servers is None:
            return ["link or queue capacity binds (processing capacity is unbounded)"]
        cap += node.max_servers * cat.proc(node.processor).capacity_mips
    return [f"processing capacity: demand {total:g} MIPS exceeds total {cap:g} MIPS"]


def brute_force(problem: PlacementProblem, limit: int = 4) -> PlacementSolution:
    """Exhaustive search over every single-destination assignment.

    Each candidate is priced from scratch by :func:`evaluate`.
    """
    if problem.split_limit != 1:
        raise UnsupportedError("brute force handles split_limit = 1 only")
    tasks = problem.tasks
    if len(tasks) > limit:
        raise ValueError(f"{len(tasks)} sources exceed the brute-force limit of {limit}")
    if not tasks:
        return evaluate(problem, {})
    topo, cat = problem.topology, problem.catalog
    order = sorted(problem.destinations, key=problem.tie_key)

    def fits_alone(t, d):
        node = topo.node(d)
        if node.max_servers is None:
            return True
        return t.cpu <= node.max_servers * cat.proc(node.processor).capacity_mips * (1 + CAP_TOL)

    per_task = [[d for d in order if fits_alone(t, d)] for t in tasks]
    best = None
    best_key = None
    for combo in itertools.product(*per_task):
        load: Dict[int, float] = {}
        for t, d in zip(tasks, combo):
            load[d] = load.get(d, 0.0) + t.cpu
        if any(
            topo.node(d).max_servers is not None
            and v > topo.node(d).max_servers * cat.proc(topo.node(d).processor).capacity_mips * (1 + CAP_TOL)
            for d, v in load.items()
        ):
            continue
        try:
            sol = evaluate(problem, {(t.source, d): t.cpu for t, d in zip(tasks, combo)})
        except (InfeasibleError, SaturationError):
            continue
        key = tuple(order.index(d) for d in combo)
        if best is None:
            best, best_key = sol, key
            continue
        tol = _tie_tol(best.objective)
        if sol.objective < best.objective - tol or (sol.objective <= best.objective + tol and key < best_key):
            best, best_key = sol, key
    if best is None:
        raise InfeasibleError("no feasible assignment", _binding_report(problem))
    best.status = "optimal"
    return best
