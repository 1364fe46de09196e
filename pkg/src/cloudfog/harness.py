"""Scenario sweeps, savings and allocation tables, and the command line."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, TextIO, Tuple

import numpy as np

from .catalog import CatalogError, DeviceCatalog, default_catalog, dump_catalog, load_catalog
from .delay import DelayConstants
from .optimizer import (
    InfeasibleError,
    ObjectiveCase,
    PlacementProblem,
    PlacementSolution,
    TaskRequest,
    UnsupportedError,
    Weights,
    baseline_cloud,
    case_weights,
    check_feasible,
    emit_lp,
    formulate,
    solve_exact,
)
from .optimizer.problem import dc_nodes, problem_from_dict, problem_to_dict, solution_from_dict
from .topology import Layer, NodeKind, Topology, TopologyError, build_from_overrides, dump_adjacency, validate

SWEEP = tuple(range(1000, 10001, 1000))
SCENARIO_IDS = ("One", "Two", "Three", "Four", "EvalOne", "EvalTwo")

# objective cases compared by each scenario
_DEFAULT_CASES = {
    "One": (ObjectiveCase.POWER,),
    "Two": (ObjectiveCase.POWER,),
    "Three": (ObjectiveCase.POWER,),
    "Four": (ObjectiveCase.POWER,),
    "EvalOne": (ObjectiveCase.POWER, ObjectiveCase.PROPAGATION, ObjectiveCase.POWER_PROPAGATION),
    "EvalTwo": (ObjectiveCase.POWER, ObjectiveCase.QUEUING, ObjectiveCase.POWER_QUEUING),
}

LAYER_COLUMNS = {
    Layer.IOT: "iot_pct",
    Layer.CPE: "cpe_pct",
    Layer.ACCESS_FOG: "access_fog_pct",
    Layer.METRO_FOG: "metro_fog_pct",
    Layer.CLOUD_DC: "cloud_dc_pct",
}

COLUMNS = (
    "scenario",
    "case",
    "mips_per_task",
    "traffic_mbps_per_task",
    "tasks",
    "status",
    "weight_power",
    "weight_propagation_w_per_s",
    "weight_queuing_w_per_s",
    "objective",
    "cloudfog_total_w",
    "baseline_total_w",
    "savings_pct",
    *LAYER_COLUMNS.values(),
    "net_pc_w",
    "pr_pc_w",
    "active_servers",
    "baseline_dc_servers",
    "avg_propagation_ms",
    "avg_queuing_us",
    "explored",
    "detail",
)


def _group_nodes(topology: Topology) -> List[List[int]]:
    groups: Dict[int, List[int]] = {}
    for n in topology.of_kind(NodeKind.IOT):
        groups.setdefault(topology.node(n).group, []).append(n)
    return [sorted(groups[g]) for g in sorted(groups)]


@dataclass(frozen=True)
class Scenario:
    id: str
    sources: Tuple[int, ...]
    sweep: Tuple[float, ...] = SWEEP  # per-task MIPS
    cases: Tuple[ObjectiveCase, ...] = (ObjectiveCase.POWER,)
    seed: int = 0

    def __post_init__(self):
        if self.id not in SCENARIO_IDS:
            raise ValueError(f"unknown scenario {self.id!r}; expected one of {SCENARIO_IDS}")
        if not self.sources:
            raise ValueError("a scenario needs at least one source")
        if any(v <= 0 for v in self.sweep):
            raise ValueError("sweep points must be > 0 MIPS")


def scenario(
    sid: str,
    topology: Topology,
    seed: int = 0,
    sweep: Optional[Sequence[float]] = None,
    cases: Optional[Sequence[ObjectiveCase]] = None,
) -> Scenario:
    """Source layout for a named scenario on ``topology``."""
    if sid not in SCENARIO_IDS:
        raise ValueError(f"unknown scenario {sid!r}; expected one of {SCENARIO_IDS}")
    groups = _group_nodes(topology)
    if not groups:
        raise TopologyError("topology has no IoT nodes")
    if sid == "One":
        # legacy stream: stable across numpy releases, so seeds stay reproducible
        rng = np.random.RandomState(seed)
        g = groups[rng.randint(len(groups))]
        sources = (g[rng.randint(len(g))],)
    elif sid in ("Two", "EvalOne", "EvalTwo"):
        sources = tuple(groups[0])
    elif sid == "Three":
        sources = tuple(g[0] for g in groups)
    else:
        sources = tuple(n for g in groups for n in g)
    return Scenario(
        sid,
        sources,
        tuple(sweep) if sweep is not None else SWEEP,
        tuple(cases) if cases is not None else _DEFAULT_CASES[sid],
        seed,
    )


def savings(cloudfog: float, baseline: float) -> float:
    """Percent saved against the baseline; negative when cloud-fog is worse."""
    if not baseline > 0:
        raise ValueError("baseline power must be > 0")
    return 100.0 * (baseline - cloudfog) / baseline


def allocation_breakdown(solution: PlacementSolution, topology: Topology) -> Dict[Layer, float]:
    """Percent of the assigned MIPS hosted per layer."""
    shares = solution.layer_mips(topology)
    total = sum(shares.values())
    if total <= 0:
        return {layer: 0.0 for layer in Layer}
    return {layer: 100.0 * v / total for layer, v in shares.items()}


@dataclass
class ScenarioResult:
    scenario: Scenario
    rows: List[Dict[str, object]] = field(default_factory=list)
    solutions: List[Tuple[PlacementProblem, Optional[PlacementSolution]]] = field(default_factory=list)

    @property
    def feasible_rows(self) -> List[Dict[str, object]]:
        return [r for r in self.rows if r["status"] == "optimal"]

    def by_case(self, case: ObjectiveCase) -> List[Dict[str, object]]:
        return [r for r in self.rows if r["case"] == case.name]

    def point(self, mips: float, case: ObjectiveCase = ObjectiveCase.POWER) -> Dict[str, object]:
        for r in self.rows:
            if r["case"] == case.name and r["mips_per_task"] == mips:
                return r
        raise KeyError((mips, case))


def build_problem(
    scen: Scenario,
    mips: float,
    topology: Topology,
    catalog: DeviceCatalog,
    case: ObjectiveCase = ObjectiveCase.POWER,
    delay: Optional[DelayConstants] = None,
    weights: Optional[Weights] = None,
    server_policy: str = "auto",
) -> PlacementProblem:
    traffic = mips / catalog.mips_per_mbps()
    prob = PlacementProblem(
        topology,
        catalog,
        tuple(TaskRequest(s, mips, traffic) for s in scen.sources),
        delay=delay or DelayConstants(),
        server_policy=server_policy,
    )
    return prob.with_weights(weights if weights is not None else case_weights(prob, case))


def run_scenario(
    scen: Scenario,
    topology: Topology,
    catalog: DeviceCatalog,
    delay: Optional[DelayConstants] = None,
    weights: Optional[Weights] = None,
    server_policy: str = "auto",
    solver: Callable[[PlacementProblem], PlacementSolution] = solve_exact,
    check: bool = True,
) -> ScenarioResult:
    """Solve every sweep point for every objective case of ``scen``."""
    result = ScenarioResult(scen)
    for case in scen.cases:
        for mips in scen.sweep:
            sol = prob = None
            try:
                prob = build_problem(scen, mips, topology, catalog, case, delay, weights, server_policy)
            except InfeasibleError as exc:
                row = _blank_row(scen, case, mips, None)
                row["status"] = "infeasible"
                row["detail"] = "; ".join([str(exc), *exc.report])
                result.rows.append(row)
                result.solutions.append((prob, sol))
                continue
            row = _blank_row(scen, case, mips, prob)
            try:
                sol = solver(prob)
                if check:
                    issues = check_feasible(sol, prob)
                    if issues:
                        raise AssertionError(f"solver output fails the model check: {issues[:3]}")
                base = baseline_cloud(prob)
                _fill_row(row, prob, sol, base)
            except InfeasibleError as exc:
                row["status"] = "infeasible"
                row["detail"] = "; ".join([str(exc), *exc.report])
            result.rows.append(row)
            result.solutions.append((prob, sol))
    return result


def _blank_row(scen: Scenario, case: ObjectiveCase, mips: float, prob: Optional[PlacementProblem]) -> Dict[str, object]:
    row: Dict[str, object] = {c: "" for c in COLUMNS}
    row.update(scenario=scen.id, case=case.name, mips_per_task=mips, tasks=len(scen.sources))
    if prob is not None:
        w = prob.weights
        row.update(
            traffic_mbps_per_task=prob.tasks[0].traffic,
            weight_power=w.power,
            weight_propagation_w_per_s=w.propagation,
            weight_queuing_w_per_s=w.queuing,
        )
    return row


def _fill_row(row, prob: PlacementProblem, sol: PlacementSolution, base: PlacementSolution) -> None:
    topo = prob.topology
    shares = allocation_breakdown(sol, topo)
    dc = dc_nodes(prob)
    row.update(
        status=sol.status,
        objective=sol.objective,
        cloudfog_total_w=sol.power.total,
        baseline_total_w=base.power.total,
        savings_pct=savings(sol.power.total, base.power.total),
        net_pc_w=sol.power.net_pc,
        pr_pc_w=sol.power.pr_pc,
        active_servers=sum(sol.usage.servers.values()),
        baseline_dc_servers=sum(base.usage.servers.get(d, 0) for d in dc),
        avg_propagation_ms=sol.delays.avg_propagation * 1e3,
        avg_queuing_us=sol.delays.avg_queuing * 1e6,
        explored=sol.explored,
    )
    for layer, col in LAYER_COLUMNS.items():
        row[col] = shares[layer]


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit(result: "ScenarioResult | Sequence[Mapping]", fmt: str = "csv", sink: Optional[TextIO] = None) -> str:
    """Render rows as CSV (units in headers) or a JSON array of row objects."""
    rows = result.rows if isinstance(result, ScenarioResult) else list(result)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([_cell(r.get(c, "")) for c in COLUMNS])
        text = buf.getvalue()
    elif fmt == "json":
        text = json.dumps([{c: r.get(c, "") for c in COLUMNS} for r in rows], indent=2) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}; expected csv or json")
    if sink is not None:
        sink.write(text)
    return text


# config ---------------------------------------------------------------------

_CONFIG_KEYS = {"catalog", "topology", "delay", "server_policy"}


@dataclass
class RunConfig:
    catalog: DeviceCatalog
    topology: Topology
    delay: DelayConstants
    server_policy: str = "auto"


def load_config(source: "str | Path | Mapping | None" = None) -> RunConfig:
    """Read a JSON config with optional catalog, topology, delay and server_policy sections."""
    if source is None:
        doc: dict = {}
    elif isinstance(source, Mapping):
        doc = dict(source)
    else:
        try:
            doc = json.loads(Path(source).read_text())
        except json.JSONDecodeError as exc:
            raise CatalogError(f"config is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise CatalogError("config must be a JSON object")
    unknown = sorted(set(doc) - _CONFIG_KEYS)
    if unknown:
        raise CatalogError(f"unknown config section(s) {unknown}; expected {sorted(_CONFIG_KEYS)}")
    catalog = load_catalog(doc["catalog"]) if "catalog" in doc else default_catalog()
    topology = build_from_overrides(doc.get("topology"), catalog)
    issues = validate(topology)
    if issues:
        raise TopologyError("invalid topology: " + "; ".join(issues))
    delay = DelayConstants.from_dict(doc["delay"]) if "delay" in doc else DelayConstants()
    return RunConfig(catalog, topology, delay, doc.get("server_policy", "auto"))


# CLI ------------------------------------------------------------------------


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _fail(kind: str, message: str, code: int = 2, **extra) -> int:
    print(json.dumps({"error": kind, "message": message, **extra}), file=sys.stderr)
    return code


def _cmd_run(args, cfg: RunConfig) -> int:
    cases = [ObjectiveCase.parse(c) for c in args.objective.split(",")] if args.objective else None
    scen = scenario(args.scenario, cfg.topology, args.seed, _floats(args.sweep) if args.sweep else None, cases)
    weights = Weights.parse(args.weights) if args.weights else None
    result = run_scenario(scen, cfg.topology, cfg.catalog, cfg.delay, weights, cfg.server_policy)
    if args.solutions:
        out = Path(args.solutions)
        out.mkdir(parents=True, exist_ok=True)
        for (prob, sol), row in zip(result.solutions, result.rows):
            if sol is not None:
                name = f"{scen.id}_{row['case']}_{int(row['mips_per_task'])}.json"
                (out / name).write_text(sol.to_json(prob) + "\n")
    if args.output:
        with open(args.output, "w", newline="") as fh:
            emit(result, args.format, fh)
    else:
        emit(result, args.format, sys.stdout)
    if not result.feasible_rows:
        return _fail(
            "infeasible",
            "every sweep point is infeasible",
            points=[{"mips_per_task": r["mips_per_task"], "case": r["case"], "detail": r["detail"]} for r in result.rows],
        )
    return 0


def _cmd_export_lp(args, cfg: RunConfig) -> int:
    if args.problem:
        doc = json.loads(Path(args.problem).read_text())
        prob = problem_from_dict(doc.get("problem", doc), cfg.topology, cfg.catalog, cfg.delay)
        if args.weights:
            prob = prob.with_weights(Weights.parse(args.weights))
    else:
        case = ObjectiveCase.parse(args.objective or "POWER")
        scen = scenario(args.scenario, cfg.topology, args.seed)
        weights = Weights.parse(args.weights) if args.weights else None
        prob = build_problem(scen, args.mips, cfg.topology, cfg.catalog, case, cfg.delay, weights, cfg.server_policy)
    model = formulate(prob)
    if args.output:
        with open(args.output, "w") as fh:
            emit_lp(model, fh)
    else:
        emit_lp(model, sys.stdout)
    if args.solution:
        sol = solve_exact(prob)
        Path(args.solution).write_text(sol.to_json(prob) + "\n")
    return 0


def _cmd_validate(args, cfg: RunConfig) -> int:
    doc = json.loads(Path(args.solution).read_text())
    if "problem" not in doc:
        return _fail("bad-input", "solution file lacks the embedded problem section")
    prob = problem_from_dict(doc["problem"], cfg.topology, cfg.catalog, cfg.delay)
    if "variables" in doc:
        report = check_feasible(doc["variables"], prob)
    else:
        try:
            report = check_feasible(solution_from_dict(doc, prob), prob)
        except InfeasibleError as exc:
            report = [str(exc), *exc.report]
    print(json.dumps({"feasible": not report, "violations": report}, indent=2))
    return 0 if not report else 1


def _cmd_report(args, cfg: RunConfig) -> int:
    rows = json.loads(Path(args.input).read_text())
    if not isinstance(rows, list):
        return _fail("bad-input", "report input must be a JSON array of rows")
    if args.output:
        with open(args.output, "w", newline="") as fh:
            emit(rows, "csv", fh)
    else:
        emit(rows, "csv", sys.stdout)
    return 0


def _cmd_topology(args, cfg: RunConfig) -> int:
    doc = dump_adjacency(cfg.topology)
    text = json.dumps(doc, indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    if args.catalog:
        Path(args.catalog).write_text(dump_catalog(cfg.catalog))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cloudfog", description="Energy and delay aware cloud-fog task placement.")
    p.add_argument("--config", help="JSON file with catalog/topology/delay overrides")
    p.add_argument("--weights", help="objective weights power,propagation,queuing (W, W/s, W/s; overrides the case defaults)")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="sweep a scenario and print one row per point")
    r.add_argument("scenario", choices=SCENARIO_IDS)
    r.add_argument("--objective", help="comma list of objective cases (1-6 or names)")
    r.add_argument("--sweep", help="comma list of per-task MIPS (default 1000..10000)")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--format", choices=("csv", "json"), default="csv")
    r.add_argument("--output", "-o")
    r.add_argument("--solutions", help="directory for one solution JSON per feasible point")
    r.set_defaults(fn=_cmd_run)

    e = sub.add_parser("export-lp", help="write the MILP for one sweep point in LP format")
    e.add_argument("--scenario", choices=SCENARIO_IDS, default="One")
    e.add_argument("--mips", type=float, default=1000.0)
    e.add_argument("--objective")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--problem", help="take the problem from a solution/problem JSON instead")
    e.add_argument("--output", "-o")
    e.add_argument("--solution", help="also solve and write the solution JSON here")
    e.set_defaults(fn=_cmd_export_lp)

    v = sub.add_parser("validate", help="re-check a solution JSON against every model row")
    v.add_argument("solution")
    v.set_defaults(fn=_cmd_validate)

    rp = sub.add_parser("report", help="re-render CSV from a JSON row dump")
    rp.add_argument("input")
    rp.add_argument("--output", "-o")
    rp.set_defaults(fn=_cmd_report)

    t = sub.add_parser("topology", help="dump the adjacency of the configured topology")
    t.add_argument("--output", "-o")
    t.add_argument("--catalog", help="also write the effective catalog JSON here")
    t.set_defaults(fn=_cmd_topology)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.weights:
            Weights.parse(args.weights)
        return args.fn(args, cfg)
    except (CatalogError, TopologyError) as exc:
        return _fail("config", str(exc), path=getattr(exc, "path", ""))
    except InfeasibleError as exc:
        return _fail("infeasible", str(exc), report=exc.report)
    except (UnsupportedError, ValueError) as exc:
        return _fail("usage", str(exc))
    except OSError as exc:
        return _fail("io", str(exc))


if __name__ == "__main__":
    sys.exit(main())
