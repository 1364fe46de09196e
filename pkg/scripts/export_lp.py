#!/usr/bin/env python3
"""Export the model of one scenario point as an LP file, with the exact solution beside it.

    python scripts/export_lp.py Three 2000 --case POWER_QUEUING --out lp/
"""

import argparse
from pathlib import Path

from cloudfog.harness import build_problem, load_config, scenario
from cloudfog.optimizer import ObjectiveCase, emit_lp, formulate, solve_exact


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scenario")
    ap.add_argument("mips", type=float)
    ap.add_argument("--case", default="POWER")
    ap.add_argument("--config")
    ap.add_argument("--out", default="lp")
    args = ap.parse_args()

    cfg = load_config(args.config)
    case = ObjectiveCase.parse(args.case)
    scen = scenario(args.scenario, cfg.topology)
    prob = build_problem(scen, args.mips, cfg.topology, cfg.catalog, case, cfg.delay, None, cfg.server_policy)
    model = formulate(prob)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{scen.id}_{case.name}_{int(args.mips)}"
    (out / f"{stem}.lp").write_text(emit_lp(model))
    sol = solve_exact(prob)
    (out / f"{stem}.solution.json").write_text(sol.to_json(prob) + "\n")
    print(f"{stem}: {model.counts()} objective {sol.objective:.6f}")


if __name__ == "__main__":
    main()
