#!/usr/bin/env python3
"""Solve LP files with HiGHS and compare against the solution JSON beside each one.

    python scripts/check_external.py lp/*.lp
"""

import json
import sys
from pathlib import Path

try:
    import highspy
except ImportError:
    sys.exit("highspy is not installed")


def main(paths):
    worst = 0.0
    for p in map(Path, paths):
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("mip_rel_gap", 1e-9)
        h.readModel(str(p))
        h.run()
        got = h.getInfo().objective_function_value
        ref_file = p.with_suffix(".solution.json")
        if ref_file.exists():
            ref = json.loads(ref_file.read_text())["objective"]
            gap = abs(got - ref) / abs(ref)
            worst = max(worst, gap)
            print(f"{p.name}: highs {got:.9g} exact {ref:.9g} gap {gap:.1e}")
        else:
            print(f"{p.name}: highs {got:.9g}")
    return 0 if worst <= 1e-6 else 1


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
