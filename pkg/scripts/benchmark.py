"""Plan both bundled benchmarks and print the per-skeleton score table.

    python scripts/benchmark.py [--out results] [--workers N]
"""

import argparse
import time
from importlib import resources
from pathlib import Path

from cartamp.cli import report_table
from cartamp.domainfile import load_domain
from cartamp.planner import PlannerConfig, initial_state, plan
from cartamp.scene import load_scene

SCENES = resources.files("cartamp") / "scenes"
DEPTH = {"reach": 5, "hanoi": 14}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    for name, depth in DEPTH.items():
        scene = load_scene(SCENES / f"{name}.yaml")
        dfile = load_domain(SCENES / f"{name}.pddl")
        t0 = time.perf_counter()
        res = plan(scene, dfile.domain, dfile.goal, depth, PlannerConfig(workers=args.workers), initial_state(scene, dfile))
        print(f"\n{name}: {len(res.reports)} skeletons, {time.perf_counter() - t0:.1f} s")
        print(report_table(res.reports))
        print(f"best: {res.best.skeleton}")
        out = Path(args.out) / name
        out.mkdir(parents=True, exist_ok=True)
        for rank, p in enumerate(res.plans, 1):
            p.save(out / f"plan_{rank}.yaml")


if __name__ == "__main__":
    main()
