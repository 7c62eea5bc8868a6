"""``cartamp`` command line: plan, execute and gradcheck.

Exit codes: 0 success, 1 no feasible plan / failed run / failed check,
2 unreadable or inconsistent input.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np
import yaml

from .constraints import AssemblyError, ObjectiveConfig, assemble_nlp
from .domainfile import ParseError, load_domain
from .executor import ControllerGains, Outcome, PerturbationScript, ScriptError, execute
from .optimizer import SolverConfig, check_gradients
from .planner import Plan, PlannerConfig, PlanningError, initial_state, plan
from .scene import SceneError, load_scene
from .symbolic import ContractError, enumerate_skeletons

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _load_inputs(scene_path, domain_path):
    try:
        scene = load_scene(scene_path)
        dfile = load_domain(domain_path)
    except (ParseError, SceneError, ContractError, OSError) as exc:
        raise InputError(str(exc)) from None
    if dfile.goal is None:
        raise InputError(f"{domain_path}: no goal formula")
    return scene, dfile


def _table(rows, header) -> str:
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*header), fmt.format(*("-" * w for w in widths))]
    lines += [fmt.format(*map(str, r)) for r in rows]
    return "\n".join(lines)


def cmd_plan(args) -> int:
    scene, dfile = _load_inputs(args.scene, args.domain)
    try:
        cfg = PlannerConfig(
            objective=ObjectiveConfig(args.alpha, args.beta),
            solver=SolverConfig(seed=args.seed, time_budget=args.time_budget),
            workers=args.workers,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None
    try:
        result = plan(scene, dfile.domain, dfile.goal, args.max_depth, cfg, init=initial_state(scene, dfile))
    except PlanningError as exc:
        if exc.reports:
            print(report_table(exc.reports))
        print(f"planning failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except AssemblyError as exc:
        raise InputError(str(exc)) from None
    print(report_table(result.reports))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for rank, p in enumerate(result.plans, 1):
        p.save(out / f"plan_{rank}.yaml")
    print(f"best: {result.best.skeleton}  (score {result.best.score:.6g})")
    print(f"wrote {len(result.plans)} plan(s) to {out}")
    return EXIT_OK


def report_table(reports) -> str:
    rows = [
        (i, r.skeleton, r.status.value, f"{r.score:.4f}", f"{r.max_violation:.1e}", r.iterations, f"{r.seconds:.1f}")
        for i, r in enumerate(reports, 1)
    ]
    return _table(rows, ("#", "skeleton", "status", "score", "violation", "iters", "time [s]"))


def _parse_gains(text: str | None) -> ControllerGains:
    if text is None:
        return ControllerGains()
    try:
        vals = [float(v) for v in text.split(",")]
        if len(vals) == 3:
            return ControllerGains(vals[0], vals[1], vals[2], vals[0], vals[1])
        if len(vals) == 5:
            return ControllerGains(*vals)
    except ValueError as exc:
        raise InputError(f"bad --gains: {exc}") from None
    raise InputError("--gains takes kp,kv,kobs or kp,kv,kobs,kp_ang,kv_ang")


def cmd_execute(args) -> int:
    try:
        scene = load_scene(args.scene)
        p = Plan.load(args.plan)
    except (SceneError, OSError, KeyError, TypeError, ValueError, yaml.YAMLError) as exc:
        raise InputError(str(exc)) from None
    missing = {f for s in p.steps for f in (s.control, s.target)} - set(scene.names)
    if missing or p.skeleton.ee != scene.ee:
        raise InputError(f"plan frames not in scene: {sorted(missing) or [p.skeleton.ee]}")
    script = PerturbationScript()
    try:
        if args.script:
            with open(args.script) as fh:
                script = PerturbationScript.from_dict(yaml.safe_load(fh) or {})
        trace = execute(p, scene, script, _parse_gains(args.gains), args.dt, trace_path=args.trace_out)
    except (ScriptError, OSError, yaml.YAMLError) as exc:
        raise InputError(str(exc)) from None
    except ValueError as exc:
        raise InputError(str(exc)) from None
    rows = [
        (tp.t, f"{tp.control} in {tp.target}", f"{tp.position_error * 1e3:.2f}", f"{tp.angle_error:.4f}")
        for tp in trace.terminals
    ]
    print(_table(rows, ("t", "relative pose", "pos err [mm]", "ang err [rad]")))
    sim_time = len(trace.samples) * trace.dt
    print(f"outcome: {trace.outcome.value}  (simulated {sim_time:.2f} s){'  ' + trace.message if trace.message else ''}")
    return EXIT_OK if trace.outcome is Outcome.SUCCESS else EXIT_FAIL


def cmd_gradcheck(args) -> int:
    scene, dfile = _load_inputs(args.scene, args.domain)
    if args.samples == 0:
        warnings.warn("gradcheck with zero samples checks nothing", stacklevel=1)
        print("no samples drawn: vacuous pass")
        return EXIT_OK
    skeletons = enumerate_skeletons(dfile.domain, initial_state(scene, dfile), dfile.goal, args.max_depth, ee=scene.ee)
    if not skeletons:
        print(f"goal unreachable at depth {args.max_depth}", file=sys.stderr)
        return EXIT_FAIL
    shortest = min(len(s) for s in skeletons)
    rng = np.random.default_rng(args.seed)
    worst: dict[str, float] = {}
    skipped = 0
    for sk in (s for s in skeletons if len(s) == shortest):
        problem = assemble_nlp(sk, scene)
        for _ in range(args.samples):
            x = rng.uniform(-args.spread, args.spread, problem.n_vars)
            rep = check_gradients(problem, x, h=args.h, seed=int(rng.integers(2**31)))
            skipped += rep.skipped
            worst["objective"] = max(worst.get("objective", 0.0), rep.objective)
            for name, err in rep.blocks.items():
                kind = name.split("(")[0] + (" root" if name.endswith(" root") else "")
                worst[kind] = max(worst.get(kind, 0.0), err)
    rows = [(k, f"{v:.2e}", "ok" if v <= args.threshold else "FAIL") for k, v in sorted(worst.items())]
    print(_table(rows, ("block", "max rel err", "")))
    if skipped:
        print(f"{skipped} block evaluations skipped at non-smooth points")
    ok = all(v <= args.threshold for v in worst.values())
    print("gradcheck passed" if ok else "gradcheck FAILED")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cartamp", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="search skeletons and optimize each")
    p.add_argument("scene")
    p.add_argument("domain")
    p.add_argument("--max-depth", type=int, default=5)
    p.add_argument("--alpha", type=float, default=ObjectiveConfig.alpha)
    p.add_argument("--beta", type=float, default=ObjectiveConfig.beta)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--time-budget", type=float, help="wall-clock seconds per skeleton")
    p.add_argument("--out", default="plans", help="directory for plan_<rank>.yaml")
    p.set_defaults(func=cmd_plan)

    e = sub.add_parser("execute", help="run a plan through the controller")
    e.add_argument("plan")
    e.add_argument("scene")
    e.add_argument("script", nargs="?", help="perturbation script (YAML)")
    e.add_argument("--dt", type=float, default=1e-3)
    e.add_argument("--gains", help="kp,kv,kobs[,kp_ang,kv_ang]")
    e.add_argument("--trace-out")
    e.set_defaults(func=cmd_execute)

    g = sub.add_parser("gradcheck", help="finite-difference check of every Jacobian")
    g.add_argument("scene")
    g.add_argument("domain")
    g.add_argument("--samples", type=int, default=100)
    g.add_argument("--h", type=float, default=1e-6)
    g.add_argument("--threshold", type=float, default=1e-3)
    g.add_argument("--max-depth", type=int, default=14)
    g.add_argument("--spread", type=float, default=0.5, help="points drawn uniformly in [-spread, spread]")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gradcheck)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
