"""Skeleton search x trajectory optimization, ranked by objective score.

Every skeleton within the depth bound is assembled and solved; infeasible
ones are dropped and the rest sorted by score (ties by skeleton text).
Plans are written as YAML documents holding the action list and, per
timestep, the control frame, target frame and relative pose. Floats are
written at ``repr`` precision, so reading a plan back is bit-exact.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

from .constraints import NlpProblem, ObjectiveConfig, assemble_nlp
from .liegroup import RelPose
from .optimizer import SolverConfig, Status, solve
from .symbolic import ActionSkeleton, Domain, GroundedAction, enumerate_skeletons


class PlanningError(RuntimeError):
    """No skeleton reaches the goal, or none of them optimizes to feasibility."""

    def __init__(self, msg: str, reports: list | None = None):
        super().__init__(msg)
        self.reports = reports or []


@dataclass(frozen=True)
class PlannerConfig:
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    workers: int = 1

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass(frozen=True)
class Step:
    t: int
    control: str
    target: str
    xi: RelPose


@dataclass
class Plan:
    skeleton: ActionSkeleton
    xi_star: np.ndarray
    score: float
    max_violation: float
    steps: list[Step]

    @classmethod
    def from_solution(cls, skeleton: ActionSkeleton, problem: NlpProblem, xi, score, violation) -> Plan:
        tl = problem.timeline
        xi = np.asarray(xi, dtype=float)
        steps = [
            Step(t, tl.names[tl.control[t]], tl.names[tl.target[t]], RelPose.from_vector(xi[6 * t : 6 * t + 6]))
            for t in range(tl.horizon + 1)
        ]
        return cls(skeleton, xi.copy(), float(score), float(violation), steps)

    def to_dict(self) -> dict:
        return {
            "ee": self.skeleton.ee,
            "actions": [{"name": a.name, "args": list(a.args)} for a in self.skeleton.actions],
            "score": float(self.score),
            "max_violation": float(self.max_violation),
            "steps": [
                {"t": s.t, "control": s.control, "target": s.target, "xi": [float(v) for v in s.xi.vector()]}
                for s in self.steps
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> Plan:
        skeleton = ActionSkeleton(
            tuple(GroundedAction(a["name"], tuple(a["args"])) for a in doc["actions"]), ee=doc.get("ee", "ee")
        )
        steps = [Step(int(s["t"]), s["control"], s["target"], RelPose.from_vector(s["xi"])) for s in doc["steps"]]
        xi = np.concatenate([np.asarray(s["xi"], dtype=float) for s in doc["steps"]])
        return cls(skeleton, xi, float(doc["score"]), float(doc["max_violation"]), steps)

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def loads(cls, text: str) -> Plan:
        return cls.from_dict(yaml.safe_load(text))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> Plan:
        with open(path) as fh:
            return cls.loads(fh.read())


@dataclass
class SkeletonReport:
    skeleton: ActionSkeleton
    status: Status
    score: float
    max_violation: float
    iterations: int
    seconds: float
    message: str = ""


@dataclass
class PlanningResult:
    plans: list[Plan]
    reports: list[SkeletonReport]

    @property
    def best(self) -> Plan:
        return self.plans[0]


def _solve_skeleton(args):
    skeleton, scene, cfg = args
    start = time.perf_counter()
    problem = assemble_nlp(skeleton, scene, cfg.objective)
    res = solve(problem, cfg.solver)
    seconds = time.perf_counter() - start
    report = SkeletonReport(skeleton, res.status, res.score, res.max_violation, res.iterations, seconds, res.message)
    plan = None
    if res.status is Status.FEASIBLE:
        plan = Plan.from_solution(skeleton, problem, res.xi_star, res.score, res.max_violation)
    return report, plan


def initial_state(scene, dfile) -> frozenset:
    """Facts from the problem file plus those read off the scene."""
    return frozenset(dfile.init) | scene.initial_facts(dfile.domain.objects)


def plan(scene, domain: Domain, goal, max_depth: int, cfg: PlannerConfig | None = None, init=None) -> PlanningResult:
    """Enumerate, optimize and rank. ``init`` defaults to the scene's own facts."""
    cfg = cfg or PlannerConfig()
    if init is None:
        init = scene.initial_facts(domain.objects)
    skeletons = enumerate_skeletons(domain, frozenset(init), goal, max_depth, ee=scene.ee)
    if not skeletons:
        raise PlanningError(f"goal unreachable at depth {max_depth}")
    jobs = [(sk, scene, cfg) for sk in skeletons]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(jobs))) as pool:
            results = list(pool.map(_solve_skeleton, jobs))
    else:
        results = [_solve_skeleton(job) for job in jobs]
    reports = [r for r, _ in results]
    plans = sorted((p for _, p in results if p is not None), key=lambda p: (p.score, str(p.skeleton)))
    if not plans:
        detail = "; ".join(f"{r.skeleton}: max violation {r.max_violation:.3g}" for r in reports)
        raise PlanningError(f"all skeletons infeasible ({detail})", reports)
    return PlanningResult(plans, reports)


def replay_violation(plan_: Plan, scene, cfg: ObjectiveConfig | None = None) -> float:
    """Max constraint violation of a plan against a freshly assembled stack."""
    problem = assemble_nlp(plan_.skeleton, scene, cfg)
    return problem.max_violation(plan_.xi_star)
