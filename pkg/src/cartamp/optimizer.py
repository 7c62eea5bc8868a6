"""Augmented-Lagrangian solver with a damped Gauss-Newton inner loop.

Equalities ``h(x) = 0`` carry free multipliers, inequalities ``g(x) <= 0``
carry multipliers clamped at zero (no slack variables). Blocks that provide a
root form are penalized through it: the squared contact residuals have zero
slope on their own zero set, which leaves multipliers unbounded. The inner problem is
minimized by quasi-Newton steps whose curvature model is the Gauss-Newton
approximation ``rho J^T J`` of each penalty term plus that of the objective,
with Levenberg-Marquardt damping.

A run first restores feasibility with the objective switched off, taking
short steps so it settles in the basin nearest the start, and only then
minimizes the objective under a stiff penalty. Runs whose violation stops
shrinking are abandoned early; restarts from seeded perturbations follow.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .constraints import Kind, NlpProblem

log = logging.getLogger(__name__)

# outer iterations over which an infeasible run must halve its violation
STALL_WINDOW = 4


class Status(enum.Enum):
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    ITER_LIMIT = "IterLimit"


@dataclass(frozen=True)
class SolverConfig:
    tol_feas: float = 1e-6
    tol_grad: float = 1e-4
    max_outer: int = 50
    max_inner: int = 200
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    restart_seeds: int = 4
    seed: int = 0
    penalty_max: float = 1e12
    # penalty at which the objective is switched on after the feasibility
    # phase; the squared residuals have vanishing slope at contact, so only a
    # stiff penalty keeps the objective from pulling a solution apart
    penalty_objective: float = 1e4
    # per-coordinate cap on one inner step; keeps the feasibility phase near
    # the start so the basin it settles in is the one closest to it
    max_step: float = 0.1
    # a feasible outer iteration that improves the score by less than this
    # relative amount ends the run
    tol_score: float = 1e-3
    # wall-clock seconds per solve, restarts included; None means unlimited
    time_budget: float | None = None

    def __post_init__(self):
        for name in ("tol_feas", "tol_grad", "penalty_init"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer < 1 or self.max_inner < 1 or self.restart_seeds < 0:
            raise ValueError("iteration budgets must be positive")
        if self.time_budget is not None and self.time_budget <= 0:
            raise ValueError("time_budget must be positive")
        if self.penalty_growth <= 1:
            raise ValueError("penalty_growth must exceed 1")


@dataclass
class SolveResult:
    xi_star: np.ndarray
    score: float
    max_violation: float
    status: Status
    iterations: int
    message: str = ""
    violation_history: list[float] = field(default_factory=list, repr=False)


class _Lagrangian:
    """Augmented Lagrangian of one problem with fixed multipliers and penalty."""

    def __init__(self, problem: NlpProblem):
        self.p = problem
        pick = lambda b: (b.root or b.value, b.model_jacobian or b.root_jacobian or b.jacobian)
        self.eq = [pick(b) for b in problem.blocks if b.kind is Kind.EQ]
        self.ineq = [pick(b) for b in problem.blocks if b.kind is Kind.INEQ]
        snap = problem.snapshot(np.zeros(problem.n_vars))
        self.lam = [np.zeros(np.size(f(snap))) for f, _ in self.eq]
        self.mu = [np.zeros(np.size(f(snap))) for f, _ in self.ineq]
        self.rho = 1.0
        self.weight = 1.0
        self.evals = 0

    def values(self, snap):
        return [f(snap) for f, _ in self.eq], [f(snap) for f, _ in self.ineq]

    def value(self, x) -> float:
        snap = self.p.snapshot(x)
        f = self.p.objective(snap, grad=False)[0] if self.weight else 0.0
        hs, gs = self.values(snap)
        self.evals += 1
        return self._combine(self.weight * f, hs, gs)

    def _combine(self, f, hs, gs) -> float:
        rho = self.rho
        L = f
        for lam, h in zip(self.lam, hs):
            L += lam @ h + 0.5 * rho * h @ h
        for mu, g in zip(self.mu, gs):
            s = np.maximum(0.0, mu + rho * g)
            L += (s @ s - mu @ mu) / (2.0 * rho)
        return float(L)

    def value_grad_curv(self, x):
        """Value, gradient and Gauss-Newton curvature of the augmented Lagrangian."""
        snap = self.p.snapshot(x)
        n = self.p.n_vars
        if self.weight:
            f, grad = self.p.objective(snap)
            f, grad = self.weight * f, self.weight * grad
            H = self.weight * self.p.objective_curvature(snap)
        else:
            f, grad, H = 0.0, np.zeros(n), np.zeros((n, n))
        hs, gs = self.values(snap)
        rho = self.rho
        for (_, jac), lam, h in zip(self.eq, self.lam, hs):
            w = lam + rho * h
            cols, J = jac(snap)
            grad[cols] += w @ J
            H[np.ix_(cols, cols)] += rho * J.T @ J
        for (_, jac), mu, g in zip(self.ineq, self.mu, gs):
            active = mu + rho * g > 0.0
            if np.any(active):
                cols, J = jac(snap)
                w = np.where(active, mu + rho * g, 0.0)
                grad[cols] += w @ J
                Ja = J[active]
                H[np.ix_(cols, cols)] += rho * Ja.T @ Ja
        self.evals += 1
        return self._combine(f, hs, gs), grad, H

    def reset_multipliers(self):
        self.lam = [np.zeros_like(v) for v in self.lam]
        self.mu = [np.zeros_like(v) for v in self.mu]

    def estimate_multipliers(self, x):
        """Least-squares multipliers for the objective gradient at ``x``.

        Only equalities and active or nearly active inequalities take part;
        inequality estimates are clamped at zero.
        """
        snap = self.p.snapshot(x)
        _, grad = self.p.objective(snap)
        hs, gs = self.values(snap)
        n = self.p.n_vars
        rows, slots = [], []
        for k, ((_, jac), h) in enumerate(zip(self.eq, hs)):
            cols, J = jac(snap)
            for i in range(np.size(h)):
                row = np.zeros(n)
                row[cols] = J[i]
                rows.append(row)
                slots.append(("eq", k, i))
        for k, ((_, jac), g) in enumerate(zip(self.ineq, gs)):
            near = np.atleast_1d(g) > -1e-3
            if np.any(near):
                cols, J = jac(snap)
                for i in np.flatnonzero(near):
                    row = np.zeros(n)
                    row[cols] = J[i]
                    rows.append(row)
                    slots.append(("ineq", k, i))
        self.reset_multipliers()
        if not rows:
            return
        A = np.array(rows).T
        est = np.linalg.lstsq(A, -grad, rcond=1e-8)[0]
        for (kind, k, i), v in zip(slots, est):
            if kind == "eq":
                self.lam[k][i] = v
            else:
                self.mu[k][i] = max(v, 0.0)

    def update_multipliers(self, x):
        hs, gs = self.values(self.p.snapshot(x))
        self.lam = [lam + self.rho * h for lam, h in zip(self.lam, hs)]
        self.mu = [np.maximum(0.0, mu + self.rho * g) for mu, g in zip(self.mu, gs)]


def _descend(fun: _Lagrangian, x, cfg: SolverConfig, max_iter: int):
    """Levenberg-Marquardt descent on the augmented Lagrangian.

    Each trial step solves ``(H + damp I) d = -g`` with the Gauss-Newton
    curvature ``H`` and is accepted when the actual decrease is a positive
    fraction of the model's prediction (a sufficient-decrease test). The
    damping follows Nielsen's update. Returns (x, iterations, converged);
    three consecutive negligible decreases count as convergence.
    """
    f, g, H = fun.value_grad_curv(x)
    n = x.size
    eye = np.eye(n)
    damp = 1e-6 * max(1.0, float(np.max(np.diag(H))))
    nu = 2.0
    flat = 0
    for it in range(max_iter):
        if np.max(np.abs(g)) <= cfg.tol_grad:
            return x, it, True
        while True:
            try:
                c = np.linalg.cholesky(H + damp * eye)
                d = -np.linalg.solve(c.T, np.linalg.solve(c, g))
            except np.linalg.LinAlgError:
                damp, nu = damp * nu, nu * 2.0
                continue
            big = float(np.max(np.abs(d)))
            if big > cfg.max_step:
                d *= cfg.max_step / big
            pred = -(g @ d + 0.5 * d @ H @ d)
            xn = x + d
            fn = fun.value(xn)
            ratio = (f - fn) / pred if pred > 0 else -1.0
            if np.isfinite(fn) and ratio > 1e-4:
                damp *= max(1.0 / 3.0, 1.0 - (2.0 * ratio - 1.0) ** 3)
                nu = 2.0
                break
            damp, nu = damp * nu, nu * 2.0
            if damp > 1e16 or not np.all(np.isfinite(d)):
                return x, it, False
        flat = flat + 1 if f - fn <= 1e-10 * max(1.0, abs(f)) else 0
        if flat >= 3 or np.max(np.abs(xn - x)) < 1e-14:
            return xn, it + 1, True
        x = xn
        f, g, H = fun.value_grad_curv(x)
    return x, max_iter, bool(np.max(np.abs(g)) <= cfg.tol_grad)


def _al_loop(fun: _Lagrangian, problem: NlpProblem, x, cfg: SolverConfig, history: list, deadline=float("inf")):
    """Outer multiplier/penalty loop from ``x`` at the current penalty.

    Returns (x, iterations, status, message).
    """
    viol = problem.max_violation(x)
    iters = 0
    last = None
    recent: list[float] = []
    for _ in range(cfg.max_outer):
        if time.perf_counter() > deadline:
            if viol <= cfg.tol_feas:
                return x, iters, Status.FEASIBLE, "time budget reached at a feasible point"
            return x, iters, Status.ITER_LIMIT, "time budget exhausted"
        x, k, converged = _descend(fun, x, cfg, cfg.max_inner)
        iters += k
        new_viol = problem.max_violation(x)
        history.append(new_viol)
        score = problem.objective(x, grad=False)[0] if fun.weight else 0.0
        log.debug("w=%g rho=%.0e inner=%d conv=%s viol=%.2e score=%.6f", fun.weight, fun.rho, k, converged, new_viol, score)
        if new_viol <= cfg.tol_feas and converged:
            if fun.weight == 0.0 or (last is not None and abs(score - last) <= 1e-6 * max(1.0, abs(score))):
                return x, iters, Status.FEASIBLE, "converged"
        if fun.weight and new_viol <= cfg.tol_feas and last is not None:
            if last - score <= cfg.tol_score * max(1.0, abs(score)):
                return x, iters, Status.FEASIBLE, "converged (objective stagnating)"
        if k == 0 and not converged:
            # no step decreases the merit function: a kink of the min-type
            # residuals, where a stiffer penalty does not help
            if new_viol <= cfg.tol_feas:
                return x, iters, Status.FEASIBLE, "stalled at a feasible point"
            return x, iters, Status.INFEASIBLE, "stalled with violated constraints"
        last = score
        recent.append(new_viol)
        if new_viol > cfg.tol_feas and len(recent) > STALL_WINDOW and new_viol > 0.5 * recent[-STALL_WINDOW - 1]:
            return x, iters, Status.INFEASIBLE, "violation stagnating with violated constraints"
        fun.update_multipliers(x)
        if new_viol > 0.25 * viol and new_viol > cfg.tol_feas:
            if fun.rho * cfg.penalty_growth > cfg.penalty_max:
                return x, iters, Status.INFEASIBLE, "penalty limit reached with violated constraints"
            fun.rho *= cfg.penalty_growth
        viol = new_viol
    if viol <= cfg.tol_feas:
        return x, iters, Status.FEASIBLE, "feasible at iteration limit"
    return x, iters, Status.ITER_LIMIT, "outer iteration limit"


def _solve_from(problem: NlpProblem, x0: np.ndarray, cfg: SolverConfig, deadline=float("inf")) -> SolveResult:
    """Feasibility phase (objective off), then the full augmented Lagrangian.

    The second phase keeps the penalty reached by the first one, so the
    objective cannot drag a feasible configuration out of its basin before the
    constraint terms have any weight.
    """
    fun = _Lagrangian(problem)
    fun.rho = cfg.penalty_init
    x = x0.copy()
    viol = problem.max_violation(x)
    f0 = problem.objective(x)[0]
    if not np.isfinite(viol) or not np.isfinite(f0):
        return SolveResult(x, float(f0), float(viol), Status.INFEASIBLE, 0, "non-finite evaluation at start")
    history: list[float] = []
    fun.weight = 0.0
    x, iters, status, message = _al_loop(fun, problem, x, cfg, history, deadline)
    if status is not Status.FEASIBLE and np.isfinite(cfg.max_step):
        # the short steps ended in a kink; retry with full steps
        fun.rho = cfg.penalty_init
        fun.reset_multipliers()
        x, k, status, message = _al_loop(fun, problem, x0.copy(), replace(cfg, max_step=float("inf")), history, deadline)
        iters += k
    if status is Status.FEASIBLE:
        fun.weight = 1.0
        fun.rho = max(fun.rho, cfg.penalty_objective)
        fun.estimate_multipliers(x)
        x, k, status, message = _al_loop(fun, problem, x, cfg, history, deadline)
        iters += k
        if status is not Status.FEASIBLE:
            # restoration: drop the objective again and repair from here
            fun.weight = 0.0
            fun.rho = cfg.penalty_init
            fun.reset_multipliers()
            x, k, status, msg = _al_loop(fun, problem, x, cfg, history, deadline)
            iters += k
            message = f"{message}; restoration: {msg}"
    else:
        message = "feasibility phase: " + message
    score = float(problem.objective(x)[0])
    return SolveResult(x, score, float(problem.max_violation(x)), status, iters, message, history)


def _better(a: SolveResult, b: SolveResult | None) -> bool:
    if b is None:
        return True
    fa, fb = a.status is Status.FEASIBLE, b.status is Status.FEASIBLE
    if fa != fb:
        return fa
    if fa:
        return a.score < b.score
    return a.max_violation < b.max_violation


def solve(problem: NlpProblem, cfg: SolverConfig | None = None) -> SolveResult:
    """Solve from the all-zero iterate; on failure retry from seeded perturbations."""
    cfg = cfg or SolverConfig()
    x0 = np.zeros(problem.n_vars)
    deadline = time.perf_counter() + cfg.time_budget if cfg.time_budget else float("inf")
    best = _solve_from(problem, x0, cfg, deadline)
    if best.status is Status.FEASIBLE or best.message.startswith("non-finite"):
        return best
    rng = np.random.default_rng(cfg.seed)
    total = best.iterations
    for _ in range(cfg.restart_seeds):
        if time.perf_counter() > deadline:
            break
        res = _solve_from(problem, x0 + rng.uniform(-0.1, 0.1, size=x0.size), cfg, deadline)
        total += res.iterations
        if _better(res, best):
            best = res
        if best.status is Status.FEASIBLE:
            break
    best.iterations = total
    return best


# --- gradient checking -------------------------------------------------------------


@dataclass
class GradientReport:
    objective: float
    blocks: dict[str, float]
    skipped: int = 0

    @property
    def worst(self) -> float:
        return max([self.objective, *self.blocks.values()])

    def passed(self, threshold: float) -> bool:
        return self.worst <= threshold


def _rel_err(J, fd, floor=1e-2) -> float:
    if J.size == 0:
        return 0.0
    return float(np.max(np.abs(J - fd)) / max(float(np.max(np.abs(fd))), floor))


def _central(f, x, cols, h):
    x = np.array(x, dtype=float)
    out = []
    for c in cols:
        old = x[c]
        x[c] = old + h
        fp = np.atleast_1d(f(x))
        x[c] = old - h
        fm = np.atleast_1d(f(x))
        x[c] = old
        out.append((fp - fm) / (2 * h))
    return np.array(out).T


def check_gradients(problem: NlpProblem, point, h: float = 1e-6, spot_checks: int = 6, seed: int = 0) -> GradientReport:
    """Analytic vs central-difference Jacobians, max relative error per block.

    Each block is differenced over its declared columns plus a few random
    other columns, which must come out zero. Blocks whose differences at
    steps ``h`` and ``10 h`` disagree sit on a feature switch and are skipped.
    """
    x = np.asarray(point, dtype=float)
    n = problem.n_vars
    rng = np.random.default_rng(seed)
    _, g = problem.objective(x)
    fd = _central(lambda z: problem.objective(z, grad=False)[0], x, range(n), h)[0]
    obj_err = _rel_err(g, fd)
    errs: dict[str, float] = {}
    skipped = 0
    snap = problem.snapshot(x)
    for b in problem.blocks:
        cols, J = b.jacobian(snap)
        others = np.setdiff1d(np.arange(n), cols)
        extra = rng.choice(others, size=min(spot_checks, others.size), replace=False) if others.size else others
        check = np.concatenate([cols, extra]).astype(int)
        full = np.zeros((b.dim, check.size))
        full[:, : cols.size] = J
        forms = [(b.name, b.value, full)]
        if b.root is not None:
            rcols, rJ = b.root_jacobian(snap)
            rfull = np.zeros((rJ.shape[0], check.size))
            where = {int(c): i for i, c in enumerate(check)}
            rfull[:, [where[int(c)] for c in rcols]] = rJ
            forms.append((b.name + " root", b.root, rfull))
        for name, fn, analytic in forms:
            f = lambda z, fn=fn: fn(problem.snapshot(z))
            fd1 = _central(f, x, check, h)
            fd10 = _central(f, x, check, 10 * h)
            if _rel_err(fd1, fd10) > 1e-3:
                skipped += 1
                continue
            errs[name] = max(errs.get(name, 0.0), _rel_err(analytic, fd1))
    return GradientReport(obj_err, errs, skipped)
