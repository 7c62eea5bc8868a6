"""STRIPS domain over typed objects and breadth-first skeleton search.

States are frozensets of ground atoms ``(predicate, arg, ...)``. Formulas
support conjunction, disjunction, negation, universal quantification and the
static identity ``eq``. Effects use delete-then-add semantics, with universally
quantified deletions expanded over the object set.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Union

Atom = tuple  # ("on", "box", "table")
SymbolicState = frozenset

# Timesteps and (control, target) pairs of the built-in primitives.
PRIMITIVE_SPANS = {"pick": 1, "place": 1, "push": 2}


class ContractError(ValueError):
    """An action was applied in a state where it is not applicable."""


# --- formulas ------------------------------------------------------------------


@dataclass(frozen=True)
class Pred:
    name: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class Not:
    body: "Formula"


@dataclass(frozen=True)
class And:
    parts: tuple["Formula", ...]


@dataclass(frozen=True)
class Or:
    parts: tuple["Formula", ...]


@dataclass(frozen=True)
class Forall:
    variables: tuple[tuple[str, str | None], ...]
    body: "Formula"


Formula = Union[Pred, Not, And, Or, Forall]


def is_var(term: str) -> bool:
    return term.startswith("?")


def _bind(args, env) -> tuple:
    return tuple(env.get(a, a) if is_var(a) else a for a in args)


@dataclass(frozen=True)
class Delete:
    atom: Pred


@dataclass(frozen=True)
class Add:
    atom: Pred


@dataclass(frozen=True)
class ForallDelete:
    variables: tuple[tuple[str, str | None], ...]
    atom: Pred


Effect = Union[Add, Delete, ForallDelete]


@dataclass(frozen=True)
class ActionSchema:
    name: str
    parameters: tuple[tuple[str, str | None], ...]
    precondition: Formula
    effects: tuple[Effect, ...]

    def __post_init__(self):
        if self.name not in PRIMITIVE_SPANS:
            raise ValueError(f"action {self.name!r} is not one of {sorted(PRIMITIVE_SPANS)}")

    @property
    def span(self) -> int:
        return PRIMITIVE_SPANS[self.name]


@dataclass(frozen=True)
class GroundedAction:
    name: str
    args: tuple[str, ...]

    @property
    def span(self) -> int:
        return PRIMITIVE_SPANS[self.name]

    def __str__(self) -> str:
        return f"{self.name}({', '.join(self.args)})"

    def frames(self, ee: str = "ee") -> list[tuple[str, str]]:
        """(control, target) per timestep of this action."""
        if self.name == "pick":
            return [(ee, self.args[0])]
        if self.name == "place":
            return [(self.args[0], self.args[1])]
        a, b, c = self.args
        return [(a, b), (b, c)]


@dataclass
class Domain:
    """Typed objects, action schemas and static facts."""

    name: str
    types: dict[str, str | None]
    predicates: dict[str, int]
    actions: list[ActionSchema]
    objects: dict[str, str]
    static: frozenset = field(default_factory=frozenset)

    def type_closure(self, t: str) -> set[str]:
        out = set()
        seen = 0
        while t is not None and t not in out and seen < 100:
            out.add(t)
            t = self.types.get(t)
            seen += 1
        return out

    def is_a(self, obj: str, t: str | None) -> bool:
        return t is None or t in self.type_closure(self.objects[obj])

    def objects_of(self, t: str | None) -> list[str]:
        return [o for o in self.objects if self.is_a(o, t)]

    # -- semantics ----------------------------------------------------------------

    def holds(self, formula: Formula, state, env=None) -> bool:
        env = env or {}
        if isinstance(formula, Pred):
            args = _bind(formula.args, env)
            if formula.name in ("eq", "="):
                return args[0] == args[1]
            return (formula.name, *args) in state or (formula.name, *args) in self.static
        if isinstance(formula, Not):
            return not self.holds(formula.body, state, env)
        if isinstance(formula, And):
            return all(self.holds(p, state, env) for p in formula.parts)
        if isinstance(formula, Or):
            return any(self.holds(p, state, env) for p in formula.parts)
        if isinstance(formula, Forall):
            return all(self.holds(formula.body, state, {**env, **b}) for b in self._bindings(formula.variables))
        raise TypeError(f"unsupported formula {formula!r}")

    def _bindings(self, variables) -> Iterable[dict]:
        pools = [self.objects_of(t) for _, t in variables]
        for combo in itertools.product(*pools):
            yield {v: o for (v, _), o in zip(variables, combo)}

    def schema(self, name: str) -> ActionSchema:
        for a in self.actions:
            if a.name == name:
                return a
        raise KeyError(f"no action schema named {name!r}")

    def _env(self, action: GroundedAction) -> dict:
        schema = self.schema(action.name)
        if len(schema.parameters) != len(action.args):
            raise ValueError(f"{action} has the wrong number of arguments")
        for (v, t), o in zip(schema.parameters, action.args):
            if o not in self.objects or not self.is_a(o, t):
                raise ValueError(f"{o!r} is not an object of type {t!r} in {action}")
        return {v: o for (v, _), o in zip(schema.parameters, action.args)}

    def applicable(self, state, action: GroundedAction) -> bool:
        return self.holds(self.schema(action.name).precondition, state, self._env(action))

    def apply(self, state, action: GroundedAction) -> frozenset:
        if not self.applicable(state, action):
            raise ContractError(f"{action} is not applicable")
        env = self._env(action)
        dels, adds = set(), set()
        for eff in self.schema(action.name).effects:
            if isinstance(eff, Add):
                adds.add((eff.atom.name, *_bind(eff.atom.args, env)))
            elif isinstance(eff, Delete):
                dels.add((eff.atom.name, *_bind(eff.atom.args, env)))
            else:
                for b in self._bindings(eff.variables):
                    dels.add((eff.atom.name, *_bind(eff.atom.args, {**env, **b})))
        return frozenset((set(state) - dels) | adds)

    def ground_actions(self) -> list[GroundedAction]:
        out = []
        for schema in self.actions:
            pools = [self.objects_of(t) for _, t in schema.parameters]
            for combo in itertools.product(*pools):
                out.append(GroundedAction(schema.name, tuple(combo)))
        return out


def applicable(domain: Domain, state, action: GroundedAction) -> bool:
    return domain.applicable(state, action)


def apply(domain: Domain, state, action: GroundedAction) -> frozenset:
    return domain.apply(state, action)


@dataclass(frozen=True)
class ActionSkeleton:
    actions: tuple[GroundedAction, ...]
    ee: str = "ee"

    @property
    def T(self) -> int:
        return sum(a.span for a in self.actions)

    def __len__(self) -> int:
        return len(self.actions)

    def __str__(self) -> str:
        return ", ".join(str(a) for a in self.actions) or "(empty)"

    def timesteps(self) -> list[tuple[int, int, str, str]]:
        """(timestep, action index, control, target) for t = 1..T."""
        out = []
        t = 1
        for k, a in enumerate(self.actions):
            for control, target in a.frames(self.ee):
                out.append((t, k, control, target))
                t += 1
        return out


def enumerate_skeletons(
    domain: Domain, init, goal: Formula, max_depth: int, ee: str = "ee"
) -> list[ActionSkeleton]:
    """All goal-reaching action sequences up to ``max_depth``, shortest first.

    Breadth-first over action sequences. A branch is cut when it revisits a
    state already on its own path, and is not extended past a goal state.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be at least 1")
    init = frozenset(init)
    if domain.holds(goal, init):
        return [ActionSkeleton((), ee)]
    actions = domain.ground_actions()
    found: list[ActionSkeleton] = []
    frontier = deque([(init, frozenset([init]), ())])
    while frontier:
        state, seen, path = frontier.popleft()
        if len(path) >= max_depth:
            continue
        for a in actions:
            if not domain.applicable(state, a):
                continue
            nxt = domain.apply(state, a)
            if nxt in seen:
                continue
            new_path = path + (a,)
            if domain.holds(goal, nxt):
                found.append(ActionSkeleton(new_path, ee))
            else:
                frontier.append((nxt, seen | {nxt}, new_path))
    return found


def replay(domain: Domain, init, skeleton: ActionSkeleton) -> list[frozenset]:
    """States visited by a skeleton, starting with ``init``."""
    states = [frozenset(init)]
    for a in skeleton.actions:
        states.append(domain.apply(states[-1], a))
    return states
