"""PDDL-flavoured domain files.

A file is one s-expression::

    (define (domain reach)
      (:types movable - obj)
      (:predicates (inhand ?a) (on ?a ?b) (inworkspace ?a))
      (:objects hook box - movable table shelf - obj)
      (:init (smaller box table))
      (:action pick
        :parameters (?a - movable)
        :precondition (forall (?b) (not (inhand ?b)))
        :effect (and (inhand ?a) (forall (?b) (not (on ?a ?b)))))
      (:goal (on box shelf)))

Only the constructs of :mod:`cartamp.symbolic` are accepted. ``(:init ...)``
facts over predicates that no action changes become static facts; the rest
seed the initial state.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .symbolic import (
    Add,
    ActionSchema,
    And,
    Delete,
    Domain,
    Forall,
    ForallDelete,
    Formula,
    Not,
    Or,
    Pred,
)

_TOKEN = re.compile(r"\s*(?:(;[^\n]*)|(\()|(\))|([^\s()]+))")


class ParseError(ValueError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line, self.col = line, col


@dataclass
class Sym:
    text: str
    line: int
    col: int


@dataclass
class Lst:
    items: list
    line: int
    col: int


def _position(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


def read_sexpr(text: str):
    """Parse exactly one s-expression, keeping source positions."""
    stack: list[Lst] = []
    result = None
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            break
        pos = m.end()
        comment, lpar, rpar, atom = m.groups()
        if comment is not None:
            continue
        start = m.start(2) if lpar else m.start(3) if rpar else m.start(4)
        line, col = _position(text, start)
        if result is not None and (lpar or atom):
            raise ParseError("trailing content after the top-level expression", line, col)
        if lpar:
            stack.append(Lst([], line, col))
        elif rpar:
            if not stack:
                raise ParseError("unbalanced ')'", line, col)
            done = stack.pop()
            if stack:
                stack[-1].items.append(done)
            else:
                result = done
        else:
            if not stack:
                raise ParseError(f"unexpected atom {atom!r} outside parentheses", line, col)
            stack[-1].items.append(Sym(atom.lower(), line, col))
    if stack:
        raise ParseError("missing ')'", *_position(text, len(text)))
    if result is None:
        raise ParseError("empty document", 1, 1)
    return result


def _err(node, msg):
    return ParseError(msg, node.line, node.col)


def _sym(node, what="symbol") -> str:
    if not isinstance(node, Sym):
        raise _err(node, f"expected a {what}")
    return node.text


def _head(node: Lst) -> str:
    if not node.items:
        raise _err(node, "empty list")
    return _sym(node.items[0], "keyword")


def _typed_list(items) -> list[tuple[str, str | None]]:
    """``a b - t c`` -> [(a, t), (b, t), (c, None)]."""
    out, pending = [], []
    k = 0
    while k < len(items):
        tok = _sym(items[k])
        if tok == "-":
            if k + 1 >= len(items) or not pending:
                raise _err(items[k], "dangling type marker '-'")
            t = _sym(items[k + 1], "type name")
            out += [(p, t) for p in pending]
            pending = []
            k += 2
        else:
            pending.append(tok)
            k += 1
    return out + [(p, None) for p in pending]


class _Parser:
    def __init__(self, predicates: dict[str, int] | None, variables=frozenset()):
        self.predicates = predicates
        self.variables = variables

    def _check_terms(self, node: Lst, name: str, args: list[str], scope):
        if name in ("eq", "="):
            if len(args) != 2:
                raise _err(node, f"{name} takes two arguments")
        elif self.predicates is not None:
            if name not in self.predicates:
                raise _err(node, f"undeclared predicate {name!r}")
            if self.predicates[name] != len(args):
                raise _err(node, f"{name} expects {self.predicates[name]} arguments")
        for a in args:
            if a.startswith("?") and a not in scope:
                raise _err(node, f"unbound variable {a}")

    def atom(self, node, scope) -> Pred:
        if not isinstance(node, Lst):
            raise _err(node, "expected a predicate expression")
        name = _head(node)
        args = [_sym(x, "term") for x in node.items[1:]]
        self._check_terms(node, name, args, scope)
        return Pred(name, tuple(args))

    def formula(self, node, scope) -> Formula:
        if not isinstance(node, Lst):
            raise _err(node, "expected a formula")
        head = _head(node)
        rest = node.items[1:]
        if head in ("and", "or"):
            parts = tuple(self.formula(x, scope) for x in rest)
            return And(parts) if head == "and" else Or(parts)
        if head == "not":
            if len(rest) != 1:
                raise _err(node, "not takes one formula")
            return Not(self.formula(rest[0], scope))
        if head == "forall":
            if len(rest) != 2 or not isinstance(rest[0], Lst):
                raise _err(node, "forall takes a variable list and a body")
            vs = tuple(_typed_list(rest[0].items))
            return Forall(vs, self.formula(rest[1], scope | {v for v, _ in vs}))
        return self.atom(node, scope)

    def effects(self, node, scope) -> list:
        if not isinstance(node, Lst):
            raise _err(node, "expected an effect")
        head = _head(node)
        if head == "and":
            out = []
            for x in node.items[1:]:
                out += self.effects(x, scope)
            return out
        if head == "not":
            return [Delete(self.atom(node.items[1], scope))]
        if head == "forall":
            rest = node.items[1:]
            if len(rest) != 2 or not isinstance(rest[0], Lst):
                raise _err(node, "forall takes a variable list and a body")
            vs = tuple(_typed_list(rest[0].items))
            inner = scope | {v for v, _ in vs}
            body = rest[1]
            if not (isinstance(body, Lst) and _head(body) == "not"):
                raise _err(body, "only quantified deletions are supported")
            return [ForallDelete(vs, self.atom(body.items[1], inner))]
        return [Add(self.atom(node, scope))]


@dataclass
class DomainFile:
    domain: Domain
    init: frozenset
    goal: Formula | None


def parse_domain(text: str) -> DomainFile:
    root = read_sexpr(text)
    if _head(root) != "define":
        raise _err(root, "expected (define ...)")
    name = "domain"
    types: dict[str, str | None] = {"obj": None}
    predicates: dict[str, int] = {}
    objects: dict[str, str] = {}
    action_nodes, init_nodes, goal_node = [], [], None
    for sec in root.items[1:]:
        if not isinstance(sec, Lst):
            raise _err(sec, "expected a section")
        head = _head(sec)
        body = sec.items[1:]
        if head == "domain":
            name = _sym(body[0], "domain name") if body else name
        elif head == ":types":
            for t, parent in _typed_list(body):
                types[t] = parent if parent != t else None
                if parent:
                    types.setdefault(parent, None)
        elif head == ":predicates":
            for p in body:
                if not isinstance(p, Lst):
                    raise _err(p, "expected (predicate ?args)")
                predicates[_head(p)] = len(_typed_list(p.items[1:]))
        elif head == ":objects":
            for o, t in _typed_list(body):
                if t is not None and t not in types:
                    raise _err(sec, f"unknown type {t!r} for object {o!r}")
                objects[o] = t or "obj"
        elif head == ":action":
            action_nodes.append(sec)
        elif head == ":init":
            init_nodes += body
        elif head == ":goal":
            if len(body) != 1:
                raise _err(sec, ":goal takes one formula")
            goal_node = body[0]
        else:
            raise _err(sec, f"unsupported section {head!r}")

    parser = _Parser(predicates)
    actions = [_parse_action(parser, node, types) for node in action_nodes]
    mutable = {eff.atom.name for a in actions for eff in a.effects}
    static, init = set(), set()
    for node in init_nodes:
        atom = parser.atom(node, set())
        for o in atom.args:
            if o not in objects:
                raise _err(node, f"unknown object {o!r}")
        (init if atom.name in mutable else static).add((atom.name, *atom.args))
    goal = parser.formula(goal_node, set()) if goal_node is not None else None
    domain = Domain(name, types, predicates, actions, objects, frozenset(static))
    return DomainFile(domain, frozenset(init), goal)


def _parse_action(parser: _Parser, node: Lst, types) -> ActionSchema:
    if len(node.items) < 2:
        raise _err(node, "action needs a name")
    name = _sym(node.items[1], "action name")
    fields = {}
    items = node.items[2:]
    for k in range(0, len(items), 2):
        key = _sym(items[k], "action field")
        if k + 1 >= len(items):
            raise _err(items[k], f"missing value for {key}")
        fields[key] = items[k + 1]
    params = tuple(_typed_list(fields[":parameters"].items)) if ":parameters" in fields else ()
    for v, t in params:
        if not v.startswith("?"):
            raise _err(fields[":parameters"], f"parameter {v!r} must start with '?'")
        if t is not None and t not in types:
            raise _err(fields[":parameters"], f"unknown type {t!r}")
    scope = {v for v, _ in params}
    pre = parser.formula(fields[":precondition"], scope) if ":precondition" in fields else And(())
    effects = tuple(parser.effects(fields[":effect"], scope)) if ":effect" in fields else ()
    try:
        return ActionSchema(name, params, pre, effects)
    except ValueError as exc:
        raise _err(node.items[1], str(exc)) from None


def parse_formula(text: str, domain: Domain | None = None) -> Formula:
    """Parse a stand-alone ground formula such as a goal."""
    return _Parser(domain.predicates if domain else None).formula(read_sexpr(text), set())


def load_domain(path) -> DomainFile:
    with open(path) as fh:
        return parse_domain(fh.read())
