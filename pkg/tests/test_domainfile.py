from importlib import resources

import pytest

from cartamp.domainfile import ParseError, parse_domain, parse_formula
from cartamp.symbolic import And, Forall, Not, Or, Pred

SCENES = resources.files("cartamp") / "scenes"

MINI = """
(define (domain mini)
  (:types movable - obj)
  (:predicates (inhand ?a) (on ?a ?b) (inworkspace ?a) (smaller ?a ?b))
  (:objects cup - movable table - obj)
  (:init (on cup table) (smaller cup table))
  (:action pick
    :parameters (?a - movable)
    :precondition (forall (?b) (not (inhand ?b)))
    :effect (and (inhand ?a) (forall (?b) (not (on ?a ?b)))))
  (:goal (inhand cup)))
"""


def test_minimal_domain_parses():
    df = parse_domain(MINI)
    assert df.domain.objects == {"cup": "movable", "table": "obj"}
    assert df.domain.is_a("cup", "obj") and not df.domain.is_a("table", "movable")
    assert df.goal == Pred("inhand", ("cup",))


def test_unchanged_init_facts_become_static():
    df = parse_domain(MINI)
    assert ("smaller", "cup", "table") in df.domain.static
    assert df.init == {("on", "cup", "table")}


def test_formula_constructs():
    f = parse_formula("(and (on a b) (or (not (inhand a)) (forall (?x) (on ?x b))))")
    assert isinstance(f, And)
    assert isinstance(f.parts[1], Or)
    assert isinstance(f.parts[1].parts[0], Not)
    assert isinstance(f.parts[1].parts[1], Forall)


@pytest.mark.parametrize(
    "text, line, col",
    [
        ("(define (domain x)\n  (:objects a - obj)\n  (:goal (on a b))", 3, 19),
        ("(define (domain x))\n)", 2, 1),
        ("(define (domain x)\n  (:frobnicate))", 2, 3),
    ],
)
def test_errors_carry_line_and_column(text, line, col):
    with pytest.raises(ParseError) as info:
        parse_domain(text)
    assert (info.value.line, info.value.col) == (line, col)
    assert f"line {line}, column {col}" in str(info.value)


def test_unknown_predicate_is_rejected():
    bad = MINI.replace("(:goal (inhand cup))", "(:goal (holding cup))")
    with pytest.raises(ParseError, match="holding"):
        parse_domain(bad)


def test_wrong_arity_is_rejected():
    bad = MINI.replace("(:goal (inhand cup))", "(:goal (on cup))")
    with pytest.raises(ParseError):
        parse_domain(bad)


@pytest.mark.parametrize("name", ["reach", "hanoi"])
def test_bundled_domains_parse(name):
    df = parse_domain((SCENES / f"{name}.pddl").read_text())
    assert {a.name for a in df.domain.actions} <= {"pick", "place", "push"}
    assert df.goal is not None
