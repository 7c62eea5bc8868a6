import time
from importlib import resources

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cartamp.domainfile import load_domain, parse_domain, parse_formula
from cartamp.planner import initial_state
from cartamp.scene import load_scene
from cartamp.symbolic import ContractError, GroundedAction, enumerate_skeletons, replay

SCENES = resources.files("cartamp") / "scenes"


def bench(name):
    scene = load_scene(SCENES / f"{name}.yaml")
    dfile = load_domain(SCENES / f"{name}.pddl")
    return scene, dfile, initial_state(scene, dfile)


@pytest.fixture(scope="module")
def reach():
    return bench("reach")


@pytest.fixture(scope="module")
def hanoi():
    return bench("hanoi")


def act(text):
    name, rest = text.split("(")
    return GroundedAction(name, tuple(a.strip() for a in rest.rstrip(")").split(",")))


# --- applicability and effects --------------------------------------------------------


def test_empty_hand_may_pick(reach):
    _, dfile, _ = reach
    assert dfile.domain.applicable(frozenset({("inworkspace", "box")}), act("pick(box)"))


def test_full_hand_may_not_pick(reach):
    _, dfile, _ = reach
    s = frozenset({("inhand", "hook"), ("inworkspace", "box")})
    assert not dfile.domain.applicable(s, act("pick(box)"))


def test_push_needs_tool_in_hand_and_reachable_support(reach):
    _, dfile, _ = reach
    s = frozenset({("inhand", "hook"), ("on", "box", "table"), ("inworkspace", "table")})
    assert dfile.domain.applicable(s, act("push(hook, box, table)"))
    assert not dfile.domain.applicable(s - {("inworkspace", "table")}, act("push(hook, box, table)"))


def test_pick_clears_support_and_fills_hand(reach):
    _, dfile, _ = reach
    s = frozenset({("on", "box", "table"), ("inworkspace", "box")})
    assert dfile.domain.apply(s, act("pick(box)")) == {("inhand", "box"), ("inworkspace", "box")}


def test_place_empties_hand(reach):
    _, dfile, _ = reach
    s = frozenset({("inhand", "box"), ("inworkspace", "shelf")})
    assert dfile.domain.apply(s, act("place(box, shelf)")) == {("on", "box", "shelf"), ("inworkspace", "shelf")}


def test_push_brings_object_into_reach(reach):
    _, dfile, _ = reach
    s = frozenset({("inhand", "hook"), ("on", "box", "table"), ("inworkspace", "table")})
    assert ("inworkspace", "box") in dfile.domain.apply(s, act("push(hook, box, table)"))


def test_apply_rejects_inapplicable_action(reach):
    _, dfile, _ = reach
    with pytest.raises(ContractError):
        dfile.domain.apply(frozenset({("inhand", "hook")}), act("pick(box)"))


def test_wrongly_typed_argument_is_refused(reach):
    _, dfile, _ = reach
    with pytest.raises(ValueError):
        dfile.domain.applicable(frozenset(), act("pick(table)"))


def test_push_spans_two_timesteps():
    assert act("push(hook, box, table)").span == 2
    assert act("pick(box)").span == act("place(box, shelf)").span == 1


# --- enumeration ------------------------------------------------------------------


def test_reach_has_three_hook_skeletons(reach):
    scene, dfile, init = reach
    t0 = time.perf_counter()
    found = enumerate_skeletons(dfile.domain, init, dfile.goal, 5, ee=scene.ee)
    assert time.perf_counter() - t0 < 10.0
    assert len(found) == 3
    spots = set()
    for sk in found:
        names = [str(a) for a in sk.actions]
        assert names[:2] == ["pick(hook)", "push(hook, box, table)"]
        assert names[3:] == ["pick(box)", "place(box, shelf)"]
        assert sk.actions[2].name == "place" and sk.actions[2].args[0] == "hook"
        spots.add(sk.actions[2].args[1])
        assert sk.T == 6
    assert spots == {"table", "shelf", "box"}


def test_hanoi_has_two_fourteen_move_solutions(hanoi):
    scene, dfile, init = hanoi
    t0 = time.perf_counter()
    found = enumerate_skeletons(dfile.domain, init, dfile.goal, 14, ee=scene.ee)
    assert time.perf_counter() - t0 < 10.0
    assert len(found) == 2
    assert all(len(sk) == 14 for sk in found)
    assert {sk.actions[7].args[1] for sk in found} == {"left", "middle"}


def test_hanoi_never_stacks_larger_on_smaller(hanoi):
    scene, dfile, init = hanoi
    size = {"b1": 3, "b2": 2, "b3": 1}
    for sk in enumerate_skeletons(dfile.domain, init, dfile.goal, 14, ee=scene.ee):
        for state in replay(dfile.domain, init, sk):
            for fact in state:
                if fact[0] == "on" and fact[2] in size:
                    assert size[fact[1]] < size[fact[2]]


def test_every_skeleton_replays_to_goal(reach, hanoi):
    for scene, dfile, init in (reach, hanoi):
        depth = 5 if "box" in dfile.domain.objects else 14
        for sk in enumerate_skeletons(dfile.domain, init, dfile.goal, depth, ee=scene.ee):
            assert dfile.domain.holds(dfile.goal, replay(dfile.domain, init, sk)[-1])


def test_too_shallow_search_finds_nothing(hanoi):
    scene, dfile, init = hanoi
    assert enumerate_skeletons(dfile.domain, init, dfile.goal, 3, ee=scene.ee) == []


def test_satisfied_goal_gives_one_empty_skeleton(reach):
    _, dfile, init = reach
    goal = parse_formula("(on hook table)", dfile.domain)
    found = enumerate_skeletons(dfile.domain, init, goal, 3)
    assert len(found) == 1 and len(found[0]) == 0 and found[0].T == 0


def test_depth_must_be_positive(reach):
    _, dfile, init = reach
    with pytest.raises(ValueError):
        enumerate_skeletons(dfile.domain, init, dfile.goal, 0)


@settings(max_examples=10)
@given(st.integers(1, 6))
def test_deeper_search_keeps_shallower_results(depth):
    scene, dfile, init = bench("reach")
    shallow = enumerate_skeletons(dfile.domain, init, dfile.goal, depth)
    deep = enumerate_skeletons(dfile.domain, init, dfile.goal, depth + 1)
    assert set(map(str, shallow)) <= set(map(str, deep))
    lengths = [len(s) for s in deep]
    assert lengths == sorted(lengths) and all(n <= depth + 1 for n in lengths)


def test_timesteps_assign_control_and_target():
    sk = parse_and_enumerate_reach()[0]
    steps = sk.timesteps()
    assert [(t, c, g) for t, _, c, g in steps[:3]] == [(1, "ee", "hook"), (2, "hook", "box"), (3, "box", "table")]


def parse_and_enumerate_reach():
    _, dfile, init = bench("reach")
    return enumerate_skeletons(dfile.domain, init, dfile.goal, 5)


def test_disjunctive_goal_parses():
    text = (SCENES / "hanoi.pddl").read_text()
    goal = parse_domain(text).goal
    assert type(goal).__name__ == "Or"
