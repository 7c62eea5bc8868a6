from importlib import resources

import numpy as np
import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from cartamp.scene import SceneError, dump_scene, load_scene, scene_from_dict, scene_to_dict

SCENES = resources.files("cartamp") / "scenes"


def doc(**over):
    base = {
        "robot": {"base": [0, 0, 0], "workspace_radius": 0.8, "ee": "ee"},
        "objects": [
            {"name": "table", "parent": "world", "pose": [0.5, 0, 0, 0, 0, 0], "shape": {"box": [0.4, 0.4, 0.02]}},
            {"name": "cup", "parent": "table", "pose": [0.1, 0, 0.07, 0, 0, 0], "shape": {"box": [0.05, 0.05, 0.05]}, "movable": True},
            {"name": "ee", "parent": "world", "pose": [0.3, 0, 0.4, 0, 0, 0]},
        ],
    }
    base.update(over)
    return base


@pytest.mark.parametrize("name", ["reach", "hanoi"])
def test_bundled_scene_round_trips(tmp_path, name):
    scene = load_scene(SCENES / f"{name}.yaml")
    dump_scene(scene, tmp_path / "s.yaml")
    again = load_scene(tmp_path / "s.yaml")
    assert scene_to_dict(again) == scene_to_dict(scene)


finite = st.floats(-10, 10, allow_nan=False)


@given(st.lists(finite, min_size=6, max_size=6))
def test_pose_floats_survive_dump(pose):
    d = doc()
    d["objects"][1]["pose"] = pose
    text = yaml.safe_dump(scene_to_dict(scene_from_dict(d)))
    back = scene_from_dict(yaml.safe_load(text))
    np.testing.assert_array_equal(back.by_name("cup").pose.vector(), np.array(pose))


def test_world_pose_composes_parents():
    scene = scene_from_dict(doc())
    np.testing.assert_allclose(scene.world_pose("cup")[0], [0.6, 0, 0.07])


def test_initial_facts_read_parents_and_reach():
    scene = scene_from_dict(doc())
    facts = scene.initial_facts({"cup", "table"})
    assert ("on", "cup", "table") in facts
    assert ("inworkspace", "cup") in facts and ("inworkspace", "table") in facts


def test_reach_box_starts_out_of_reach():
    scene = load_scene(SCENES / "reach.yaml")
    assert not scene.in_workspace("box")
    assert scene.in_workspace("hook") and scene.in_workspace("shelf")


@pytest.mark.parametrize(
    "mutate, msg",
    [
        (lambda d: d["objects"].append({"name": "world", "parent": "world"}), "implicit"),
        (lambda d: d["objects"].append(dict(d["objects"][0])), "unique"),
        (lambda d: d["objects"][1].update(parent="nowhere"), "unknown parent"),
        (lambda d: d["objects"][0].update(parent="cup"), "cycl"),
        (lambda d: d["robot"].update(ee="gripper"), "end-effector"),
        (lambda d: d["objects"][1].update(pose=[0, 0, 0]), "6 numbers"),
        (lambda d: d.pop("robot"), "missing"),
    ],
)
def test_invalid_scenes_are_rejected(mutate, msg):
    d = doc()
    mutate(d)
    with pytest.raises(SceneError, match=msg):
        scene_from_dict(d)


def test_yaml_syntax_error_reports_position(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("robot: {base: [0, 0, 0]\nobjects: []\n")
    with pytest.raises(SceneError, match="line"):
        load_scene(path)
