"""Scene description: frames, shapes, robot base and the YAML file format.

Example document::

    robot: {base: [0, 0, 0], workspace_radius: 0.8, ee: ee}
    gravity: [0, 0, -1]
    objects:
      - {name: table, parent: world, pose: [0.6, 0, -0.02, 0, 0, 0],
         shape: {box: [0.8, 0.8, 0.02]}}
      - {name: ee, parent: world, pose: [0.3, 0, 0.4, 0, 0, 0]}
      - name: hook
        parent: table
        pose: [0.4, -0.3, 0.04, 0, 0, 0]
        movable: true
        shape:
          pieces:
            - {box: [0.2, 0.02, 0.02]}
            - {box: [0.02, 0.08, 0.02], center: [0.18, 0.1, 0]}

Poses are position plus axis-angle in the parent frame. Floats are written
with ``repr`` precision so files round-trip exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .geometry import ConvexShape, Shape
from .liegroup import RelPose, compose
from .scenegraph import KinematicTimeline


class SceneError(ValueError):
    """Inconsistent scene (unknown parent, duplicate name, bad shape)."""


@dataclass
class SceneObject:
    name: str
    parent: str
    pose: RelPose
    shape: Shape | None = None
    movable: bool = False
    shape_spec: dict | None = field(default=None, repr=False)


@dataclass
class Scene:
    objects: list[SceneObject]
    base: np.ndarray
    workspace_radius: float
    ee: str = "ee"
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -1.0]))

    def __post_init__(self):
        names = [o.name for o in self.objects]
        if "world" in names:
            raise SceneError("'world' is implicit and cannot be declared")
        if len(set(names)) != len(names):
            raise SceneError("object names must be unique")
        known = {"world", *names}
        for o in self.objects:
            if o.parent not in known:
                raise SceneError(f"{o.name}: unknown parent {o.parent!r}")
        if self.ee not in names:
            raise SceneError(f"end-effector frame {self.ee!r} is not declared")
        if self.by_name(self.ee).parent != "world":
            raise SceneError("the end-effector must start as a child of the world")
        self.base = np.asarray(self.base, dtype=float)
        self.gravity = np.asarray(self.gravity, dtype=float)
        # validates acyclicity
        self.timeline()

    # -- queries -----------------------------------------------------------------

    @property
    def names(self) -> list[str]:
        return ["world"] + [o.name for o in self.objects]

    def by_name(self, name: str) -> SceneObject:
        for o in self.objects:
            if o.name == name:
                return o
        raise KeyError(name)

    def shape(self, name: str) -> Shape | None:
        return None if name == "world" else self.by_name(name).shape

    def timeline(self) -> KinematicTimeline:
        names = self.names
        index = {n: i for i, n in enumerate(names)}
        parents = [0] + [index[o.parent] for o in self.objects]
        poses = [(np.zeros(3), np.eye(3))] + [o.pose.pose() for o in self.objects]
        try:
            return KinematicTimeline(names, parents, poses)
        except ValueError as exc:
            raise SceneError(str(exc)) from None

    def world_pose(self, name: str):
        """Initial world pose of a frame."""
        if name == "world":
            return np.zeros(3), np.eye(3)
        o = self.by_name(name)
        return compose(self.world_pose(o.parent), o.pose.pose())

    def in_workspace(self, name: str) -> bool:
        return bool(np.linalg.norm(self.world_pose(name)[0] - self.base) <= self.workspace_radius)

    def initial_facts(self, objects) -> frozenset:
        """on(a, b) from the initial parents and inworkspace(x) from the reach test."""
        objects = set(objects)
        facts = set()
        for o in self.objects:
            if o.name in objects and o.parent in objects:
                facts.add(("on", o.name, o.parent))
        for name in objects:
            if name in self.names and name != "world" and self.in_workspace(name):
                facts.add(("inworkspace", name))
        return frozenset(facts)


# --- shapes ---------------------------------------------------------------------


def _piece(spec: dict) -> ConvexShape:
    if "box" in spec:
        return ConvexShape.box(spec["box"], spec.get("center", (0.0, 0.0, 0.0)))
    if "hull" in spec:
        return ConvexShape.hull(spec["hull"], spec.get("com"))
    raise SceneError(f"shape piece needs 'box' or 'hull': {spec}")


def shape_from_spec(spec: dict | None) -> Shape | None:
    if spec is None:
        return None
    try:
        if "pieces" in spec:
            return Shape(tuple(_piece(p) for p in spec["pieces"]))
        return Shape((_piece(spec),))
    except (ValueError, TypeError) as exc:
        raise SceneError(f"invalid shape {spec}: {exc}") from None


def _floats(v) -> list[float]:
    return [float(x) for x in v]


def scene_from_dict(doc: dict) -> Scene:
    try:
        robot = doc["robot"]
        objects = []
        for o in doc["objects"]:
            pose = _floats(o.get("pose", [0.0] * 6))
            if len(pose) != 6:
                raise SceneError(f"{o['name']}: pose needs 6 numbers")
            objects.append(
                SceneObject(
                    name=str(o["name"]),
                    parent=str(o.get("parent", "world")),
                    pose=RelPose.from_vector(pose),
                    shape=shape_from_spec(o.get("shape")),
                    movable=bool(o.get("movable", False)),
                    shape_spec=o.get("shape"),
                )
            )
        return Scene(
            objects=objects,
            base=np.array(_floats(robot.get("base", [0.0, 0.0, 0.0]))),
            workspace_radius=float(robot["workspace_radius"]),
            ee=str(robot.get("ee", "ee")),
            gravity=np.array(_floats(doc.get("gravity", [0.0, 0.0, -1.0]))),
        )
    except KeyError as exc:
        raise SceneError(f"missing field {exc}") from None


def scene_to_dict(scene: Scene) -> dict:
    objs = []
    for o in scene.objects:
        entry = {"name": o.name, "parent": o.parent, "pose": _floats(o.pose.vector())}
        if o.shape_spec is not None:
            entry["shape"] = o.shape_spec
        if o.movable:
            entry["movable"] = True
        objs.append(entry)
    return {
        "robot": {
            "base": _floats(scene.base),
            "workspace_radius": float(scene.workspace_radius),
            "ee": scene.ee,
        },
        "gravity": _floats(scene.gravity),
        "objects": objs,
    }


def load_scene(path) -> Scene:
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
            raise SceneError(f"YAML error{where}: {exc}") from None
    if not isinstance(doc, dict):
        raise SceneError("scene file must be a mapping")
    return scene_from_dict(doc)


def dump_scene(scene: Scene, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(scene_to_dict(scene), fh, sort_keys=False)
