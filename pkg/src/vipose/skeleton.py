"""Skeleton topology: joint layout, kinematic tree, body parts.

Poses are plain numpy arrays throughout the library: a 2D pose is a
float64 array of shape (J, 2) in normalized image units, a 3D pose is
(J, 3) in millimeters (camera coordinates). Batches stack along a
leading axis, (N, J, 2) / (N, J, 3).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PartSpec:
    """One articulated body part with its local canonical-frame recipe.

    ``plane_triple`` defines the part's anatomical plane, ``axis_pair``
    the proximal bone whose direction becomes the local +Z axis, and
    ``origin_joint`` the local coordinate origin. All are indices into
    the part's parent topology; every referenced joint must also be a
    member of ``joints``.
    """

    name: str
    joints: tuple[int, ...]
    plane_triple: tuple[int, int, int]
    axis_pair: tuple[int, int]
    origin_joint: int


@dataclass(frozen=True)
class SkeletonTopology:
    """Joint names, kinematic tree, bones, limb pairs and body parts.

    ``parent[j]`` is the parent joint index or -1 for joints hanging
    directly off the virtual root (the midpoint of ``root_pair``).
    Bones are (child, parent) index pairs; ``limb_pairs`` pairs each
    left-side bone with its right-side twin for symmetry evaluation.
    ``plane_joints`` is the (left_hip, right_hip, chest) triple that
    fixes the whole-body anatomical plane.
    """

    joint_names: tuple[str, ...]
    parent: tuple[int, ...]
    bones: tuple[tuple[int, int], ...]
    limb_pairs: tuple[tuple[tuple[int, int], tuple[int, int]], ...]
    plane_joints: tuple[int, int, int]
    root_pair: tuple[int, int]
    parts: tuple[PartSpec, ...] = field(default_factory=tuple)

    @property
    def joint_count(self) -> int:
        return len(self.joint_names)

    def index(self, name: str) -> int:
        return self.joint_names.index(name)

    def part(self, name: str) -> PartSpec:
        for p in self.parts:
            if p.name == name:
                return p
        raise KeyError(f"no part named {name!r}")

    def validate(self) -> None:
        """Check the structural invariants; raise ValueError on violation."""
        j = self.joint_count
        if j <= 0:
            raise ValueError("topology needs at least one joint")
        if len(self.parent) != j:
            raise ValueError("parent map length != joint count")

        def _check(idx: int, what: str) -> None:
            if not 0 <= idx < j:
                raise ValueError(f"{what} references joint {idx} out of range")

        # Tree property: walking parent links from any joint terminates at
        # a parentless joint without revisiting anything.
        for start in range(j):
            seen = set()
            cur = start
            while cur != -1:
                if cur in seen:
                    raise ValueError(f"cycle in parent links at joint {cur}")
                seen.add(cur)
                nxt = self.parent[cur]
                if nxt != -1:
                    _check(nxt, "parent")
                cur = nxt

        for child, par in self.bones:
            _check(child, "bone")
            _check(par, "bone")
        for left, right in self.limb_pairs:
            for a, b in (left, right):
                _check(a, "limb pair")
                _check(b, "limb pair")
        for idx in self.plane_joints:
            _check(idx, "plane joint")
        for idx in self.root_pair:
            _check(idx, "root pair")

        covered: list[int] = []
        for part in self.parts:
            members = set(part.joints)
            for idx in part.joints:
                _check(idx, f"part {part.name}")
            for idx in part.plane_triple:
                if idx not in members:
                    raise ValueError(f"part {part.name}: plane joint {idx} not a member")
            a, b = part.axis_pair
            if a == b:
                raise ValueError(f"part {part.name}: axis pair joints must differ")
            for idx in part.axis_pair:
                if idx not in members:
                    raise ValueError(f"part {part.name}: axis joint {idx} not a member")
            if part.origin_joint not in members:
                raise ValueError(f"part {part.name}: origin joint not a member")
            covered.extend(part.joints)
        if len(covered) != len(set(covered)):
            raise ValueError("parts must not share joints")

    def hash(self) -> str:
        """Stable content hash, used to bind checkpoints to a topology."""
        payload = json.dumps(_topology_to_dict(self), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()


def default_topology() -> SkeletonTopology:
    """The default 17-joint layout with five articulated parts.

    Legs and arms carry three joints each (proximal joint, hinge, end
    effector); the fifth part is the chest-thorax-jaw-head chain. The
    pelvis is the only torso joint left outside every part.
    """
    names = (
        "pelvis",
        "right_hip", "right_knee", "right_ankle",
        "left_hip", "left_knee", "left_ankle",
        "chest", "thorax", "jaw", "head",
        "left_shoulder", "left_elbow", "left_wrist",
        "right_shoulder", "right_elbow", "right_wrist",
    )
    idx = {n: i for i, n in enumerate(names)}
    parent_of = {
        "pelvis": None,
        "right_hip": "pelvis", "right_knee": "right_hip", "right_ankle": "right_knee",
        "left_hip": "pelvis", "left_knee": "left_hip", "left_ankle": "left_knee",
        "chest": "pelvis", "thorax": "chest", "jaw": "thorax", "head": "jaw",
        "left_shoulder": "thorax", "left_elbow": "left_shoulder",
        "left_wrist": "left_elbow",
        "right_shoulder": "thorax", "right_elbow": "right_shoulder",
        "right_wrist": "right_elbow",
    }
    parent = tuple(-1 if parent_of[n] is None else idx[parent_of[n]] for n in names)
    bones = tuple((i, parent[i]) for i in range(len(names)) if parent[i] != -1)

    def bone(child: str, par: str) -> tuple[int, int]:
        return (idx[child], idx[par])

    limb_pairs = (
        (bone("left_elbow", "left_shoulder"), bone("right_elbow", "right_shoulder")),
        (bone("left_wrist", "left_elbow"), bone("right_wrist", "right_elbow")),
        (bone("left_knee", "left_hip"), bone("right_knee", "right_hip")),
        (bone("left_ankle", "left_knee"), bone("right_ankle", "right_knee")),
    )

    def part(name: str, joints: tuple[str, ...], plane: tuple[str, str, str],
             axis: tuple[str, str], origin: str) -> PartSpec:
        return PartSpec(
            name=name,
            joints=tuple(idx[n] for n in joints),
            plane_triple=tuple(idx[n] for n in plane),
            axis_pair=(idx[axis[0]], idx[axis[1]]),
            origin_joint=idx[origin],
        )

    parts = (
        part("left_arm", ("left_shoulder", "left_elbow", "left_wrist"),
             ("left_shoulder", "left_elbow", "left_wrist"),
             ("left_shoulder", "left_elbow"), "left_shoulder"),
        part("right_arm", ("right_shoulder", "right_elbow", "right_wrist"),
             ("right_shoulder", "right_elbow", "right_wrist"),
             ("right_shoulder", "right_elbow"), "right_shoulder"),
        part("left_leg", ("left_hip", "left_knee", "left_ankle"),
             ("left_hip", "left_knee", "left_ankle"),
             ("left_hip", "left_knee"), "left_hip"),
        part("right_leg", ("right_hip", "right_knee", "right_ankle"),
             ("right_hip", "right_knee", "right_ankle"),
             ("right_hip", "right_knee"), "right_hip"),
        part("head_chain", ("chest", "thorax", "jaw", "head"),
             ("chest", "thorax", "jaw"),
             ("chest", "thorax"), "chest"),
    )

    topo = SkeletonTopology(
        joint_names=names,
        parent=parent,
        bones=bones,
        limb_pairs=limb_pairs,
        plane_joints=(idx["left_hip"], idx["right_hip"], idx["chest"]),
        root_pair=(idx["left_hip"], idx["right_hip"]),
        parts=parts,
    )
    topo.validate()
    return topo


def _topology_to_dict(topo: SkeletonTopology) -> dict:
    names = topo.joint_names

    def nm(i: int) -> str:
        return names[i]

    return {
        "joint_names": list(names),
        "parents": {names[i]: (None if p == -1 else names[p])
                    for i, p in enumerate(topo.parent)},
        "bones": [[nm(c), nm(p)] for c, p in topo.bones],
        "limb_pairs": [[[nm(a), nm(b)], [nm(c), nm(d)]]
                       for (a, b), (c, d) in topo.limb_pairs],
        "plane_joints": [nm(i) for i in topo.plane_joints],
        "root_pair": [nm(i) for i in topo.root_pair],
        "parts": [
            {
                "name": p.name,
                "joints": [nm(i) for i in p.joints],
                "plane_triple": [nm(i) for i in p.plane_triple],
                "axis_pair": [nm(i) for i in p.axis_pair],
                "origin_joint": nm(p.origin_joint),
            }
            for p in topo.parts
        ],
    }


def topology_from_dict(data: dict) -> SkeletonTopology:
    names = tuple(data["joint_names"])
    idx = {n: i for i, n in enumerate(names)}
    parents = data["parents"]
    parent = tuple(-1 if parents[n] is None else idx[parents[n]] for n in names)
    topo = SkeletonTopology(
        joint_names=names,
        parent=parent,
        bones=tuple((idx[c], idx[p]) for c, p in data["bones"]),
        limb_pairs=tuple(((idx[a], idx[b]), (idx[c], idx[d]))
                         for (a, b), (c, d) in data["limb_pairs"]),
        plane_joints=tuple(idx[n] for n in data["plane_joints"]),
        root_pair=tuple(idx[n] for n in data["root_pair"]),
        parts=tuple(
            PartSpec(
                name=p["name"],
                joints=tuple(idx[n] for n in p["joints"]),
                plane_triple=tuple(idx[n] for n in p["plane_triple"]),
                axis_pair=tuple(idx[n] for n in p["axis_pair"]),
                origin_joint=idx[p["origin_joint"]],
            )
            for p in data["parts"]
        ),
    )
    topo.validate()
    return topo


def load_topology(path) -> SkeletonTopology:
    """Read a topology config file (JSON: key/value plus lists, by name)."""
    with open(path) as fh:
        return topology_from_dict(json.load(fh))


def save_topology(topo: SkeletonTopology, path) -> None:
    with open(path, "w") as fh:
        json.dump(_topology_to_dict(topo), fh, indent=2)
        fh.write("\n")


def check_pose(pose: np.ndarray, topo: SkeletonTopology, dims: int) -> np.ndarray:
    """Validate one pose or a batch: shape (J, dims) or (N, J, dims), finite."""
    pose = np.asarray(pose, dtype=np.float64)
    if pose.shape[-2:] != (topo.joint_count, dims):
        raise ValueError(
            f"pose shape {pose.shape} does not match ({topo.joint_count}, {dims})")
    if not np.isfinite(pose).all():
        raise ValueError("pose contains non-finite values")
    return pose
