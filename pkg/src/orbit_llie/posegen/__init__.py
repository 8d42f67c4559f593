"""Collision-free arm workspace construction and pose sampling for a spinning payload."""
from .collision import Box, CollisionScene, collide, collision_codes, segment_distance
from .halton import halton, halton_point, halton_sequence
from .kinematics import DHRow, KinematicChain, Payload, fk, to_spherical, ur3_chain
from .sampling import Strata, random_sample, stratified_sample
from .setup import ArmSetup
from .workspace import PoseRecord, Workspace, build_workspace, spin_capture_poses

__all__ = [
    "ArmSetup",
    "Box",
    "CollisionScene",
    "DHRow",
    "KinematicChain",
    "Payload",
    "PoseRecord",
    "Strata",
    "Workspace",
    "build_workspace",
    "collide",
    "collision_codes",
    "fk",
    "halton",
    "halton_point",
    "halton_sequence",
    "random_sample",
    "segment_distance",
    "spin_capture_poses",
    "stratified_sample",
    "to_spherical",
    "ur3_chain",
]
