"""Arm, payload, table and camera described in one ``key = value`` file."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..config import dataclass_to_config, fill_dataclass, parse_config
from ..errors import ContractError
from .collision import Box, CollisionScene
from .kinematics import UR3_DH, UR3_HOME, DHRow, KinematicChain, Payload, translation


@dataclass(frozen=True)
class ArmSetup:
    """Everything workspace construction needs. Angles in radians, lengths in metres.

    ``payload_offset`` shifts the cylinder off the flange axis (zero keeps
    it coaxial, so spinning cannot change its swept volume).
    """

    dh_a: Tuple[float, ...] = tuple(r.a for r in UR3_DH)
    dh_alpha: Tuple[float, ...] = tuple(r.alpha for r in UR3_DH)
    dh_d: Tuple[float, ...] = tuple(r.d for r in UR3_DH)
    dh_theta_offset: Tuple[float, ...] = (0.0,) * 6
    lower: Tuple[float, ...] = (-math.pi, -math.pi, -math.pi, -math.pi, -math.pi, -2 * math.pi)
    upper: Tuple[float, ...] = (math.pi, 0.0, math.pi, math.pi, math.pi, 2 * math.pi)
    home: Tuple[float, ...] = UR3_HOME
    link_radii: Tuple[float, ...] = (0.045, 0.04, 0.035, 0.03, 0.03, 0.03)
    payload_radius: float = 0.05
    payload_half_length: float = 0.06
    payload_standoff: float = 0.03
    payload_offset: Tuple[float, ...] = (0.0, 0.0)
    table: bool = True
    table_top: float = 0.0
    table_half_width: float = 1.0
    table_thickness: float = 0.05
    self_collision: bool = True
    camera: Tuple[float, ...] = (0.6, 0.0, 0.3)

    def __post_init__(self):
        for name in ("dh_a", "dh_alpha", "dh_d", "dh_theta_offset", "lower", "upper", "home", "link_radii"):
            if len(getattr(self, name)) != 6:
                raise ContractError(f"{name} needs 6 values")
        if len(self.camera) != 3 or len(self.payload_offset) != 2:
            raise ContractError("camera needs x, y, z and payload_offset needs x, y")

    def chain(self) -> KinematicChain:
        rows = tuple(DHRow(*v) for v in zip(self.dh_a, self.dh_alpha, self.dh_d, self.dh_theta_offset))
        ox, oy = self.payload_offset
        mount = translation(ox, oy, self.payload_standoff + self.payload_half_length)
        payload = Payload(self.payload_radius, self.payload_half_length, mount)
        return KinematicChain(rows, tuple(self.lower), tuple(self.upper), payload)

    def scene(self) -> CollisionScene:
        table = Box.table(self.table_top, self.table_half_width, self.table_thickness) if self.table else None
        return CollisionScene(self.chain(), tuple(self.link_radii), table, self.self_collision)

    def camera_pose(self) -> np.ndarray:
        return translation(*self.camera)

    def to_text(self) -> str:
        return dataclass_to_config(self)

    @classmethod
    def from_text(cls, text: str) -> "ArmSetup":
        return fill_dataclass(cls, parse_config(text))
