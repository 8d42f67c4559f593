"""Standard Denavit-Hartenberg forward kinematics for a 6-joint arm.

Joint ``i`` contributes ``Rz(theta_i) Tz(d_i) Tx(a_i) Rx(alpha_i)`` with
``theta_i = q_i + theta_offset_i``. All functions accept a single joint
vector ``(6,)`` or a batch ``(M, 6)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from ..errors import ContractError, DimensionError


@dataclass(frozen=True)
class DHRow:
    a: float
    alpha: float
    d: float
    theta_offset: float = 0.0


def translation(x: float, y: float, z: float) -> np.ndarray:
    t = np.eye(4)
    t[:3, 3] = (x, y, z)
    return t


@dataclass(frozen=True)
class Payload:
    """Cylinder fixed to the flange; its axis is the local z of ``mount``."""

    radius: float
    half_length: float
    mount: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        if self.radius <= 0 or self.half_length < 0:
            raise ContractError("payload radius must be positive and half-length non-negative")
        if np.shape(self.mount) != (4, 4):
            raise DimensionError("payload mount must be a 4x4 transform")

    @classmethod
    def on_flange(cls, radius: float, half_length: float, standoff: float = 0.03) -> "Payload":
        """Coaxial cylinder whose near face sits ``standoff`` beyond the flange."""
        return cls(radius, half_length, translation(0.0, 0.0, standoff + half_length))


@dataclass(frozen=True)
class KinematicChain:
    dh: Tuple[DHRow, ...]
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    payload: Payload

    def __post_init__(self):
        if len(self.dh) != 6 or len(self.lower) != 6 or len(self.upper) != 6:
            raise ContractError("a chain has exactly 6 revolute joints")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ContractError("joint limits need lower < upper")

    def within_limits(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        return np.all((q >= np.asarray(self.lower)) & (q <= np.asarray(self.upper)), axis=-1)

    def with_payload(self, payload: Payload) -> "KinematicChain":
        return KinematicChain(self.dh, self.lower, self.upper, payload)


UR3_DH = (
    DHRow(0.0, math.pi / 2, 0.1519),
    DHRow(-0.24365, 0.0, 0.0),
    DHRow(-0.21325, 0.0, 0.0),
    DHRow(0.0, math.pi / 2, 0.11235),
    DHRow(0.0, -math.pi / 2, 0.08535),
    DHRow(0.0, 0.0, 0.0819),
)
UR3_HOME = (0.0, -math.pi / 2, 0.0, -math.pi / 2, 0.0, 0.0)


def ur3_chain(payload: Payload = None) -> KinematicChain:
    """UR3-like geometry with illustrative limits and a small coaxial cylinder."""
    payload = payload if payload is not None else Payload.on_flange(0.05, 0.06)
    lower = (-math.pi, -math.pi, -math.pi, -math.pi, -math.pi, -2 * math.pi)
    upper = (math.pi, 0.0, math.pi, math.pi, math.pi, 2 * math.pi)
    return KinematicChain(UR3_DH, lower, upper, payload)


def dh_transform(a: float, alpha: float, d: float, theta) -> np.ndarray:
    """``(..., 4, 4)`` transform for scalar geometry and scalar/array ``theta``."""
    theta = np.asarray(theta, dtype=np.float64)
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = math.cos(alpha), math.sin(alpha)
    out = np.zeros(theta.shape + (4, 4))
    out[..., 0, 0] = ct
    out[..., 0, 1] = -st * ca
    out[..., 0, 2] = st * sa
    out[..., 0, 3] = a * ct
    out[..., 1, 0] = st
    out[..., 1, 1] = ct * ca
    out[..., 1, 2] = -ct * sa
    out[..., 1, 3] = a * st
    out[..., 2, 1] = sa
    out[..., 2, 2] = ca
    out[..., 2, 3] = d
    out[..., 3, 3] = 1.0
    return out


@dataclass
class FKResult:
    """World-frame geometry of one or many configurations.

    ``frames[..., i]`` is the pose of frame ``i`` (0 = base, 6 = flange);
    ``elbows[..., i]`` is the point reached from frame ``i`` along its z by
    ``d_{i+1}``, so link ``i + 1`` runs ``frames[i] -> elbows[i] ->
    frames[i + 1]``. ``payload`` is the cylinder frame.
    """

    frames: np.ndarray
    elbows: np.ndarray
    payload: np.ndarray

    @property
    def end_effector(self) -> np.ndarray:
        return self.frames[..., 6, :, :]

    def origins(self) -> np.ndarray:
        return self.frames[..., :3, 3]


def fk(chain: KinematicChain, q) -> FKResult:
    q = np.asarray(q, dtype=np.float64)
    if q.shape[-1] != 6:
        raise DimensionError(f"joint vector must have 6 entries, got {q.shape}")
    lead = q.shape[:-1]
    frames = np.empty(lead + (7, 4, 4))
    elbows = np.empty(lead + (6, 3))
    frames[..., 0, :, :] = np.eye(4)
    current = np.broadcast_to(np.eye(4), lead + (4, 4))
    for i, row in enumerate(chain.dh):
        elbows[..., i, :] = current[..., :3, 3] + row.d * current[..., :3, 2]
        current = current @ dh_transform(row.a, row.alpha, row.d, q[..., i] + row.theta_offset)
        frames[..., i + 1, :, :] = current
    return FKResult(frames, elbows, current @ chain.payload.mount)


def invert_transform(t: np.ndarray) -> np.ndarray:
    r, p = t[..., :3, :3], t[..., :3, 3]
    out = np.zeros(t.shape)
    rt = np.swapaxes(r, -1, -2)
    out[..., :3, :3] = rt
    out[..., :3, 3] = -np.einsum("...ij,...j->...i", rt, p)
    out[..., 3, 3] = 1.0
    return out


def cartesian_to_spherical(p) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(r, azimuth, elevation)`` with azimuth in the xy-plane from +x, elevation from it.

    On the polar axis (horizontal extent below ``1e-12 r``) the azimuth is
    undefined and reported as 0.
    """
    p = np.asarray(p, dtype=np.float64)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    rho = np.hypot(x, y)
    r = np.sqrt(x * x + y * y + z * z)
    az = np.where(rho > 1e-12 * r, np.arctan2(y, x), 0.0)
    return r, az, np.arctan2(z, rho)


def spherical_to_cartesian(r, azimuth, elevation) -> np.ndarray:
    r, az, el = (np.asarray(v, dtype=np.float64) for v in (r, azimuth, elevation))
    ce = np.cos(el)
    return np.stack([r * ce * np.cos(az), r * ce * np.sin(az), r * np.sin(el)], axis=-1)


def to_spherical(chain: KinematicChain, q, camera_extrinsic) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Camera optical centre in the payload (satellite body) frame, in spherical form.

    ``camera_extrinsic`` is the camera pose in the world (4x4); only its
    translation (the optical centre) matters here.
    """
    cam = np.asarray(camera_extrinsic, dtype=np.float64)
    if cam.shape != (4, 4):
        raise DimensionError("camera extrinsic must be a 4x4 transform")
    body = fk(chain, q).payload
    centre = np.append(cam[:3, 3], 1.0)
    local = np.einsum("...ij,j->...i", invert_transform(body), centre)[..., :3]
    return cartesian_to_spherical(local)
