"""Analytic collision checks between link capsules, the payload and a table box.

Each link is modelled as one or two capsules following its DH offsets and
the payload cylinder as a capsule of the same radius and half-length.
Capsules of links whose ids differ by at most one (neighbours sharing a
joint) are never tested against each other.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..errors import ContractError, DimensionError
from .kinematics import KinematicChain, fk

CLEAR, SELF, TABLE = 0, 1, 2
REASONS = {CLEAR: "clear", SELF: "self", TABLE: "table"}
PAYLOAD_ID = 7

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def point_segment_distance(p, a, b) -> np.ndarray:
    """Distance from points ``p`` to segments ``a -> b`` (broadcast over leading axes)."""
    p, a, b = (np.asarray(v, dtype=np.float64) for v in (p, a, b))
    d = b - a
    dd = np.sum(d * d, axis=-1)
    t = np.sum((p - a) * d, axis=-1) / np.where(dd > 0, dd, 1.0)
    t = np.clip(np.where(dd > 0, t, 0.0), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[..., None] * d), axis=-1)


def segment_distance(p0, p1, q0, q1) -> np.ndarray:
    """Minimum distance between segments ``p0 -> p1`` and ``q0 -> q1``.

    The minimum lies either at an interior critical point (both parameters
    strictly inside) or on the boundary, where it is one of the four
    endpoint-to-segment distances. Taking the smallest candidate keeps
    parallel and degenerate segments exact without special cases.
    """
    p0, p1, q0, q1 = (np.asarray(v, dtype=np.float64) for v in (p0, p1, q0, q1))
    best = np.minimum(
        np.minimum(point_segment_distance(p0, q0, q1), point_segment_distance(p1, q0, q1)),
        np.minimum(point_segment_distance(q0, p0, p1), point_segment_distance(q1, p0, p1)),
    )
    d1, d2, r = p1 - p0, q1 - q0, p0 - q0
    a = np.sum(d1 * d1, axis=-1)
    e = np.sum(d2 * d2, axis=-1)
    b = np.sum(d1 * d2, axis=-1)
    c = np.sum(d1 * r, axis=-1)
    f = np.sum(d2 * r, axis=-1)
    denom = a * e - b * b
    ok = denom > 1e-14 * np.maximum(a * e, 1e-300)
    safe = np.where(ok, denom, 1.0)
    s = (b * f - c * e) / safe
    t = (a * f - b * c) / safe
    inside = ok & (s > 0) & (s < 1) & (t > 0) & (t < 1)
    gap = (p0 + s[..., None] * d1) - (q0 + t[..., None] * d2)
    return np.where(inside, np.minimum(best, np.linalg.norm(gap, axis=-1)), best)


def capsules_touch(a0, a1, ra: float, b0, b1, rb: float) -> np.ndarray:
    """True where capsule ``(a0, a1, ra)`` meets capsule ``(b0, b1, rb)`` (gap ``<= 0``)."""
    return segment_distance(a0, a1, b0, b1) - ra - rb <= 0.0


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``lower <= x <= upper``."""

    lower: Tuple[float, float, float]
    upper: Tuple[float, float, float]

    def __post_init__(self):
        if len(self.lower) != 3 or len(self.upper) != 3:
            raise DimensionError("box corners must be 3-vectors")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ContractError("box needs lower < upper on every axis")

    @classmethod
    def table(cls, top: float = 0.0, half_width: float = 1.0, thickness: float = 0.05) -> "Box":
        """A slab centred under the base whose upper face is at height ``top``."""
        return cls((-half_width, -half_width, top - thickness), (half_width, half_width, top))

    def point_distance(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return np.linalg.norm(np.maximum(np.maximum(lo - p, p - hi), 0.0), axis=-1)

    def segment_distance(self, a, b, iterations: int = 80) -> np.ndarray:
        """Distance from segments to the box.

        The point-to-box distance is convex along a segment, so a golden
        section search on the segment parameter finds the minimum.
        """
        a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
        lo = np.zeros(a.shape[:-1])
        hi = np.ones(a.shape[:-1])
        at = lambda t: self.point_distance(a + t[..., None] * (b - a))  # noqa: E731
        x1 = hi - _GOLDEN * (hi - lo)
        x2 = lo + _GOLDEN * (hi - lo)
        f1, f2 = at(x1), at(x2)
        for _ in range(iterations):
            left = f1 <= f2
            hi = np.where(left, x2, hi)
            lo = np.where(left, lo, x1)
            x2n = np.where(left, x1, lo + _GOLDEN * (hi - lo))
            x1n = np.where(left, hi - _GOLDEN * (hi - lo), x2)
            x1, x2 = x1n, x2n
            f1, f2 = at(x1), at(x2)
        return np.minimum.reduce([at(0.5 * (lo + hi)), at(np.zeros_like(lo)), at(np.ones_like(lo))])


@dataclass(frozen=True)
class CollisionScene:
    """Collision geometry around an arm.

    ``link_radii[i]`` inflates link ``i + 1``. ``table`` may be None for a
    scene without obstacles; ``table_exempt`` lists link ids allowed to
    touch it (the base column stands on it). ``self_collision`` toggles
    link-link and link-payload checks.
    """

    chain: KinematicChain
    link_radii: Tuple[float, ...] = (0.045, 0.04, 0.035, 0.03, 0.03, 0.03)
    table: Optional[Box] = None
    self_collision: bool = True
    table_exempt: Tuple[int, ...] = (1,)

    def __post_init__(self):
        if len(self.link_radii) != 6:
            raise ContractError("need one radius per link")
        if any(r <= 0 for r in self.link_radii):
            raise ContractError("all capsule radii must be positive")

    def capsule_layout(self):
        """``(slots, ids, radii)``: which (start, end) points make each capsule.

        Slot ``("frame", i)`` is the origin of frame ``i`` and ``("elbow", i)``
        the point ``d_{i+1}`` along its z axis; zero-length pieces are dropped.
        """
        slots, ids, radii = [], [], []
        for i, row in enumerate(self.chain.dh):
            pieces = []
            if row.d != 0.0:
                pieces.append((("frame", i), ("elbow", i)))
            if row.a != 0.0:
                pieces.append((("elbow", i), ("frame", i + 1)))
            if not pieces:
                pieces.append((("frame", i), ("frame", i + 1)))
            for piece in pieces:
                slots.append(piece)
                ids.append(i + 1)
                radii.append(self.link_radii[i])
        ids.append(PAYLOAD_ID)
        radii.append(self.chain.payload.radius)
        return slots, np.array(ids), np.array(radii)

    def capsules(self, q) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Capsule segments ``(..., K, 2, 3)``, their link ids and radii."""
        geo = fk(self.chain, q)
        slots, ids, radii = self.capsule_layout()
        origins = geo.origins()

        def point(slot):
            kind, i = slot
            return origins[..., i, :] if kind == "frame" else geo.elbows[..., i, :]

        segs = [np.stack([point(s0), point(s1)], axis=-2) for s0, s1 in slots]
        centre = geo.payload[..., :3, 3]
        axis = geo.payload[..., :3, 2] * self.chain.payload.half_length
        segs.append(np.stack([centre - axis, centre + axis], axis=-2))
        return np.stack(segs, axis=-3), ids, radii

    def pairs(self) -> np.ndarray:
        _, ids, _ = self.capsule_layout()
        i, j = np.triu_indices(len(ids), k=1)
        keep = np.abs(ids[i] - ids[j]) > 1
        return np.stack([i[keep], j[keep]], axis=1)


def clearances(scene: CollisionScene, q):
    """Signed gaps ``(self_gaps, table_gaps)`` per configuration; ``<= 0`` means contact."""
    segs, ids, radii = scene.capsules(q)
    self_gap = table_gap = None
    if scene.self_collision:
        pr = scene.pairs()
        a, b = segs[..., pr[:, 0], :, :], segs[..., pr[:, 1], :, :]
        dist = segment_distance(a[..., 0, :], a[..., 1, :], b[..., 0, :], b[..., 1, :])
        self_gap = dist - radii[pr[:, 0]] - radii[pr[:, 1]]
    if scene.table is not None:
        checked = ~np.isin(ids, scene.table_exempt)
        s = segs[..., checked, :, :]
        table_gap = scene.table.segment_distance(s[..., 0, :], s[..., 1, :]) - radii[checked]
    return self_gap, table_gap


def collision_codes(scene: CollisionScene, q) -> np.ndarray:
    """Per-configuration reason code: CLEAR, SELF or TABLE (self-contact wins ties)."""
    q = np.asarray(q, dtype=np.float64)
    self_gap, table_gap = clearances(scene, q)
    codes = np.zeros(q.shape[:-1], dtype=np.int64)
    if table_gap is not None:
        codes = np.where(np.any(table_gap <= 0, axis=-1), TABLE, codes)
    if self_gap is not None:
        codes = np.where(np.any(self_gap <= 0, axis=-1), SELF, codes)
    return codes


def collide(scene: CollisionScene, q, spin_angle: float = 0.0) -> bool:
    """True when configuration ``q`` with the terminal joint advanced by ``spin_angle`` touches anything."""
    q = np.array(q, dtype=np.float64)
    if q.shape != (6,):
        raise DimensionError(f"expected one joint vector of 6 entries, got {q.shape}")
    q[5] += spin_angle
    return bool(collision_codes(scene, q) != CLEAR)
