"""Collision-free workspace construction from quasi-random joint candidates.

A candidate survives when the straight joint-space path from home to it is
contact-free, a full turn of the terminal joint at the candidate is
contact-free, and the path really ends at the candidate.
"""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ContractError, DataError, WorkspaceError
from .collision import CLEAR, REASONS, CollisionScene, collision_codes
from .halton import halton_sequence
from .kinematics import KinematicChain, fk, to_spherical

STEP = math.radians(2.0)
SPIN_STEP = math.radians(10.0)
SPIN_COUNT = 36
ARRIVAL_TOLERANCE = 1e-9
CSV_COLUMNS = ("q1", "q2", "q3", "q4", "q5", "q6", "r", "az", "el", "feasible")


@dataclass
class PoseRecord:
    q: np.ndarray
    r: float
    azimuth: float
    elevation: float
    feasible: bool
    trajectory: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def spherical(self) -> Tuple[float, float, float]:
        return (self.r, self.azimuth, self.elevation)


@dataclass
class Workspace:
    """Every evaluated candidate (in candidate order) plus why the rejects failed."""

    records: List[PoseRecord]
    histogram: Dict[str, int]

    @property
    def feasible(self) -> List[PoseRecord]:
        return [rec for rec in self.records if rec.feasible]


def interpolate(start, goal, step: float = STEP) -> np.ndarray:
    """Joint-space line from ``start`` to ``goal`` (both included), no joint moving more than ``step`` per row."""
    start, goal = np.asarray(start, dtype=np.float64), np.asarray(goal, dtype=np.float64)
    span = float(np.max(np.abs(goal - start)))
    n = max(1, math.ceil(span / step - 1e-12))
    s = np.arange(n + 1)[:, None] / n
    path = start + s * (goal - start)
    path[-1] = goal
    return path


def wrap_into(angle: float, lower: float, upper: float) -> float:
    """Shift ``angle`` by whole turns into ``[lower, upper]``."""
    turn = 2.0 * math.pi
    k = math.ceil((lower - angle) / turn - 1e-12)
    out = angle + k * turn
    if out > upper + 1e-12:
        raise ContractError(f"angle {angle} has no equivalent within [{lower}, {upper}]")
    return min(out, upper)


def spin_capture_poses(record_or_q, chain: Optional[KinematicChain] = None) -> List[np.ndarray]:
    """36 joint vectors turning the terminal joint in 10 degree steps from its current value.

    With a chain, each terminal angle is wrapped by whole turns into that
    joint's limits.
    """
    q0 = np.asarray(getattr(record_or_q, "q", record_or_q), dtype=np.float64)
    out = []
    for i in range(SPIN_COUNT):
        q = q0.copy()
        q[5] = q0[5] + i * SPIN_STEP
        if chain is not None:
            q[5] = wrap_into(q[5], chain.lower[5], chain.upper[5])
        out.append(q)
    return out


def joint_candidates(chain: KinematicChain, count: int, seed: int = 0) -> np.ndarray:
    """Halton points ``seed + 1 .. seed + count`` scaled into the joint limits.

    Index 0 (the origin of the unit cube) is skipped so every candidate
    differs from the lower-limit corner.
    """
    lo, hi = np.asarray(chain.lower), np.asarray(chain.upper)
    return lo + halton_sequence(seed + 1, count, 6) * (hi - lo)


def evaluate_candidate(scene: CollisionScene, home, q, camera) -> Tuple[PoseRecord, str]:
    """Check one candidate; the reason is ``"feasible"`` or names the failed stage."""
    chain = scene.chain
    r, az, el = (float(v) for v in to_spherical(chain, q, camera))

    def rejected(reason):
        return PoseRecord(np.array(q, dtype=np.float64), r, az, el, False, None), reason

    if not chain.within_limits(q):
        return rejected("limits")
    path = interpolate(home, q)
    codes = collision_codes(scene, path)
    hit = codes != CLEAR
    if np.any(hit):
        return rejected("trajectory:" + REASONS[int(codes[np.argmax(hit)])])
    spin = np.array(spin_capture_poses(q))
    codes = collision_codes(scene, spin)
    hit = codes != CLEAR
    if np.any(hit):
        return rejected("spin:" + REASONS[int(codes[np.argmax(hit)])])
    reached = fk(chain, path[-1]).end_effector
    target = fk(chain, q).end_effector
    if np.max(np.abs(reached - target)) > ARRIVAL_TOLERANCE:
        return rejected("arrival")
    return PoseRecord(np.array(q, dtype=np.float64), r, az, el, True, path), "feasible"


def build_workspace(
    scene: CollisionScene,
    n_candidates: int,
    home_q,
    camera,
    seed: int = 0,
    keep_trajectories: bool = True,
) -> Workspace:
    """Evaluate ``n_candidates`` Halton joint candidates against ``scene``.

    Candidates are independent; results keep candidate order. Raises
    :class:`WorkspaceError` with the rejection histogram when nothing is
    feasible.
    """
    if n_candidates < 1:
        raise ContractError("need at least one candidate")
    home = np.asarray(home_q, dtype=np.float64)
    if not scene.chain.within_limits(home):
        raise ContractError("home configuration violates the joint limits")
    records, reasons = [], Counter()
    for q in joint_candidates(scene.chain, n_candidates, seed):
        rec, reason = evaluate_candidate(scene, home, q, camera)
        if not keep_trajectories:
            rec.trajectory = None
        records.append(rec)
        reasons[reason] += 1
    histogram = dict(sorted(reasons.items()))
    if not reasons["feasible"]:
        raise WorkspaceError(f"no feasible pose among {n_candidates} candidates: {histogram}", histogram)
    return Workspace(records, histogram)


def recheck(scene: CollisionScene, record: PoseRecord) -> bool:
    """Independent check that a feasible record's path and spin are contact-free."""
    if record.trajectory is None:
        raise ContractError("record carries no trajectory")
    path_ok = not np.any(collision_codes(scene, record.trajectory) != CLEAR)
    spin_ok = not np.any(collision_codes(scene, np.array(spin_capture_poses(record))) != CLEAR)
    return path_ok and spin_ok


def end_effector_positions(chain: KinematicChain, records: Sequence[PoseRecord]) -> np.ndarray:
    if not records:
        return np.zeros((0, 3))
    q = np.array([rec.q for rec in records])
    return fk(chain, q).end_effector[:, :3, 3]


def projections(chain: KinematicChain, workspace: Workspace) -> Tuple[np.ndarray, np.ndarray]:
    """x-z and y-z point clouds of the feasible end-effector positions."""
    pos = end_effector_positions(chain, workspace.feasible)
    return pos[:, [0, 2]], pos[:, [1, 2]]


# -- CSV --------------------------------------------------------------------

def write_workspace(path, records: Sequence[PoseRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow([repr(float(v)) for v in rec.q] + [repr(rec.r), repr(rec.azimuth), repr(rec.elevation), int(rec.feasible)])


def read_workspace(path) -> List[PoseRecord]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read workspace {path}: {exc.strerror}") from exc
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise DataError(f"{path}: expected header {','.join(CSV_COLUMNS)}")
    out = []
    for lineno, row in enumerate(rows[1:], 2):
        if len(row) != len(CSV_COLUMNS):
            raise DataError(f"{path}:{lineno}: expected {len(CSV_COLUMNS)} fields, got {len(row)}")
        try:
            values = [float(v) for v in row[:9]]
            feasible = row[9].strip() in ("1", "true", "True")
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        out.append(PoseRecord(np.array(values[:6]), values[6], values[7], values[8], feasible))
    return out


def write_projections(path, chain: KinematicChain, records: Sequence[PoseRecord]) -> None:
    """CSV with columns ``view,h,z``: view ``xz`` uses x as h, view ``yz`` uses y."""
    pos = end_effector_positions(chain, [rec for rec in records if rec.feasible])
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("view", "h", "z"))
        for view, col in (("xz", 0), ("yz", 1)):
            for p in pos:
                writer.writerow((view, repr(float(p[col])), repr(float(p[2]))))
