"""Stratified versus plain random selection of poses in spherical coordinates."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..errors import ContractError
from .workspace import PoseRecord


@dataclass(frozen=True)
class Strata:
    """Equal-width bins over the observed ranges of r, azimuth and elevation."""

    edges: Tuple[np.ndarray, np.ndarray, np.ndarray]

    @classmethod
    def fit(cls, records: Sequence[PoseRecord], bins: Tuple[int, int, int]) -> "Strata":
        if len(bins) != 3 or any(int(b) < 1 for b in bins):
            raise ContractError(f"bins must be three positive counts, got {bins}")
        if not records:
            raise ContractError("cannot fit strata to an empty record set")
        coords = np.array([rec.spherical for rec in records])
        edges = tuple(np.linspace(coords[:, d].min(), coords[:, d].max(), int(bins[d]) + 1) for d in range(3))
        return cls(edges)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(len(e) - 1 for e in self.edges)

    def index(self, rec: PoseRecord) -> Tuple[int, int, int]:
        """Bin of a record; values beyond the fitted range go to the end bins."""
        out = []
        for value, edges in zip(rec.spherical, self.edges):
            k = int(np.searchsorted(edges, value, side="right")) - 1
            out.append(min(max(k, 0), len(edges) - 2))
        return tuple(out)

    def members(self, records: Sequence[PoseRecord]) -> Dict[Tuple[int, int, int], List[int]]:
        groups: Dict[Tuple[int, int, int], List[int]] = {}
        for i, rec in enumerate(records):
            groups.setdefault(self.index(rec), []).append(i)
        return dict(sorted(groups.items()))


def stratified_sample(records: Sequence[PoseRecord], bins, k: int, rng: np.random.Generator) -> List[PoseRecord]:
    """Pick ``k`` records round-robin over the nonempty strata, without replacement.

    Strata are visited in a shuffled order; inside a stratum each pick is
    uniform over its unpicked members. With fewer picks than nonempty strata
    every pick lands in a distinct stratum. When there are fewer records
    than ``k`` all of them are returned.
    """
    if k < 0:
        raise ContractError("k must be non-negative")
    records = list(records)
    if k == 0 or not records:
        return []
    strata = Strata.fit(records, bins)
    pools = [list(v) for v in strata.members(records).values()]
    order = rng.permutation(len(pools))
    picked: List[int] = []
    while len(picked) < k and any(pools):
        for s in order:
            if len(picked) == k:
                break
            pool = pools[s]
            if pool:
                picked.append(pool.pop(int(rng.integers(len(pool)))))
    return [records[i] for i in picked]


def random_sample(records: Sequence[PoseRecord], k: int, rng: np.random.Generator) -> List[PoseRecord]:
    """``k`` records uniformly without replacement."""
    records = list(records)
    k = min(k, len(records))
    return [records[i] for i in rng.choice(len(records), size=k, replace=False)]


def occupancy(strata: Strata, population: Sequence[PoseRecord], chosen: Sequence[PoseRecord]) -> np.ndarray:
    """Pick counts for each stratum that is nonempty in ``population``."""
    keys = list(strata.members(population))
    counts = dict.fromkeys(keys, 0)
    for rec in chosen:
        counts[strata.index(rec)] += 1
    return np.array([counts[key] for key in keys])


def occupancy_variance(strata: Strata, population: Sequence[PoseRecord], chosen: Sequence[PoseRecord]) -> float:
    return float(np.var(occupancy(strata, population, chosen)))
