"""Plan capture poses for a spinning payload on a UR3-like arm.

Builds a collision-free workspace from Halton candidates, then compares how
evenly stratified and plain random selection cover the (r, az, el) bins.

    python demos/capture_poses.py [candidates]
"""
import sys

import numpy as np

from orbit_llie.posegen import ArmSetup, Strata, build_workspace, random_sample, stratified_sample
from orbit_llie.posegen.sampling import occupancy, occupancy_variance


def main(candidates=200):
    setup = ArmSetup()
    ws = build_workspace(setup.scene(), candidates, setup.home, setup.camera_pose(), keep_trajectories=False)
    print(f"{candidates} candidates -> {len(ws.feasible)} feasible")
    for reason, count in ws.histogram.items():
        print(f"  {reason:18s} {count}")

    recs = ws.feasible
    bins = (2, 3, 2)
    strata = Strata.fit(recs, bins)
    print(f"\n{len(strata.members(recs))} of {np.prod(bins)} strata are occupied")
    rng = np.random.default_rng(0)
    strat = stratified_sample(recs, bins, 20, rng)
    rand = random_sample(recs, 20, rng)
    print("picks per stratum, stratified:", occupancy(strata, recs, strat).astype(int).tolist())
    print("picks per stratum, random:    ", occupancy(strata, recs, rand).astype(int).tolist())
    print(f"occupancy variance: stratified {occupancy_variance(strata, recs, strat):.3f}, "
          f"random {occupancy_variance(strata, recs, rand):.3f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 200)
