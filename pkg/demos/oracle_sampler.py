"""Run the reverse chain with a denoiser that knows the answer.

The "network" here returns the exact noise that separates the current
state from a known clean image, so the sampler should land on that image.
This isolates the schedule and sampler arithmetic from any learning.

    python demos/oracle_sampler.py
"""
import numpy as np

from orbit_llie.diffusion import cosine_schedule, sample, to_signed
from orbit_llie.trainer import synth_dataset


def main():
    sched = cosine_schedule(2000, 0.008)
    print("gamma at t = 1, 500, 1000, 1500, 2000: "
          + ", ".join(f"{sched.gamma[t]:.3g}" for t in (1, 500, 1000, 1500, 2000)))
    pair = synth_dataset(1, 42)[0]
    target = to_signed(pair.high[None, None])

    def oracle(l, ht, gamma_t):
        g = np.asarray(gamma_t).reshape(-1, 1, 1, 1)
        return (ht - np.sqrt(g) * target) / np.sqrt(1.0 - g)

    seen = {}
    out = sample(pair.low[None, None], sched, oracle, np.random.default_rng(0),
                 callback=lambda t, h: seen.setdefault(t, float(np.abs((h + 1) / 2 - pair.high).mean())))
    for t in (2000, 1500, 1000, 500, 100, 1):
        print(f"after the step from t={t:4d}: mean |h - h0| = {seen[t]:.4f}")
    print(f"final mean absolute error {np.abs(out[0, 0] - pair.high).mean() * 255:.4f} / 255")


if __name__ == "__main__":
    main()
