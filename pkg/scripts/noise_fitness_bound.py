"""Maximum scape-plot fitness on thresholded random-noise SSMs.

Prints one line per trial and the overall maximum; the result is the
frozen bound used by the structure tests.

    python3 scripts/noise_fitness_bound.py --trials 20 --frames 120
"""

import argparse

import numpy as np

from structok.metrics.structure import SSM, enhance_ssm, fitness_scape_plot


def noise_ssm(rng, n):
    a = rng.random((n, n))
    s = (a + a.T) / 2
    np.fill_diagonal(s, 1.0)
    return SSM(10.0, s)


def trial(seed, n, smooth_s):
    ssm = enhance_ssm(noise_ssm(np.random.default_rng(seed), n), smooth_s=smooth_s)
    return float(np.nanmax(fitness_scape_plot(ssm).fitness))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--frames", type=int, default=120)
    ap.add_argument("--smooth-s", type=float, default=2.0)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    best = 0.0
    for t in range(args.trials):
        phi = trial([args.seed, t], args.frames, args.smooth_s)
        best = max(best, phi)
        print(f"trial {t:2d}: max fitness {phi:.4f}")
    print(f"overall max fitness: {best:.4f}")


if __name__ == "__main__":
    main()
