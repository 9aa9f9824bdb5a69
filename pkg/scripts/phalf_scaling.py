#!/usr/bin/env python3
"""Variance-limited onset P_half versus width proxy N in the spectral toy.

With student-feature noise sigma_eps^2 = 1/N the learning curve plateaus at
an N-dependent floor; P_half is where the noiseless ("ensembled") curve
reaches half the noisy one.  The fitted exponent of P_half vs N should be
close to 1/2.
"""

import argparse
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from vll import blobs, ensemble, theory  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--m", type=int, default=200_000)
    parser.add_argument("--exponent", type=float, default=0.9)
    parser.add_argument("--n-values", type=int, nargs="+",
                        default=[64, 128, 256, 512, 1024, 2048, 4096])
    parser.add_argument("--out", default="out_phalf_scaling")
    args = parser.parse_args()

    p_grid = np.unique(np.round(np.geomspace(4, 8000, 32)).astype(int)).astype(float)
    clean = theory.power_law_model(args.m, args.exponent, target_mode=0)
    eg_clean = np.array([s.eg for _, s in theory.learning_curve(clean, p_grid, 0.0)])

    rows = []
    print(f"{'N':>6} {'P_half':>10} {'bracket':>18}")
    for n in args.n_values:
        noisy = theory.power_law_model(args.m, args.exponent, target_mode=0,
                                       noise_scale=1.0 / n)
        eg_noisy = np.array(
            [s.eg for _, s in theory.learning_curve(noisy, p_grid, 0.0)]
        )
        bracket = ensemble.p_half_bracket(p_grid, eg_noisy, eg_clean)
        p12, lo, hi = bracket if bracket is not None else (None, None, None)
        rows.append([n, float("nan"), p12, lo, hi])
        print(f"{n:>6} {p12:>10.1f} [{lo:>7.0f}, {hi:>7.0f}]")

    found = [(n, r[2]) for n, r in zip(args.n_values, rows) if r[2] is not None]
    slope = np.polyfit(np.log([n for n, _ in found]),
                       np.log([p for _, p in found]), 1)[0]
    print(f"fitted exponent of P_half vs N: {slope:.3f}")

    os.makedirs(args.out, exist_ok=True)
    blobs.emit_csv(rows, "phalf", os.path.join(args.out, "phalf.csv"))
    print(f"wrote {args.out}/phalf.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
