"""Print the I-multiplier profile m(xi) and the Sobolev gain of I on random bands.

    python scripts/multiplier_profile.py --s 0.75 --N 16
"""
import argparse

import numpy as np

from dlab.grid import Grid
from dlab.imethod import IParams, apply_I, i_multiplier_value
from dlab.littlewood_paley import band_random
from dlab.norms import sobolev_norm

ap = argparse.ArgumentParser()
ap.add_argument("--s", type=float, default=0.75)
ap.add_argument("--N", type=float, default=16.0)
a = ap.parse_args()
p = IParams(s=a.s, N=a.N)

print(f"{'xi':>8} {'m(xi)':>10} {'(N/xi)^(1-s)':>14}")
for xi in [0.5, 1, a.N / 2, a.N, 1.5 * a.N, 2 * a.N, 4 * a.N, 16 * a.N]:
    print(f"{xi:8.2f} {float(i_multiplier_value(xi, p)):10.5f} {(a.N / xi) ** (1 - a.s):14.5f}")

g = Grid(2, 12.0, 256)
print(f"\n{'band':>6} {'|If|_H1 / |f|_Hs':>18} {'bound sqrt2 N^(1-s)':>20}")
for band in [1, 4, 16, 32]:
    if band > g.resolvable / 2:
        break
    f = band_random(g, f"annulus:N={band}", 0)
    ratio = sobolev_norm(apply_I(f, p), 1.0) / sobolev_norm(f, a.s)
    print(f"{band:6d} {ratio:18.4f} {np.sqrt(2) * a.N ** (1 - a.s):20.4f}")
