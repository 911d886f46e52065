"""Empirical convergence of the lattice schemes against continuum closed forms.

    python3 scripts/convergence_study.py [--levels 25 50 100 200 400]
"""

import argparse
import math

import numpy as np

from qbsvie import generator as G, position as P
from qbsvie.bsde import solve_bsde
from qbsvie.bsvie import solve_type1_general, solve_type1_special
from qbsvie.driver import build_driver
from qbsvie.grid import TimeGrid


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--levels", type=int, nargs="+", default=[25, 50, 100, 200, 400])
    args = ap.parse_args()
    print(f"{'N':>5} {'bsde |Y0-1/2|':>14} {'type1 |Y(T/2)-cf|':>18} {'linear |Y0-e^.5|':>17}")
    prev = None
    for n in args.levels:
        d = build_driver(TimeGrid(1.0, n), "lattice")
        e_bsde = abs(solve_bsde(d, G.quadratic_half(), d.terminal_w()).y0 - 0.5)
        sol = solve_type1_special(d, G.quadratic_half(), P.linear_terminal())
        i = n // 2
        e_vol = float(np.max(np.abs(sol.Y[i] - (0.5 * d.w(i) + 0.0625)))) if n % 2 == 0 else float("nan")
        e_lin = abs(solve_type1_general(d, G.linear_y(0.5), P.constant(1.0)).y0 - math.exp(0.5))
        row = (e_bsde, e_vol, e_lin)
        rates = "" if prev is None else "   rates " + " ".join(f"{math.log2(a / b):.2f}" for a, b in zip(prev, row))
        print(f"{n:>5} {e_bsde:14.3e} {e_vol:18.3e} {e_lin:17.3e}{rates}")
        prev = row


if __name__ == "__main__":
    main()
