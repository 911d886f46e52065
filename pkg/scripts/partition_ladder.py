"""Cascaded partition scheme against the Type-I solution on a fixed fine lattice.

Two free terms: the smooth psi(t) = t W(T), whose error is dominated by
sampling psi at the right endpoints, and a dyadic step profile that the
finest partitions resolve exactly.
"""

import argparse
import math

from qbsvie import generator as G, position as P
from qbsvie.bsvie import cascaded_partition_scheme, partition_error, solve_type1_general
from qbsvie.driver import build_driver
from qbsvie.grid import TimeGrid


def ladder(d, g, psi, levels):
    ref = solve_type1_general(d, g, psi)
    out = []
    for m in levels:
        out.append((m, partition_error(cascaded_partition_scheme(d, g, psi, TimeGrid(1.0, m)).Y, ref.Y)))
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--N", type=int, default=128)
    args = ap.parse_args()
    d = build_driver(TimeGrid(1.0, args.N), "lattice")
    g = G.linear_y(0.5) + G.quadratic_half()
    levels = [2 ** k for k in range(1, int(math.log2(args.N)) + 1)]
    step = P.Position(lambda t, w, m: max(math.ceil(32 * t), 1) / 32 * w, label="step32")
    for name, psi in (("t W(T)", P.linear_terminal()), ("32-step profile", step)):
        print(f"psi = {name}")
        prev = None
        for m, e in ladder(d, g, psi, levels):
            ratio = "" if prev is None or e == 0 else f"  ratio {prev / e:.2f}"
            print(f"  N_pi={m:>4}  sup error {e:.3e}{ratio}")
            prev = e


if __name__ == "__main__":
    main()
