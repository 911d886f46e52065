"""M-solution residual on the path tree and on Monte Carlo ensembles of growing size."""

from qbsvie import generator as G, position as P
from qbsvie.bsvie import msolution_residual, solve_type2_msolution, type2_residual
from qbsvie.driver import DriverSpec, build_driver
from qbsvie.grid import TimeGrid

g = G.linear_y(0.3) + G.quadratic_half() + G.zprime_sine(0.1)
grid = TimeGrid(1.0, 8)
d = build_driver(grid, "path-tree")
sol = solve_type2_msolution(d, g, P.linear_terminal())
print(f"path-tree    Y0 {sol.y0:.6f}  M-residual {msolution_residual(d, sol):.1e}  "
      f"BSVIE residual {type2_residual(d, sol, pathwise=True):.1e}")
for paths in (1024, 4096, 16384):
    for deg in (2, 4):
        mc = build_driver(grid, DriverSpec("monte-carlo", paths=paths, seed=0, basis_degree=deg))
        s = solve_type2_msolution(mc, g, P.linear_terminal())
        print(f"mc P={paths:>6} deg={deg}  Y0 {s.y0:.6f}  M-residual {msolution_residual(mc, s):.3e}")
