"""Type-I and Type-II quadratic BSVIE solvers on a discrete Brownian driver.

Discrete Type-I system, for every outer index i and pathwise:

    Y(t_i) = psi(t_i) + sum_{j=i}^{N-1} [dt f(t_i, t_j, ybar_j, Z(t_i,t_j), z'_{ij}) + D_q(Z(t_i,t_j))]
                      - sum_{j=i}^{N-1} Z(t_i, t_j) dW_{j+1}

with ybar_j = theta Y(t_j) + (1-theta) E_j[Y(t_{j+1})] and D_q the
exponential-transform increment of the generator's (q/2) z^2 part.  The
fixed point in Y is found by Picard iteration on the family-of-BSDEs map.

Storage convention: ``Z[j]`` is an array of shape (rows, n_j) whose row i is
Z(t_i, t_j).  Type-I keeps rows 0..j; the Type-II M-solution keeps all N+1
rows.  Z(., t_N) is identically zero (no increment remains) and is not
stored.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bsde import (BmoEstimate, BoundReport, BsdeFamilySolution, SolverError, StepConfig,
                   StepStats, alpha_ceiling_check, backward_step, bmo_budget, bmo_norm_estimate,
                   briand_hu_bound_check, c_tilde_for, frozen_slot, position_terminals,
                   solve_bsde_family)
from .driver import Driver, DriverError, representation_integrands, stochastic_sum
from .generator import Generator, SampleSpec, _draw
from .grid import TimeGrid, is_nested

PICARD_TOL_EXACT = 1e-10
PICARD_TOL_MC = 1e-6
PICARD_MAX_ITER = 200


class PicardError(SolverError):
    pass


class ComparisonError(ValueError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


@dataclass(frozen=True)
class PicardConfig:
    tol: float | None = None  # None: 1e-10 on exact backends, 1e-6 on monte-carlo
    max_iter: int = PICARD_MAX_ITER

    def tolerance(self, driver: Driver) -> float:
        if self.tol is not None:
            return self.tol
        return PICARD_TOL_EXACT if driver.exact else PICARD_TOL_MC


@dataclass
class Type1Solution:
    Y: list
    Z: list
    family: BsdeFamilySolution
    terminals: np.ndarray
    generator: Generator
    differences: list = field(default_factory=list)
    stats: StepStats = field(default_factory=StepStats)

    @property
    def iterations(self) -> int:
        return len(self.differences)

    @property
    def ratios(self) -> list:
        d = self.differences
        return [d[k + 1] / d[k] if d[k] > 0 else 0.0 for k in range(len(d) - 1)]

    @property
    def y0(self) -> float:
        return float(self.Y[0][0])


def _sup_diff(a: list, b: list) -> float:
    return max(float(np.max(np.abs(x - y))) for x, y in zip(a, b))


def solve_type1_special(driver: Driver, g: Generator, psi, *, zprime=None,
                        cfg: StepConfig = StepConfig()) -> Type1Solution:
    """y-free generator: Y(t_i) = eta(t_i, t_i), Z = zeta, no iteration."""
    if g.uses_y:
        raise SolverError(f"{g.name} depends on y; use solve_type1_general")
    return solve_type1_general(driver, g, psi, zprime=zprime, cfg=cfg)


def solve_type1_general(driver: Driver, g: Generator, psi, *, picard: PicardConfig = PicardConfig(),
                        zprime=None, init: list | None = None,
                        cfg: StepConfig = StepConfig()) -> Type1Solution:
    """Picard iteration (Y^{k+1}, Z^{k+1}) = Gamma(Y^k, Z^k) from Y^0 = 0."""
    terms = position_terminals(driver, psi)
    n = driver.steps
    tol = picard.tolerance(driver)
    U = [np.zeros(driver.n_nodes(k)) for k in range(n + 1)] if init is None else init
    diffs = []
    stats = StepStats()
    for _ in range(picard.max_iter):
        fam = solve_bsde_family(driver, g, terms, frozen=U, zprime=zprime, cfg=cfg)
        stats.merge(fam.stats)
        Y = fam.Y
        diffs.append(_sup_diff(Y, U))
        U = Y
        if not g.uses_y or diffs[-1] < tol:
            break
    else:
        raise PicardError(
            f"Picard iteration did not reach {tol:g} in {picard.max_iter} sweeps "
            f"(last difference {diffs[-1]:.3g})", differences=diffs)
    return Type1Solution(Y, fam.zeta, fam, terms, g, diffs, stats)


# -- Type-II M-solutions --------------------------------------------------------

@dataclass
class Type2MSolution:
    Y: list
    Z: list  # Z[j] shape (N+1, n_j): full square
    inner: Type1Solution
    changes: list = field(default_factory=list)

    @property
    def y0(self) -> float:
        return float(self.Y[0][0])


def _reflected(driver: Driver, Zsq: list) -> list:
    """z'[j][i] = Z(t_j, t_i) read on the step-j nodes, for rows i <= j."""
    n = driver.steps
    out = []
    for j in range(n):
        rows = [driver.lift(Zsq[i][j], i, j) for i in range(j + 1)]
        out.append(np.stack(rows))
    return out


def _lower_triangle(driver: Driver, Y: list, Zsq: list):
    """Fill Z(t_i, t_j), j < i, with the representation integrands of Y(t_i)."""
    for i in range(1, driver.steps + 1):
        for j, z in enumerate(representation_integrands(driver, Y[i], i)):
            Zsq[j][i] = z


def solve_type2_msolution(driver: Driver, g: Generator, psi, *,
                          outer: PicardConfig = PicardConfig(),
                          picard: PicardConfig = PicardConfig(),
                          cfg: StepConfig = StepConfig()) -> Type2MSolution:
    """Outer fixed point on the reflected argument Z(s, t), inner Type-I solve."""
    if g.uses_zprime and driver.kind == "lattice":
        raise DriverError("a z'-dependent generator needs a path-resolving driver "
                          "(path-tree or monte-carlo): Z(s, t) is path dependent")
    terms = position_terminals(driver, psi)
    n = driver.steps
    tol = outer.tolerance(driver)
    Zsq = [np.zeros((n + 1, driver.n_nodes(j))) for j in range(n)]
    changes = []
    prev_Y = None
    for _ in range(outer.max_iter):
        zp = _reflected(driver, Zsq) if g.uses_zprime else None
        inner = solve_type1_general(driver, g, terms, picard=picard, zprime=zp, init=prev_Y, cfg=cfg)
        new = [z.copy() for z in Zsq]
        for j in range(n):
            new[j][: j + 1] = inner.Z[j]
        _lower_triangle(driver, inner.Y, new)
        change = max(_sup_diff(new, Zsq), _sup_diff(inner.Y, prev_Y or [0.0 * y for y in inner.Y]))
        changes.append(change)
        Zsq, prev_Y = new, inner.Y
        if not g.uses_zprime or change < tol:
            break
    else:
        raise PicardError(f"M-solution outer loop did not reach {tol:g} in {outer.max_iter} passes",
                          changes=changes)
    return Type2MSolution(inner.Y, Zsq, inner, changes)


def msolution_residual(driver: Driver, sol: Type2MSolution) -> float:
    """max_i |Y(t_i) - E[Y(t_i)] - sum_{j<i} Z(t_i, t_j) dW_{j+1}|.

    On the recombining lattice the pathwise sum is not representable; the
    per-edge residuals are summed instead, which bounds the pathwise one.
    """
    worst = 0.0
    for i in range(1, driver.steps + 1):
        zs = [sol.Z[j][i] for j in range(i)]
        y = sol.Y[i]
        if driver.kind == "lattice":
            bound, f = 0.0, y
            for j in range(i - 1, -1, -1):
                m = driver.expect(f, j)
                dw = driver.sqdt * zs[j]
                up = np.abs(f[..., 1:] - m - dw)
                down = np.abs(f[..., :-1] - m + dw)
                bound += max(float(np.max(up)), float(np.max(down)))
                f = m
            worst = max(worst, bound)
        else:
            res = y - driver.mean(y, i) - stochastic_sum(driver, zs, i)
            worst = max(worst, float(np.max(np.abs(res))))
    return worst


def m2_h2_norms(driver: Driver, sol: Type2MSolution) -> tuple[float, float]:
    """Discrete squared norms (||.||_{H^2}^2, ||.||_{M^2}^2) of an M-solution.

    H^2 = sum_i dt E[|Y_i|^2 + sum_{j >= 0} |Z(t_i, t_j)|^2 dt];
    M^2 = sum_i dt E[|Y_i|^2 + sum_{j >= i} |Z(t_i, t_j)|^2 dt].
    """
    n, dt = driver.steps, driver.dt
    h2 = m2 = 0.0
    for i in range(n + 1):
        y2 = float(driver.mean(sol.Y[i] ** 2, i))
        upper = sum(float(driver.mean(sol.Z[j][i] ** 2, j)) for j in range(i, n)) * dt
        lower = sum(float(driver.mean(sol.Z[j][i] ** 2, j)) for j in range(min(i, n))) * dt
        h2 += dt * (y2 + upper + lower)
        m2 += dt * (y2 + upper)
    return h2, m2


# -- residuals and diagnostics ---------------------------------------------------

def _drift(driver, g, j, t_rows, Y, z, zp, theta):
    ybar = frozen_slot(driver, Y, j, theta)
    out = driver.dt * g.explicit(t_rows, driver.grid.time(j), ybar, z, zp)
    if g.has_quad:
        out = out + driver.exp_increment(g.quad_coef(t_rows, driver.grid.time(j)), z, j)
    return np.broadcast_to(out, z.shape)


def bsvie_residual(driver: Driver, g: Generator, Y: list, Z: list, terminals: np.ndarray, *,
                   zprime=None, theta: float = 0.5, pathwise: bool = False) -> float:
    """Residual of the discrete Type-I system at a candidate (Y, Z).

    Conditional form (default): max_i |E_{t_i}[psi(t_i) + sum_j drift_ij] - Y(t_i)|.
    Pathwise form (path-tree / monte-carlo): max over leaves of
    |Y(t_i) - psi(t_i) - sum_j drift_ij + sum_j Z(t_i,t_j) dW_{j+1}|.
    """
    n = driver.steps
    times = driver.grid.points
    if not pathwise:
        acc = terminals.copy()
        worst = float(np.max(np.abs(acc[n] - Y[n])))
        for j in range(n - 1, -1, -1):
            zp = 0.0 if zprime is None else zprime[j]
            acc = driver.expect(acc[: j + 1], j) + _drift(driver, g, j, times[: j + 1, None], Y,
                                                          Z[j][: j + 1], zp, theta)
            worst = max(worst, float(np.max(np.abs(acc[j] - Y[j]))))
        return worst
    if driver.kind == "lattice":
        raise DriverError("pathwise residuals need a path-resolving driver")
    total = terminals - np.stack([driver.lift(Y[i], i, n) for i in range(n + 1)])
    for j in range(n):
        zp = 0.0 if zprime is None else zprime[j]
        rows = slice(0, j + 1)
        d = _drift(driver, g, j, times[: j + 1, None], Y, Z[j][rows], zp, theta)
        mart = driver.lift(Z[j][rows], j, j + 1) * driver.increment(j)
        total[rows] += driver.lift(d, j, n) - driver.lift(mart, j + 1, n)
    return float(np.max(np.abs(total)))


def type1_residual(driver: Driver, sol: Type1Solution, *, zprime=None, pathwise=False) -> float:
    return bsvie_residual(driver, sol.generator, sol.Y, sol.Z, sol.terminals, zprime=zprime,
                          theta=sol.family.theta, pathwise=pathwise)



def type2_residual(driver: Driver, sol: Type2MSolution, *, pathwise=False) -> float:
    """Type-I residual of an M-solution with the reflected argument read from its own Z."""
    g = sol.inner.generator
    zp = _reflected(driver, sol.Z) if g.uses_zprime else None
    return bsvie_residual(driver, g, sol.Y, sol.Z, sol.inner.terminals, zprime=zp,
                          theta=sol.inner.family.theta, pathwise=pathwise)

@dataclass
class Type1Diagnostics:
    alpha: BoundReport
    c_tilde: float
    bmo: BmoEstimate
    bmo_budget: float
    briand_hu: BoundReport

    @property
    def ok(self) -> bool:
        return self.alpha.holds and self.briand_hu.holds and self.bmo.value <= self.bmo_budget

    def as_dict(self) -> dict:
        return {
            "alpha_ceiling_holds": self.alpha.holds,
            "alpha_margin": self.alpha.worst_margin,
            "c_tilde": self.c_tilde,
            "bmo_estimate": self.bmo.value,
            "bmo_budget": self.bmo_budget,
            "bmo_within_budget": self.bmo.value <= self.bmo_budget,
            "briand_hu_holds": self.briand_hu.holds,
            "briand_hu_margin": self.briand_hu.worst_margin,
        }


def type1_diagnostics(driver: Driver, sol: Type1Solution) -> Type1Diagnostics:
    psi_sup = float(np.max(np.abs(sol.terminals)))
    c = sol.generator.certificate
    ct = c_tilde_for(psi_sup, c.L)
    return Type1Diagnostics(
        alpha=alpha_ceiling_check(driver, sol.Y, ct),
        c_tilde=ct,
        bmo=bmo_norm_estimate(driver, sol.family),
        bmo_budget=bmo_budget(c.gamma, psi_sup),
        briand_hu=briand_hu_bound_check(driver, sol.family),
    )


def continuity_modulus(driver: Driver, Y: list) -> float:
    """max_i max over edges |Y(t_{i+1}) - Y(t_i)|, the grid analogue of the path modulus."""
    worst = 0.0
    for i in range(driver.steps):
        worst = max(worst, float(np.max(np.abs(driver.edge_differences(Y[i], Y[i + 1], i)))))
    return worst


# -- naive family and the time-inconsistency gap ------------------------------------

@dataclass
class InconsistencyReport:
    gap: float
    witness: dict
    naive_y0: float
    bsvie_y0: float
    bsvie_residual: float


def naive_family(driver: Driver, g: Generator, psi, cfg: StepConfig = StepConfig()) -> BsdeFamilySolution:
    """Each outer t solved as an ordinary BSDE with terminal psi(t)."""
    return solve_bsde_family(driver, g, psi, cfg=cfg)


def inconsistency_gap(driver: Driver, fam: BsdeFamilySolution) -> tuple[float, dict]:
    """max over t_i <= t_r and nodes of |Y(t_i; t_r) - Y(t_r; t_r)|."""
    worst, witness = 0.0, {}
    for r in range(driver.steps + 1):
        diff = np.abs(fam.eta[r] - fam.eta[r][r])
        idx = np.unravel_index(np.argmax(diff), diff.shape)
        if diff[idx] > worst:
            worst = float(diff[idx])
            witness = {"t": driver.grid.time(int(idx[0])), "r": driver.grid.time(r), "node": int(idx[1])}
    return worst, witness


def inconsistency_demo(driver: Driver, g: Generator, psi, picard: PicardConfig = PicardConfig(),
                       cfg: StepConfig = StepConfig()) -> InconsistencyReport:
    fam = naive_family(driver, g, psi, cfg)
    gap, witness = inconsistency_gap(driver, fam)
    sol = solve_type1_general(driver, g, psi, picard=picard, cfg=cfg)
    return InconsistencyReport(gap, witness, float(fam.eta[0][0][0]), sol.y0,
                               type1_residual(driver, sol))


# -- cascaded partition scheme ----------------------------------------------------

@dataclass
class PartitionScheme:
    partition: TimeGrid
    Y: list
    Z: list  # Z[j] rows 0..j, Z(t_i, t_j) = Z^k(t_j) for t_i in the k-th subinterval
    piece_terminals: np.ndarray  # psi_k = psi(P_k), k = 1..M
    terminals: np.ndarray  # psi^Pi(t_i) for every grid index i
    piece_of: np.ndarray  # subinterval number k of each grid index


def cascaded_partition_scheme(driver: Driver, g: Generator, psi, partition: TimeGrid, *,
                              cfg: StepConfig = StepConfig()) -> PartitionScheme:
    """Backward cascade of BSDEs over the subintervals (P_{k-1}, P_k] of a partition.

    Y^k solves a BSDE from T back to P_{k-1} with terminal psi(P_k); its
    y-slot reads the already determined Y^Pi at grid times after P_k and its
    own values on (P_{k-1}, P_k]; Z^k is used throughout the drift.
    """
    if g.t_dependent:
        raise SolverError("the cascaded scheme needs a generator independent of the outer time")
    if not is_nested(partition, driver.grid):
        raise SolverError(f"partition {partition} is not nested in the driver grid {driver.grid}")
    n, M = driver.steps, partition.steps
    ratio = n // M
    ends = [k * ratio for k in range(M + 1)]
    pieces = driver.position_matrix(psi, ends[1:]) if not isinstance(psi, np.ndarray) \
        else np.asarray(psi)[ends[1:]]
    piece_of = np.array([max(1, -(-i // ratio)) for i in range(n + 1)])
    Y = [None] * (n + 1)
    Z = [np.zeros((j + 1, driver.n_nodes(j))) for j in range(n)]
    Y[n] = pieces[M - 1].copy()
    t0 = np.asarray(0.0)
    for k in range(M, 0, -1):
        a, b = ends[k - 1], ends[k]
        lo = a + 1 if k > 1 else 0
        own = {n: pieces[k - 1][None, :]}
        for j in range(n - 1, lo - 1, -1):
            nxt = own[j + 1]
            y_next = nxt if j + 1 <= b else Y[j + 1][None, :]
            if j > b:
                slot = cfg.theta * Y[j] + (1 - cfg.theta) * driver.expect(y_next, j)
                eta, z = backward_step(driver, g, j, t0, nxt, y_frozen=slot, cfg=cfg)
            else:
                eta, z = backward_step(driver, g, j, t0, nxt, y_next=y_next, cfg=cfg)
            own[j] = eta
            if j >= lo:
                rows = [i for i in range(lo, b + 1) if i <= j]
                Z[j][rows] = z[0]
            if lo <= j <= b:
                Y[j] = eta[0]
            del own[j + 1]
    terminals = pieces[piece_of - 1]
    return PartitionScheme(partition, Y, Z, pieces, terminals, piece_of)


def partition_error(a: list, b: list) -> float:
    return _sup_diff(a, b)


# -- comparison -----------------------------------------------------------------

@dataclass
class ComparisonReport:
    max_violation: float  # max over nodes of (Y1 - Ybar)^+ and (Ybar - Y2)^+
    holds: bool
    witness: dict | None
    Y1: list
    Ybar: list
    Y2: list


def _order_precheck(g_lo: Generator, g_hi: Generator, spec: SampleSpec, label: str):
    rng = np.random.default_rng(spec.seed)
    t, s, y, z, zp = _draw(spec, rng)
    diff = g_lo(t, s, y, z, zp) - g_hi(t, s, y, z, zp)
    bad = np.flatnonzero(diff > 1e-12 * (1 + np.abs(g_hi(t, s, y, z, zp))))
    if bad.size:
        k = bad[0]
        raise ComparisonError(f"generator order {label} violated",
                              {"t": t[k], "s": s[k], "y": y[k], "z": z[k], "zp": zp[k],
                               "excess": float(diff[k])})


def compare_type1(driver: Driver, g1: Generator, gbar: Generator, g2: Generator, psi1, psibar, psi2,
                  *, tol: float = 1e-8, picard: PicardConfig = PicardConfig(),
                  sample: SampleSpec = SampleSpec(count=2000), cfg: StepConfig = StepConfig()
                  ) -> ComparisonReport:
    """Solve three Type-I BSVIEs and check Y1 <= Ybar <= Y2 nodewise.

    ``psibar=None`` uses the midpoint (psi1 + psi2)/2.
    """
    p1 = position_terminals(driver, psi1)
    p2 = position_terminals(driver, psi2)
    pb = 0.5 * (p1 + p2) if psibar is None else position_terminals(driver, psibar)
    if np.any(p1 > p2) or np.any(p1 > pb) or np.any(pb > p2):
        i, node = np.argwhere((p1 > pb) | (pb > p2) | (p1 > p2))[0]
        raise ComparisonError("free terms are not ordered psi1 <= psibar <= psi2",
                              {"i": int(i), "node": int(node)})
    if gbar.uses_y and not gbar.certificate.monotone:
        raise ComparisonError(f"{gbar.name} must be nondecreasing in y")
    sample = SampleSpec(sample.count, driver.grid.horizon, sample.y_range, sample.z_range,
                        sample.zp_range, sample.seed)
    _order_precheck(g1, gbar, sample, "g1 <= gbar")
    _order_precheck(gbar, g2, sample, "gbar <= g2")
    y1 = solve_type1_general(driver, g1, p1, picard=picard, cfg=cfg).Y
    yb = solve_type1_general(driver, gbar, pb, picard=picard, cfg=cfg).Y
    y2 = solve_type1_general(driver, g2, p2, picard=picard, cfg=cfg).Y
    worst, witness = 0.0, None
    for i in range(driver.steps + 1):
        for name, lo, hi in (("Y1<=Ybar", y1[i], yb[i]), ("Ybar<=Y2", yb[i], y2[i])):
            v = float(np.max(lo - hi))
            if v > worst:
                worst, witness = v, {"i": i, "pair": name, "node": int(np.argmax(lo - hi))}
    return ComparisonReport(worst, worst <= tol, witness, y1, yb, y2)
