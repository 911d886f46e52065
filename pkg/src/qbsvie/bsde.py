"""Backward induction for quadratic BSDEs and t-parameterised families of BSDEs.

One step of every solver in this package is

    eta_j = E_j[eta_{j+1}] + dt * f(t, s_j, ybar_j, zeta_j, z'_j) + D_q(zeta_j)
    zeta_j = E_j[eta_{j+1} dW_{j+1}] / dt

where f is the explicit part of the generator, D_q the exponential-transform
increment of its (q/2) z^2 part, and the y-slot is the trapezoid

    ybar_j = theta * y_j + (1 - theta) * E_j[y_{j+1}]

with theta = 1/2 by default.  For a single BSDE y is eta itself and the step
is implicit in y; for a family with a frozen argument U, y = U and the step is
explicit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .driver import Driver
from .generator import Certificate, Generator
from .position import Position

THETA = 0.5
INNER_TOL = 1e-12
INNER_MAX_ITER = 100


class SolverError(RuntimeError):
    """Raised when an inner or outer iteration fails; ``info`` locates the failure."""

    def __init__(self, message, **info):
        super().__init__(message)
        self.info = info


@dataclass(frozen=True)
class StepConfig:
    theta: float = THETA
    inner_tol: float = INNER_TOL
    inner_max_iter: int = INNER_MAX_ITER
    z_clip: float | None = None


@dataclass
class StepStats:
    inner_iterations: int = 0
    max_residual: float = 0.0
    clip_count: int = 0

    def merge(self, other: "StepStats"):
        self.inner_iterations = max(self.inner_iterations, other.inner_iterations)
        self.max_residual = max(self.max_residual, other.max_residual)
        self.clip_count += other.clip_count


def _check_step_size(driver: Driver, g: Generator, cfg: StepConfig):
    if g.uses_y and driver.dt * g.certificate.L >= 1.0:
        raise SolverError(
            f"dt * L = {driver.dt * g.certificate.L:.3g} >= 1: implicit step not solvable",
            dt=driver.dt, L=g.certificate.L)


def backward_step(driver: Driver, g: Generator, j: int, t_rows, eta_next, *, y_frozen=None,
                  y_next=None, zp=0.0, cfg: StepConfig = StepConfig(),
                  stats: StepStats | None = None):
    """One backward step for a batch of rows; returns (eta_j, zeta_j).

    ``y_frozen`` is the y-slot value on the step-j nodes; when None the step
    is implicit in eta_j and solved by fixed-point iteration node by node.
    In the implicit case the lagged half of the y-slot is E_j[y_next]
    (default: eta_next itself).
    """
    s = driver.grid.time(j)
    m = driver.expect(eta_next, j)
    z = driver.project(eta_next, j)
    if cfg.z_clip is not None:
        over = np.abs(z) > cfg.z_clip
        if stats is not None:
            stats.clip_count += int(over.sum())
        z = np.clip(z, -cfg.z_clip, cfg.z_clip)
    base = m
    if g.has_quad:
        base = m + driver.exp_increment(g.quad_coef(t_rows, s), z, j)
    dt = driver.dt
    if y_frozen is not None or not g.uses_y:
        y = 0.0 if y_frozen is None else y_frozen
        return base + dt * g.explicit(t_rows, s, y, z, zp), z

    th = cfg.theta
    lag = (1.0 - th) * (m if y_next is None else driver.expect(y_next, j))
    eta = base + dt * g.explicit(t_rows, s, th * m + lag, z, zp)
    eta = np.array(np.broadcast_to(eta, m.shape), dtype=float)
    active = np.ones(eta.shape, dtype=bool)
    for it in range(1, cfg.inner_max_iter + 1):
        new = base + dt * g.explicit(t_rows, s, th * eta + lag, z, zp)
        new = np.broadcast_to(new, eta.shape)
        delta = np.abs(new - eta)
        eta = np.where(active, new, eta)
        active &= delta > cfg.inner_tol * np.maximum(1.0, np.abs(eta))
        if not active.any():
            break
    else:
        where = np.argwhere(active)[0].tolist()
        raise SolverError(f"inner fixed point did not converge at step {j}, node {where}",
                          step=j, node=where)
    if stats is not None:
        res = np.abs(eta - base - dt * g.explicit(t_rows, s, th * eta + lag, z, zp))
        stats.merge(StepStats(it, float(np.max(res)) if res.size else 0.0))
    return eta, z


@dataclass
class BsdeSolution:
    """Y_k and Z_k on the driver nodes; Z has N entries (no increment after T)."""

    Y: list
    Z: list
    xi: np.ndarray
    generator: Generator
    t_outer: float
    stats: StepStats
    theta: float = THETA

    @property
    def y0(self) -> float:
        return float(self.Y[0][0])


def solve_bsde(driver: Driver, g: Generator, xi, *, t_outer: float = 0.0,
               cfg: StepConfig = StepConfig()) -> BsdeSolution:
    """Backward induction for Y = xi + int g(t_outer, s, Y, Z) ds - int Z dW."""
    xi = np.asarray(xi, dtype=float)
    n = driver.steps
    driver._check(xi, n)
    if not np.all(np.isfinite(xi)):
        raise SolverError("terminal value is not finite")
    _check_step_size(driver, g, cfg)
    stats = StepStats()
    Y = [None] * (n + 1)
    Z = [None] * n
    Y[n] = xi.copy()
    t = np.asarray(t_outer, dtype=float)
    for j in range(n - 1, -1, -1):
        Y[j], Z[j] = backward_step(driver, g, j, t, Y[j + 1], cfg=cfg, stats=stats)
    return BsdeSolution(Y, Z, xi, g, float(t_outer), stats, cfg.theta)


@dataclass
class BsdeFamilySolution:
    """eta(t_i, t_j), zeta(t_i, t_j) for 0 <= i <= j.

    ``eta[j]`` has shape (j+1, n_j): row i is eta(t_i, t_j).  ``zeta[j]`` is the
    same for j < N.  ``Y[i] = eta[i][i]`` is the diagonal.
    """

    eta: list
    zeta: list
    terminals: np.ndarray
    generator: Generator
    frozen: list | None
    stats: StepStats
    theta: float = THETA

    @property
    def Y(self) -> list:
        return [self.eta[i][i] for i in range(len(self.eta))]


def frozen_slot(driver: Driver, U: list, j: int, theta: float) -> np.ndarray:
    """theta U_j + (1 - theta) E_j[U_{j+1}] on the step-j nodes."""
    if j + 1 >= len(U):
        return U[j]
    return theta * U[j] + (1.0 - theta) * driver.expect(U[j + 1], j)


def position_terminals(driver: Driver, psi) -> np.ndarray:
    if isinstance(psi, Position):
        return driver.position_matrix(psi, range(driver.steps + 1))
    out = np.asarray(psi, dtype=float)
    if out.shape != (driver.steps + 1, driver.n_nodes(driver.steps)):
        raise SolverError(f"position matrix has shape {out.shape}, expected "
                          f"{(driver.steps + 1, driver.n_nodes(driver.steps))}")
    return out


def solve_bsde_family(driver: Driver, g: Generator, psi, *, frozen: list | None = None,
                      zprime: list | None = None, cfg: StepConfig = StepConfig()) -> BsdeFamilySolution:
    """Solve, for every outer index i, the BSDE on [t_i, T] with terminal psi(t_i).

    With ``frozen=U`` the y-slot of g reads U (one Picard map); without it each
    row is an ordinary BSDE in its own eta.  ``zprime[j]`` (shape (j+1, n_j))
    supplies the reflected argument for row i at step j.
    """
    terms = position_terminals(driver, psi)
    n = driver.steps
    if frozen is None:
        _check_step_size(driver, g, cfg)
    stats = StepStats()
    times = driver.grid.points
    eta = [None] * (n + 1)
    zeta = [None] * n
    eta[n] = terms
    for j in range(n - 1, -1, -1):
        nxt = eta[j + 1][: j + 1]
        t_rows = times[: j + 1, None]
        y = None if frozen is None else frozen_slot(driver, frozen, j, cfg.theta)
        zp = 0.0 if zprime is None else zprime[j]
        try:
            eta[j], zeta[j] = backward_step(driver, g, j, t_rows, nxt, y_frozen=y, zp=zp,
                                            cfg=cfg, stats=stats)
        except SolverError as exc:
            raise SolverError(f"{exc} (family step {j})", **exc.info, family_step=j) from None
    return BsdeFamilySolution(eta, zeta, terms, g, frozen, stats, cfg.theta)


# -- a priori diagnostics -------------------------------------------------------

def alpha_bound(c_tilde: float, horizon: float):
    """t -> (C + 1/2) exp(2 C (T - t)) - 1/2, the |Y|^2 ceiling of the Picard scheme."""
    if not c_tilde > 0:
        raise ValueError(f"C~ must be positive, got {c_tilde}")
    c = float(c_tilde)

    def alpha(t):
        return (c + 0.5) * np.exp(2.0 * c * (horizon - np.asarray(t, dtype=float))) - 0.5

    return alpha


def c_tilde_for(psi_sup: float, L: float) -> float:
    """Smallest C~ with |psi|^2 <= C~ and |2 x g(t,s,y,0)| <= C~(1 + x^2 + y^2).

    From |g(t,s,y,0)| <= L(1 + |y|):  |2xg| <= L + 2L x^2 + L y^2.
    """
    return max(float(psi_sup) ** 2, 2.0 * float(L), np.finfo(float).tiny)


def bmo_budget(gamma: float, psi_sup: float) -> float:
    """A = (2/gamma^2) e^{gamma |psi|} + (1/gamma) e^{2(gamma+1)|psi| + gamma + 2}."""
    if gamma <= 0:
        return math.inf
    p = float(psi_sup)
    try:
        return 2.0 / gamma ** 2 * math.exp(gamma * p) + math.exp(2 * (gamma + 1) * p + gamma + 2) / gamma
    except OverflowError:
        return math.inf


@dataclass
class BmoEstimate:
    value: float
    profile: list = field(default_factory=list)  # max over nodes (and rows) per tau


def bmo_norm_estimate(driver: Driver, sol) -> BmoEstimate:
    """max_tau max_nodes E_tau[sum_{k >= tau} Z_k^2 dt] (also max over outer rows)."""
    n = driver.steps
    dt = driver.dt
    if isinstance(sol, BsdeSolution):
        zs = [np.asarray(z)[None, :] for z in sol.Z]
    else:
        zs = sol.zeta
    profile = [0.0] * (n + 1)
    q = np.zeros((n + 1, driver.n_nodes(n)))
    if isinstance(sol, BsdeSolution):
        q = q[:1]
    for j in range(n - 1, -1, -1):
        rows = zs[j].shape[0]
        q = driver.expect(q[:rows], j) + zs[j] ** 2 * dt
        profile[j] = float(np.max(q))
    return BmoEstimate(max(profile), profile)


@dataclass
class BoundReport:
    holds: bool
    worst_margin: float  # max of lhs - rhs in log scale; <= tol means the bound holds
    witness: dict | None = None
    checked: int = 0


def _bh_rows(driver, values, terminals, gamma, beta, h_of, tol):
    """Check gamma|v| <= log E_k[exp(gamma e^{beta(T-t_k)}|xi| + gamma sum_j h_j e^{beta(t_j-t_k)} dt)].

    ``values[k]`` has shape (rows_k, n_k) and row i uses terminal row i.
    ``h_of(j)`` returns h on the step-j nodes.  With gamma = 0 the limit
    |v| <= E_k[e^{beta(T-t_k)}|xi| + sum_j h_j e^{beta(t_j-t_k)} dt] is checked.
    """
    n = driver.steps
    dt = driver.dt
    times = driver.grid.points
    absxi = np.abs(terminals)
    worst, witness, count = -math.inf, None, 0

    def judge(k, acc, shift):
        nonlocal worst, witness, count
        v = np.abs(values[k])
        if gamma > 0:
            lhs, rhs = gamma * v, np.log(acc) + shift
        else:
            lhs, rhs = v, acc
        margin = lhs - rhs
        count += margin.size
        idx = np.unravel_index(np.argmax(margin), margin.shape)
        if margin[idx] > worst:
            worst = float(margin[idx])
            witness = {"step": k, "row": int(idx[0]), "node": int(idx[-1]),
                       "lhs": float(lhs[idx]), "rhs": float(rhs[idx])}

    def start(grow, rows):
        if gamma > 0:
            shift = gamma * grow * float(absxi.max())
            return np.exp(gamma * grow * absxi[:rows] - shift), shift
        return grow * absxi[:rows], 0.0

    def accumulate(acc, j, w, rows):
        hj = np.broadcast_to(h_of(j), (rows, driver.n_nodes(j)))
        acc = driver.expect(acc[:rows], j)
        return acc * np.exp(gamma * hj * w) if gamma > 0 else acc + hj * w

    if beta == 0:
        # one backward pass serves every conditioning step
        acc, shift = start(1.0, absxi.shape[0])
        judge(n, acc[: values[n].shape[0]], shift)
        for k in range(n - 1, -1, -1):
            acc = accumulate(acc, k, dt, values[k].shape[0])
            judge(k, acc, shift)
    else:
        for k in range(n, -1, -1):
            rows = values[k].shape[0]
            acc, shift = start(math.exp(beta * (driver.grid.horizon - times[k])), rows)
            for j in range(n - 1, k - 1, -1):
                acc = accumulate(acc, j, math.exp(beta * (times[j] - times[k])) * dt, rows)
            judge(k, acc, shift)
    scale = 1.0 + (abs(witness["rhs"]) if witness else 0.0)
    return BoundReport(worst <= tol * scale, worst, witness, count)


def briand_hu_bound_check(driver: Driver, sol, certificate: Certificate | None = None,
                          tol: float = 1e-9) -> BoundReport:
    """Nodewise check of e^{gamma|Y(t)|} <= E_t[e^{gamma e^{beta(T-t)}|xi| + gamma int |h| e^{beta(s-t)} ds}].

    For a BSDE the certificate's (gamma, beta, h) are used.  For a family with
    a frozen argument U the bound is applied row by row with beta = 0 and
    h = L(1 + |ybar|), ybar the frozen y-slot.
    """
    if isinstance(sol, BsdeSolution):
        c = certificate or sol.generator.certificate
        beta = c.beta_for(sol.generator.uses_y)
        values = [np.asarray(y)[None, :] for y in sol.Y]
        times = driver.grid.points
        return _bh_rows(driver, values, sol.xi[None, :], c.gamma, beta,
                        lambda j: c.h_at(np.asarray(times[j])), tol)
    c = certificate or sol.generator.certificate
    if sol.frozen is not None:
        frozen, theta = sol.frozen, sol.theta

        def h_of(j):
            return c.L * (1.0 + np.abs(frozen_slot(driver, frozen, j, theta)))

        beta = 0.0
    else:
        times = driver.grid.points
        beta = c.beta_for(sol.generator.uses_y)

        def h_of(j):
            return c.h_at(np.asarray(times[j]))

    return _bh_rows(driver, sol.eta, sol.terminals, c.gamma, beta, h_of, tol)


def alpha_ceiling_check(driver: Driver, Y: list, c_tilde: float) -> BoundReport:
    """|Y(t_i)|^2 <= alpha(t_i) at every node."""
    alpha = alpha_bound(c_tilde, driver.grid.horizon)
    worst, witness = -math.inf, None
    for i, y in enumerate(Y):
        a = float(alpha(driver.grid.time(i)))
        margin = float(np.max(np.asarray(y) ** 2)) - a
        if margin > worst:
            worst, witness = margin, {"step": i, "alpha": a, "max_y2": margin + a}
    return BoundReport(worst <= 0.0, worst, witness, len(Y))
