"""Discrete Brownian drivers and their conditional-expectation operators.

Three backends share one node-array convention: a function adapted at step k
is an array whose last axis runs over the step-k nodes, any leading axes are
batch axes (typically the outer time index of a BSVIE).

* ``LatticeDriver``  recombining binomial lattice, node m = number of up moves,
  W = (2m - k) sqrt(dt). Markov in W(t_k) only.
* ``PathTreeDriver`` full binary tree, node index at step k is the integer
  whose k bits are the moves (most significant bit first, 1 = up). Children of
  node n are 2n and 2n + 1, so descendants of a node form a contiguous block.
* ``MonteCarloDriver`` P Gaussian paths; conditional expectations are
  least-squares projections on Hermite polynomials of W(t_k).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial.hermite_e import hermevander

from .grid import TimeGrid
from .position import Position, PositionError

BACKENDS = ("lattice", "path-tree", "monte-carlo")


class DriverError(ValueError):
    pass


@dataclass(frozen=True)
class DriverSpec:
    backend: str = "lattice"
    paths: int = 4096
    seed: int = 0
    basis_degree: int = 4
    tree_cap: int = 22


class Driver:
    kind: str = ""

    def __init__(self, grid: TimeGrid):
        self.grid = grid
        self.steps = grid.steps
        self.dt = grid.dt
        self.sqdt = math.sqrt(grid.dt)

    # -- node structure -------------------------------------------------
    def n_nodes(self, k: int) -> int:
        raise NotImplementedError

    def w(self, k: int) -> np.ndarray:
        raise NotImplementedError

    def probs(self, k: int) -> np.ndarray:
        raise NotImplementedError

    def increment(self, k: int) -> np.ndarray:
        """Delta W_{k+1} = W(t_{k+1}) - W(t_k) on the step-(k+1) nodes."""
        raise NotImplementedError

    def lift(self, f: np.ndarray, k_from: int, k_to: int) -> np.ndarray:
        """Re-index a step-``k_from`` adapted array on the step-``k_to`` nodes."""
        raise NotImplementedError

    def edge_differences(self, f0: np.ndarray, f1: np.ndarray, k: int) -> np.ndarray:
        """f1(child) - f0(parent) over every one-step edge k -> k+1."""
        raise NotImplementedError

    @property
    def exact(self) -> bool:
        return self.kind != "monte-carlo"

    # -- operators --------------------------------------------------------
    def expect(self, f: np.ndarray, k: int) -> np.ndarray:
        """E_{t_k}[f] for f given on the step-(k+1) nodes."""
        raise NotImplementedError

    def project(self, f: np.ndarray, k: int) -> np.ndarray:
        """E_{t_k}[f Delta W_{k+1}] / dt for f given on the step-(k+1) nodes."""
        raise NotImplementedError

    def exp_increment(self, q, z: np.ndarray, k: int) -> np.ndarray:
        """(1/q) ln E_{t_k}[exp(q z Delta W_{k+1})], the one-step quadratic drift.

        Equals q z^2 dt / 2 for Gaussian increments and ln cosh(q z sqrt(dt)) / q
        on binary ones; q = 0 gives 0.
        """
        raise NotImplementedError

    def conditional_expectation(self, f: np.ndarray, k2: int, k1: int) -> np.ndarray:
        if not 0 <= k1 <= k2 <= self.steps:
            raise DriverError(f"need 0 <= k1 <= k2 <= N, got k1={k1}, k2={k2}")
        self._check(f, k2)
        for k in range(k2 - 1, k1 - 1, -1):
            f = self.expect(f, k)
        return f

    def mean(self, f: np.ndarray, k: int) -> np.ndarray:
        self._check(f, k)
        return self.conditional_expectation(f, k, 0)[..., 0]

    def _check(self, f: np.ndarray, k: int):
        n = self.n_nodes(k)
        if np.ndim(f) == 0 or np.shape(f)[-1] != n:
            raise DriverError(
                f"{self.kind}: expected {n} values at step {k}, got shape {np.shape(f)}")

    # -- position processes -----------------------------------------------
    def terminal_w(self) -> np.ndarray:
        return self.w(self.steps)

    def terminal_max(self) -> np.ndarray | None:
        return None

    def evaluate_position(self, psi: Position, i: int) -> np.ndarray:
        """Node values of psi(t_i) on the terminal nodes."""
        return self.position_matrix(psi, [i])[0]

    def position_matrix(self, psi: Position, indices) -> np.ndarray:
        if psi.path_dependent and self.terminal_max() is None:
            raise DriverError(
                f"path-dependent position {psi.label} cannot be represented on the {self.kind}")
        w_t, w_m = self.terminal_w(), self.terminal_max()
        rows = []
        for i in indices:
            try:
                rows.append(psi(self.grid.time(int(i)), w_t, w_m))
            except PositionError as exc:
                raise DriverError(str(exc)) from None
        out = np.array(rows, dtype=float).reshape(len(rows), self.n_nodes(self.steps))
        if not np.all(np.isfinite(out)):
            raise DriverError(f"position {psi.label} is not finite on every terminal node")
        return out


class _BinaryDriver(Driver):
    def exp_increment(self, q, z, k):
        q = np.asarray(q, dtype=float)
        if not np.any(q):
            return np.zeros(np.broadcast(q, z).shape)
        x = np.abs(q * z) * self.sqdt
        # ln cosh(x) = x + log1p(exp(-2x)) - ln 2, stable for large x
        lc = x + np.log1p(np.exp(-2.0 * x)) - math.log(2.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(q == 0.0, 0.0, lc / np.where(q == 0.0, 1.0, q))
        return out


class LatticeDriver(_BinaryDriver):
    kind = "lattice"

    def n_nodes(self, k):
        return k + 1

    def w(self, k):
        m = np.arange(k + 1)
        return (2 * m - k) * self.sqdt

    def probs(self, k):
        return np.array([math.comb(k, m) for m in range(k + 1)], dtype=float) / 2.0 ** k

    def expect(self, f, k):
        self._check(f, k + 1)
        return 0.5 * (f[..., 1:] + f[..., :-1])

    def project(self, f, k):
        self._check(f, k + 1)
        return (f[..., 1:] - f[..., :-1]) / (2.0 * self.sqdt)

    def increment(self, k):
        raise DriverError("the recombining lattice does not resolve one-step increments per node")

    def lift(self, f, k_from, k_to):
        if k_from == k_to:
            return f
        raise DriverError("the recombining lattice cannot carry path information between steps")

    def edge_differences(self, f0, f1, k):
        self._check(f0, k)
        self._check(f1, k + 1)
        return np.concatenate([f1[..., :-1] - f0, f1[..., 1:] - f0], axis=-1)


class PathTreeDriver(_BinaryDriver):
    kind = "path-tree"

    def __init__(self, grid, cap=22):
        if grid.steps > cap:
            raise DriverError(f"path tree with N={grid.steps} exceeds the size cap {cap}")
        super().__init__(grid)
        ws = [np.zeros(1)]
        for k in range(grid.steps):
            prev = ws[-1]
            ws.append((np.repeat(prev, 2).reshape(-1, 2) + [-self.sqdt, self.sqdt]).ravel())
        self._w = ws

    def n_nodes(self, k):
        return 1 << k

    def w(self, k):
        return self._w[k]

    def probs(self, k):
        return np.full(1 << k, 1.0 / (1 << k))

    def expect(self, f, k):
        self._check(f, k + 1)
        return 0.5 * (f[..., 1::2] + f[..., 0::2])

    def project(self, f, k):
        self._check(f, k + 1)
        return (f[..., 1::2] - f[..., 0::2]) / (2.0 * self.sqdt)

    def increment(self, k):
        out = np.empty(1 << (k + 1))
        out[0::2] = -self.sqdt
        out[1::2] = self.sqdt
        return out

    def lift(self, f, k_from, k_to):
        if k_to < k_from:
            raise DriverError("cannot lift to an earlier step")
        self._check(f, k_from)
        return np.repeat(f, 1 << (k_to - k_from), axis=-1)

    def edge_differences(self, f0, f1, k):
        return f1 - self.lift(f0, k, k + 1)

    @cached_property
    def _running_max(self):
        m = self._w[0]
        for k in range(1, self.steps + 1):
            m = np.maximum(np.repeat(m, 2), self._w[k])
        return m

    def terminal_max(self):
        return self._running_max


class MonteCarloDriver(Driver):
    kind = "monte-carlo"

    def __init__(self, grid, paths=4096, seed=0, basis_degree=4):
        if paths < 2:
            raise DriverError(f"monte-carlo needs at least 2 paths, got {paths}")
        if basis_degree < 0:
            raise DriverError(f"basis degree must be >= 0, got {basis_degree}")
        super().__init__(grid)
        self.paths = int(paths)
        self.seed = int(seed)
        self.basis_degree = int(basis_degree)
        # row p depends only on (seed, p): draws are consumed path by path
        normals = np.random.default_rng(self.seed).standard_normal((self.paths, grid.steps))
        self.W = np.zeros((self.paths, grid.steps + 1))
        np.cumsum(normals * self.sqdt, axis=1, out=self.W[:, 1:])
        self._pinv = {}

    def n_nodes(self, k):
        return self.paths

    def w(self, k):
        return self.W[:, k]

    def probs(self, k):
        return np.full(self.paths, 1.0 / self.paths)

    def increment(self, k):
        return self.W[:, k + 1] - self.W[:, k]

    def lift(self, f, k_from, k_to):
        if k_to < k_from:
            raise DriverError("cannot lift to an earlier step")
        self._check(f, k_from)
        return f

    def edge_differences(self, f0, f1, k):
        return f1 - f0

    def _basis(self, k):
        if k not in self._pinv:
            if k == 0:
                b = np.ones((self.paths, 1))
            else:
                x = self.W[:, k] / math.sqrt(self.grid.time(k))
                b = hermevander(x, self.basis_degree)
            self._pinv[k] = (b, np.linalg.pinv(b))
        return self._pinv[k]

    def regress(self, f, k):
        b, pinv = self._basis(k)
        return (f @ pinv.T) @ b.T

    def expect(self, f, k):
        self._check(f, k + 1)
        return self.regress(f, k)

    def project(self, f, k):
        # centre first: constants get a zero integrand and the noise shrinks
        self._check(f, k + 1)
        return self.regress((f - self.regress(f, k)) * self.increment(k), k) / self.dt

    def exp_increment(self, q, z, k):
        return 0.5 * np.asarray(q, dtype=float) * z * z * self.dt

    def conditional_expectation(self, f, k2, k1):
        if not 0 <= k1 <= k2 <= self.steps:
            raise DriverError(f"need 0 <= k1 <= k2 <= N, got k1={k1}, k2={k2}")
        self._check(f, k2)
        return f if k1 == k2 else self.regress(f, k1)

    def mean(self, f, k):
        self._check(f, k)
        return np.mean(f, axis=-1)

    def terminal_max(self):
        return self.W.max(axis=1)


def build_driver(grid: TimeGrid, spec: DriverSpec | str = "lattice", **kwargs) -> Driver:
    if isinstance(spec, str):
        spec = DriverSpec(backend=spec, **kwargs)
    if spec.backend == "lattice":
        return LatticeDriver(grid)
    if spec.backend == "path-tree":
        return PathTreeDriver(grid, cap=spec.tree_cap)
    if spec.backend == "monte-carlo":
        return MonteCarloDriver(grid, spec.paths, spec.seed, spec.basis_degree)
    raise DriverError(f"unknown backend {spec.backend!r}; expected one of {BACKENDS}")


def conditional_expectation(driver: Driver, f: np.ndarray, k2: int, k1: int) -> np.ndarray:
    return driver.conditional_expectation(np.asarray(f, dtype=float), k2, k1)


def conditional_increment_projection(driver: Driver, f: np.ndarray, k: int) -> np.ndarray:
    """Discrete representation integrand Z_k of a step-(k+1) function."""
    return driver.project(np.asarray(f, dtype=float), k)


def evaluate_position(driver: Driver, psi: Position, i: int) -> np.ndarray:
    return driver.evaluate_position(psi, i)


def representation_integrands(driver: Driver, f: np.ndarray, k: int) -> list[np.ndarray]:
    """Z_0, ..., Z_{k-1} with f = E[f] + sum_j Z_j Delta W_{j+1} for f adapted at step k."""
    out = [None] * k
    for j in range(k - 1, -1, -1):
        out[j] = driver.project(f, j)
        f = driver.expect(f, j)
    return out


def stochastic_sum(driver: Driver, integrands: list[np.ndarray], k: int) -> np.ndarray:
    """sum_{j<k} Z_j Delta W_{j+1} on the step-k nodes (path-resolving backends only)."""
    total = np.zeros(np.shape(integrands[0])[:-1] + (driver.n_nodes(k),)) if integrands else \
        np.zeros(driver.n_nodes(k))
    for j, z in enumerate(integrands):
        step = driver.lift(z, j, j + 1) * driver.increment(j)
        total = total + driver.lift(step, j + 1, k)
    return total
