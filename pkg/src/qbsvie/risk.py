"""Equilibrium dynamic risk measures rho(t; psi) = Y(t) of a Type-I BSVIE with free term -psi.

The generator is g(t, s, y, z) = r(s) y + g0(t, s, z) with a nonnegative
deterministic rate r.  ``check_axioms`` evaluates the defining identities
and inequalities of a dynamic risk measure over seeded random positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .bsde import StepConfig, solve_bsde
from .bsvie import PicardConfig, solve_type1_general
from .driver import Driver
from .generator import Generator, GeneratorError, SampleSpec, discounted, validate_certificate
from .position import Position

AXIOMS = ("past_independence", "monotonicity", "translation_invariance", "convexity",
          "positive_homogeneity", "subadditivity")
TOL_EXACT = 1e-7
TOL_MC = 1e-4
LAMBDAS = (0.5, 2.0, 3.0)


class RiskError(ValueError):
    pass


@dataclass
class RiskMeasureSpec:
    """r(s) y + g0(t, s, z); ``r`` is a constant or a callable with bound ``r_max``."""

    g0: Generator
    r: float | object = 0.0
    r_max: float | None = None
    validate: bool = True

    def __post_init__(self):
        if self.g0.uses_y:
            raise RiskError(f"g0 = {self.g0.name} must not depend on y")
        if not callable(self.r) and float(self.r) < 0:
            raise RiskError(f"discount rate must be nonnegative, got {self.r}")
        try:
            self.g = discounted(self.r, self.g0, self.r_max)
        except GeneratorError as exc:
            raise RiskError(str(exc)) from None
        if self.validate:
            rep = validate_certificate(self.g, SampleSpec(count=2000))
            if not rep.ok:
                raise RiskError(f"assembled generator fails its certificate: {sorted(rep.kinds())}")

    @property
    def convex(self) -> bool:
        return self.g0.convex

    @property
    def coherent(self) -> bool:
        return self.g0.coherent

    def rate(self, s) -> np.ndarray:
        return np.asarray(self.r(s) if callable(self.r) else self.r, dtype=float)

    def discount(self, t: float, horizon: float) -> float:
        """exp(int_t^T r(s) ds)."""
        if not callable(self.r):
            return math.exp(float(self.r) * (horizon - t))
        return math.exp(quad(lambda s: float(self.r(s)), t, horizon)[0])

    def claims(self, axiom: str) -> bool:
        if axiom == "convexity":
            return self.convex
        if axiom in ("positive_homogeneity", "subadditivity"):
            return self.coherent
        return True


def _neg_terminals(driver: Driver, psi) -> np.ndarray:
    if isinstance(psi, Position):
        return -driver.position_matrix(psi, range(driver.steps + 1))
    return -np.asarray(psi, dtype=float)


def rho(driver: Driver, spec: RiskMeasureSpec, psi, *, picard: PicardConfig = PicardConfig(),
        cfg: StepConfig = StepConfig()) -> list:
    """rho(t_i; psi) on the step-i nodes, for every grid index i."""
    if np.any(spec.rate(driver.grid.points) < 0):
        raise RiskError("discount rate is negative on the grid")
    return solve_type1_general(driver, spec.g, _neg_terminals(driver, psi), picard=picard, cfg=cfg).Y


def classical_bsde_rho(driver: Driver, g: Generator, xi, cfg: StepConfig = StepConfig()) -> list:
    """rho(t; xi) = Y(t) of the BSDE with terminal -xi."""
    if isinstance(xi, Position):
        xi = driver.evaluate_position(xi, driver.steps)
    return solve_bsde(driver, g, -np.asarray(xi, dtype=float), cfg=cfg).Y


# -- random positions -------------------------------------------------------------

def random_position(rng: np.random.Generator) -> Position:
    """psi(t) = a + b t W_T + c tanh(W_T) + d cos(t + W_T) with coefficients in [-1, 1]."""
    a, b, c, d = rng.uniform(-1.0, 1.0, 4)
    return Position(lambda t, w, m: a + b * t * w + c * np.tanh(w) + d * np.cos(t + w),
                    False, "random", {"a": a, "b": b, "c": c, "d": d})


def _masked(psi: Position, extra: Position, start: float, before: bool) -> Position:
    """psi + extra on t < start (before=True) or on t >= start (before=False)."""
    f, e = psi.fn, extra.fn

    def fn(t, w, m):
        on = (t < start) == before
        return f(t, w, m) + (e(t, w, m) if on else 0.0)

    return Position(fn, psi.path_dependent or extra.path_dependent, psi.label)


# -- axiom checks -----------------------------------------------------------------

@dataclass
class AxiomVerdict:
    axiom: str
    claimed: bool
    worst: float = 0.0
    witness: dict | None = None
    tolerance: float = TOL_EXACT
    evaluations: int = 0

    @property
    def passed(self) -> bool:
        return not self.claimed or self.worst <= self.tolerance

    def record(self, value: float, witness: dict):
        self.evaluations += 1
        if value > self.worst:
            self.worst, self.witness = float(value), witness

    def as_dict(self) -> dict:
        return {"axiom": self.axiom, "claimed": self.claimed, "worst": self.worst,
                "tolerance": self.tolerance, "passed": self.passed,
                "status": ("pass" if self.passed else "FAIL") if self.claimed else "not claimed",
                "evaluations": self.evaluations, "witness": self.witness}


@dataclass
class RiskReport:
    rho: list
    verdicts: dict = field(default_factory=dict)
    seeds: list = field(default_factory=list)

    @property
    def rho0(self) -> float:
        return float(np.asarray(self.rho[0]).ravel()[0])

    @property
    def ok(self) -> bool:
        return all(v.passed for v in self.verdicts.values())

    def as_dict(self) -> dict:
        return {"rho0": self.rho0, "ok": self.ok, "seeds": list(self.seeds),
                "verdicts": {k: v.as_dict() for k, v in self.verdicts.items()}}


def _sup_pos(a: list, b: list, start: int = 0) -> tuple[float, int]:
    """max over i >= start and nodes of (a_i - b_i)^+, with the index."""
    worst, where = 0.0, start
    for i in range(start, len(a)):
        v = float(np.max(a[i] - b[i]))
        if v > worst:
            worst, where = v, i
    return worst, where


def check_axioms(driver: Driver, spec: RiskMeasureSpec, instances: int = 50, seed: int = 0, *,
                 axioms=AXIOMS, tol: float | None = None, picard: PicardConfig = PicardConfig(),
                 cfg: StepConfig = StepConfig()) -> RiskReport:
    """Evaluate each axiom over ``instances`` random positions drawn from ``seed + k``."""
    if instances < 1:
        raise RiskError("need at least one instance")
    tol = tol if tol is not None else (TOL_EXACT if driver.exact else TOL_MC)
    unknown = set(axioms) - set(AXIOMS)
    if unknown:
        raise RiskError(f"unknown axioms {sorted(unknown)}")
    verdicts = {a: AxiomVerdict(a, spec.claims(a), tolerance=tol) for a in axioms}
    n, T = driver.steps, driver.grid.horizon
    seeds = [seed + k for k in range(instances)]

    def solve(p):
        return rho(driver, spec, p, picard=picard, cfg=cfg)

    base_rho = None
    for sd in seeds:
        rng = np.random.default_rng(sd)
        psi1, psi2, pert = random_position(rng), random_position(rng), random_position(rng)
        r_idx = int(rng.integers(0, n + 1))
        t_r = driver.grid.time(r_idx) - 0.5 * driver.grid.dt
        c = float(rng.uniform(-1.0, 1.0))
        lam = float(rng.uniform(0.0, 1.0))
        r1 = solve(psi1)
        if base_rho is None:
            base_rho = r1
        if "past_independence" in verdicts:
            r_mod = solve(_masked(psi1, pert, t_r, before=True))
            v = max(float(np.max(np.abs(r_mod[i] - r1[i]))) for i in range(r_idx, n + 1))
            verdicts["past_independence"].record(v, {"seed": sd, "t_index": r_idx})
        if "monotonicity" in verdicts:
            bump = Position(lambda t, w, m, p=pert: np.abs(p.fn(t, w, m)))
            upper = _masked(_masked(psi1, bump, t_r, before=False), pert, t_r, before=True)
            v, i = _sup_pos(solve(upper), r1, r_idx)
            verdicts["monotonicity"].record(v, {"seed": sd, "t_index": r_idx, "worst_index": i})
        if "translation_invariance" in verdicts:
            shifted = solve(psi1 + c)
            v = max(float(np.max(np.abs(shifted[i] + c * spec.discount(driver.grid.time(i), T) - r1[i])))
                    for i in range(n + 1))
            verdicts["translation_invariance"].record(v, {"seed": sd, "c": c})
        if "convexity" in verdicts:
            r2 = solve(psi2)
            mix = solve(lam * psi1 + (1.0 - lam) * psi2)
            v, i = _sup_pos(mix, [lam * a + (1.0 - lam) * b for a, b in zip(r1, r2)])
            verdicts["convexity"].record(v, {"seed": sd, "lambda": lam, "worst_index": i})
        if "positive_homogeneity" in verdicts:
            for lm in LAMBDAS:
                scaled = solve(lm * psi1)
                v = max(float(np.max(np.abs(scaled[i] - lm * r1[i]))) for i in range(n + 1))
                verdicts["positive_homogeneity"].record(v, {"seed": sd, "lambda": lm})
        if "subadditivity" in verdicts:
            r2 = solve(psi2)
            v, i = _sup_pos(solve(psi1 + psi2), [a + b for a, b in zip(r1, r2)])
            verdicts["subadditivity"].record(v, {"seed": sd, "worst_index": i})
    return RiskReport(base_rho, verdicts, seeds)
