"""Generators g(t, s, y, z, z') with declared growth certificates.

A generator is stored as an explicit part plus an optional pure quadratic
part (q/2) z^2 with a deterministic coefficient q(t, s).  Solvers integrate
the quadratic part through the exponential transform
``(1/q) ln E_k[exp(q Z dW)]``, which reproduces the closed form
``Y = (1/q) ln E[exp(q xi)]`` exactly on binary drivers; every other
dependence is evaluated explicitly in z.

All evaluation maps are vectorised: arguments are broadcastable arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np


class GeneratorError(ValueError):
    pass


def _zero(t, s, y, z, zp):
    return np.zeros(np.broadcast(t, s, y, z, zp).shape)


def _coef(c, t, s):
    if callable(c):
        return np.asarray(c(t, s), dtype=float)
    return np.asarray(c, dtype=float)


@dataclass(frozen=True)
class Certificate:
    """Declared constants of the growth and regularity assumptions.

    ``L``     bound |g| <= L(1+|y|) + (gamma/2) z^2 and y-Lipschitz constant
    ``gamma`` quadratic growth coefficient in z
    ``beta``  linear-in-y rate for the a priori exponential bound (default L)
    ``h``     integrable bound function for that estimate (default L)
    ``rho``   modulus of continuity in the outer time t, if declared
    ``monotone`` y -> g nondecreasing

    The z-Lipschitz constant implied by the certificate is ``L + gamma/2``:
    a z^2 term with coefficient gamma/2 is Lipschitz with constant gamma/2 in
    the (1 + |z1| + |z2|) |z1 - z2| form, and L covers the rest.
    """

    L: float = 0.0
    gamma: float = 0.0
    beta: float | None = None
    h: float | Callable | None = None
    rho: Callable | None = None
    monotone: bool = False

    @property
    def z_lipschitz(self) -> float:
        return self.L + 0.5 * self.gamma

    def beta_for(self, uses_y: bool) -> float:
        if self.beta is not None:
            return self.beta
        return self.L if uses_y else 0.0

    def h_at(self, s):
        if self.h is None:
            return np.full(np.shape(s), float(self.L))
        if callable(self.h):
            return np.asarray(self.h(s), dtype=float)
        return np.full(np.shape(s), float(self.h))


@dataclass(frozen=True)
class Generator:
    name: str
    explicit: Callable = _zero
    quad: float | Callable = 0.0
    certificate: Certificate = field(default_factory=Certificate)
    uses_y: bool = False
    uses_zprime: bool = False
    t_dependent: bool = False
    convex: bool = False
    coherent: bool = False
    params: dict = field(default_factory=dict, compare=False)

    def __call__(self, t, s, y, z, zp=0.0):
        t, s, y, z, zp = (np.asarray(a, dtype=float) for a in (t, s, y, z, zp))
        out = self.explicit(t, s, y, z, zp)
        q = self.quad_coef(t, s)
        if np.any(q):
            out = out + 0.5 * q * z * z
        return np.broadcast_to(out, np.broadcast(t, s, y, z, zp).shape)

    def quad_coef(self, t, s):
        return _coef(self.quad, t, s)

    @property
    def has_quad(self) -> bool:
        return callable(self.quad) or self.quad != 0.0

    def __add__(self, other: "Generator") -> "Generator":
        if not isinstance(other, Generator):
            return NotImplemented
        f1, f2 = self.explicit, other.explicit
        q1, q2 = self.quad, other.quad
        if callable(q1) or callable(q2):
            quad = lambda t, s: _coef(q1, t, s) + _coef(q2, t, s)  # noqa: E731
        else:
            quad = float(q1) + float(q2)
        c1, c2 = self.certificate, other.certificate
        rho = None
        if c1.rho is not None and c2.rho is not None:
            r1, r2 = c1.rho, c2.rho
            rho = lambda u: r1(u) + r2(u)  # noqa: E731
        elif not self.t_dependent and c2.rho is not None:
            rho = c2.rho
        elif not other.t_dependent and c1.rho is not None:
            rho = c1.rho
        cert = Certificate(
            L=c1.L + c2.L,
            gamma=c1.gamma + c2.gamma,
            beta=None if c1.beta is None and c2.beta is None
            else c1.beta_for(self.uses_y) + c2.beta_for(other.uses_y),
            h=None if c1.h is None and c2.h is None
            else (lambda s: c1.h_at(s) + c2.h_at(s)),
            rho=rho,
            monotone=c1.monotone and c2.monotone,
        )
        return Generator(
            name=f"{self.name}+{other.name}",
            explicit=lambda t, s, y, z, zp: f1(t, s, y, z, zp) + f2(t, s, y, z, zp),
            quad=quad,
            certificate=cert,
            uses_y=self.uses_y or other.uses_y,
            uses_zprime=self.uses_zprime or other.uses_zprime,
            t_dependent=self.t_dependent or other.t_dependent,
            convex=self.convex and other.convex,
            coherent=self.coherent and other.coherent,
            params={"sum": [self.params, other.params]},
        )

    def with_certificate(self, **changes) -> "Generator":
        return replace(self, certificate=replace(self.certificate, **changes))


def _lipschitz_modulus(u):
    return np.asarray(u, dtype=float)


def _nonneg_weight(gbar, gbar_max, name):
    """Validate gbar >= 0 and return (value-or-callable, sup bound)."""
    if callable(gbar):
        if gbar_max is None:
            raise GeneratorError(f"{name}: a callable gbar needs gbar_max")
        tt = np.linspace(0.0, 1.0, 41)
        vals = np.asarray(gbar(tt[:, None], tt[None, :]), dtype=float)
        if np.any(vals < 0):
            raise GeneratorError(f"{name}: gbar(t, s) must be nonnegative")
        return gbar, float(gbar_max)
    g = float(gbar)
    if g < 0:
        raise GeneratorError(f"{name}: gbar must be nonnegative, got {g}")
    return g, g


# -- catalog ------------------------------------------------------------------

def zero() -> Generator:
    return Generator("zero", certificate=Certificate(monotone=True, rho=_lipschitz_modulus),
                     convex=True, coherent=True, params={"name": "zero"})


def linear_y(a: float) -> Generator:
    a = float(a)
    return Generator(
        f"linear_y({a:g})",
        explicit=lambda t, s, y, z, zp: a * y + 0.0 * z,
        certificate=Certificate(L=abs(a), monotone=a >= 0, rho=_lipschitz_modulus),
        uses_y=True, convex=True, coherent=True,
        params={"name": "linear_y", "a": a},
    )


def quadratic_half() -> Generator:
    return Generator(
        "quadratic_half", quad=1.0,
        certificate=Certificate(L=0.0, gamma=1.0, monotone=True, rho=_lipschitz_modulus),
        convex=True, params={"name": "quadratic_half"},
    )


def entropic(gamma: float) -> Generator:
    """g = z^2 / (2 gamma); its risk measure is gamma ln E[exp(-xi/gamma)]."""
    gamma = float(gamma)
    if gamma <= 0:
        raise GeneratorError(f"entropic: gamma must be positive, got {gamma}")
    return Generator(
        f"entropic({gamma:g})", quad=1.0 / gamma,
        certificate=Certificate(L=0.0, gamma=1.0 / gamma, monotone=True, rho=_lipschitz_modulus),
        convex=True, params={"name": "entropic", "gamma": gamma},
    )


def coherent_abs(gbar=1.0, gbar_max=None) -> Generator:
    gbar, gmax = _nonneg_weight(gbar, gbar_max, "coherent_abs")
    return Generator(
        "coherent_abs",
        explicit=lambda t, s, y, z, zp: _coef(gbar, t, s) * np.abs(z),
        # gbar |z| <= gbar^2/2 + z^2/2
        certificate=Certificate(L=0.5 * gmax ** 2, gamma=1.0, monotone=True,
                                rho=None if callable(gbar) else _lipschitz_modulus),
        t_dependent=callable(gbar), convex=True, coherent=True,
        params={"name": "coherent_abs", "gbar": gbar if not callable(gbar) else "callable"},
    )


def convex_sqrt(gbar=1.0, gbar_max=None) -> Generator:
    gbar, gmax = _nonneg_weight(gbar, gbar_max, "convex_sqrt")
    return Generator(
        "convex_sqrt",
        explicit=lambda t, s, y, z, zp: _coef(gbar, t, s) * np.sqrt(1.0 + z * z),
        # gbar sqrt(1+z^2) <= gbar + gbar |z| <= gbar + gbar^2/2 + z^2/2
        certificate=Certificate(L=gmax + 0.5 * gmax ** 2, gamma=1.0, monotone=True,
                                rho=None if callable(gbar) else _lipschitz_modulus),
        t_dependent=callable(gbar), convex=True,
        params={"name": "convex_sqrt", "gbar": gbar if not callable(gbar) else "callable"},
    )


def entropic_weighted(gbar=0.25, gbar_max=None) -> Generator:
    """g0 = gbar z^2, i.e. quadratic coefficient q = 2 gbar."""
    gbar, gmax = _nonneg_weight(gbar, gbar_max, "entropic_weighted")
    quad = (lambda t, s: 2.0 * _coef(gbar, t, s)) if callable(gbar) else 2.0 * gbar
    return Generator(
        "entropic_weighted", quad=quad,
        certificate=Certificate(L=0.0, gamma=2.0 * gmax, monotone=True,
                                rho=None if callable(gbar) else _lipschitz_modulus),
        t_dependent=callable(gbar), convex=True,
        params={"name": "entropic_weighted", "gbar": gbar if not callable(gbar) else "callable"},
    )


def zprime_sine(c: float = 0.1) -> Generator:
    """g = c sin(z'), a bounded dependence on the reflected argument Z(s, t)."""
    c = float(c)
    return Generator(
        f"zprime_sine({c:g})",
        explicit=lambda t, s, y, z, zp: c * np.sin(zp) + 0.0 * z,
        certificate=Certificate(L=abs(c), monotone=True, rho=_lipschitz_modulus),
        uses_zprime=True, params={"name": "zprime_sine", "c": c},
    )


def aggregator(f: Callable, variance_multiplier: Callable, L: float, a_max: float,
               monotone: bool = False) -> Generator:
    """Recursive-utility aggregator g = f(y) + A(y) z^2 with |A| <= a_max.

    The z^2 term carries a y-dependent coefficient, so it is integrated
    explicitly rather than through the exponential transform.
    """
    return Generator(
        "aggregator",
        explicit=lambda t, s, y, z, zp: f(y) + variance_multiplier(y) * z * z,
        certificate=Certificate(L=float(L), gamma=2.0 * float(a_max), monotone=monotone,
                                rho=_lipschitz_modulus),
        uses_y=True, params={"name": "aggregator"},
    )


def _rate(r, s):
    return np.asarray(r(s), dtype=float) if callable(r) else r


def discounted(r, g0: Generator, r_max: float | None = None) -> Generator:
    """g = r(s) y + g0(t, s, z) with a nonnegative deterministic rate r."""
    if callable(r):
        if r_max is None:
            raise GeneratorError("discounted: a callable rate needs r_max")
        vals = np.asarray(r(np.linspace(0.0, 1.0, 101)), dtype=float)
        if np.any(vals < 0):
            raise GeneratorError("discounted: r(s) must be nonnegative")
        rate, rmax = r, float(r_max)
    else:
        rate = float(r)
        if rate < 0:
            raise GeneratorError(f"discounted: r must be nonnegative, got {rate}")
        rmax = rate
    if g0.uses_y:
        raise GeneratorError("discounted: g0 must not depend on y")
    f0 = g0.explicit
    c0 = g0.certificate
    return Generator(
        f"discounted({g0.name})",
        explicit=lambda t, s, y, z, zp: _rate(rate, s) * y + f0(t, s, y, z, zp),
        quad=g0.quad,
        certificate=replace(c0, L=c0.L + rmax, monotone=True),
        uses_y=rmax > 0 or callable(rate), uses_zprime=g0.uses_zprime,
        t_dependent=g0.t_dependent, convex=g0.convex, coherent=g0.coherent,
        params={"name": "discounted", "r": rate if not callable(rate) else "callable",
                "g0": g0.params},
    )


def custom(fn: Callable, name: str = "custom", *, quad=0.0, certificate: Certificate | None = None,
           uses_y=True, uses_zprime=False, t_dependent=True, convex=False, coherent=False,
           probe_seed: int = 0) -> Generator:
    """Wrap a user evaluation map ``fn(t, s, y, z, zp)``.

    Generators whose z' dependence grows are rejected: the reflected argument
    must enter boundedly.
    """
    cert = certificate or Certificate()
    g = Generator(name, explicit=fn, quad=quad, certificate=cert, uses_y=uses_y,
                  uses_zprime=uses_zprime, t_dependent=t_dependent, convex=convex,
                  coherent=coherent, params={"name": "custom"})
    if uses_zprime:
        rng = np.random.default_rng(probe_seed)
        t = rng.uniform(0, 1, 64)
        s = np.maximum(t, rng.uniform(0, 1, 64))
        y = rng.uniform(-1, 1, 64)
        z = rng.uniform(-1, 1, 64)
        spreads = []
        for scale in (1e1, 1e3, 1e5):
            hi = g(t, s, y, z, scale)
            lo = g(t, s, y, z, -scale)
            base = g(t, s, y, z, 0.0)
            spreads.append(np.max(np.abs(np.stack([hi, lo]) - base)))
        if not np.all(np.isfinite(spreads)) or spreads[-1] > 10.0 * max(spreads[0], 1e-12) + 1e-9:
            raise GeneratorError(f"{name}: dependence on z' must be bounded")
    return g


CATALOG = {
    "zero": zero,
    "linear_y": linear_y,
    "quadratic_half": quadratic_half,
    "entropic": entropic,
    "coherent_abs": coherent_abs,
    "convex_sqrt": convex_sqrt,
    "entropic_weighted": entropic_weighted,
    "zprime_sine": zprime_sine,
}


def catalog(name: str, **params) -> Generator:
    """Construct a named generator. ``discounted`` takes ``r`` and ``g0`` (a spec dict)."""
    if name == "discounted":
        g0 = params.pop("g0")
        if isinstance(g0, dict):
            g0 = from_spec(g0)
        return discounted(params.pop("r", 0.0), g0, **params)
    if name not in CATALOG:
        raise GeneratorError(f"unknown generator {name!r}; expected one of "
                             f"{sorted(CATALOG) + ['discounted']}")
    try:
        return CATALOG[name](**params)
    except TypeError as exc:
        raise GeneratorError(f"bad parameters for {name}: {exc}") from None


def from_spec(spec) -> Generator:
    """``{"name": ..., **params}`` or a list of such terms, summed."""
    if isinstance(spec, (list, tuple)):
        if not spec:
            raise GeneratorError("empty generator sum")
        terms = [from_spec(s) for s in spec]
        out = terms[0]
        for t in terms[1:]:
            out = out + t
        return out
    spec = dict(spec)
    name = spec.pop("name", None)
    return catalog(name, **spec)


# -- certificate checks -------------------------------------------------------

@dataclass(frozen=True)
class SampleSpec:
    count: int = 10_000
    horizon: float = 1.0
    y_range: tuple = (-5.0, 5.0)
    z_range: tuple = (-5.0, 5.0)
    zp_range: tuple = (-5.0, 5.0)
    seed: int = 0


@dataclass
class Violation:
    kind: str
    point: dict
    lhs: float
    rhs: float


@dataclass
class ValidationReport:
    generator: str
    samples: int
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set:
        return {v.kind for v in self.violations}


def _draw(spec: SampleSpec, rng):
    n = spec.count
    t = rng.uniform(0, spec.horizon, n)
    s = t + (spec.horizon - t) * rng.uniform(0, 1, n)
    y = rng.uniform(*spec.y_range, n)
    z = rng.uniform(*spec.z_range, n)
    zp = rng.uniform(*spec.zp_range, n)
    return t, s, y, z, zp


def validate_certificate(g: Generator, spec: SampleSpec = SampleSpec(), rtol: float = 1e-12,
                         max_witnesses: int = 5) -> ValidationReport:
    """Spot-check the declared certificate on random points of the triangle."""
    rng = np.random.default_rng(spec.seed)
    t, s, y, z, zp = _draw(spec, rng)
    y2 = rng.uniform(*spec.y_range, spec.count)
    z2 = rng.uniform(*spec.z_range, spec.count)
    c = g.certificate
    report = ValidationReport(g.name, spec.count)

    def record(kind, mask, lhs, rhs):
        for idx in np.flatnonzero(mask)[:max_witnesses]:
            report.violations.append(Violation(
                kind, {"t": t[idx], "s": s[idx], "y": y[idx], "z": z[idx], "zp": zp[idx],
                       "y2": y2[idx], "z2": z2[idx]}, float(lhs[idx]), float(rhs[idx])))

    def slack(rhs):
        return rtol * (1.0 + np.abs(rhs))

    val = g(t, s, y, z, zp)
    lhs = np.abs(val)
    rhs = c.L * (1 + np.abs(y)) + 0.5 * c.gamma * z * z
    record("growth", lhs > rhs + slack(rhs), lhs, rhs)

    lhs = np.abs(val - g(t, s, y, z2, zp))
    rhs = c.z_lipschitz * (1 + np.abs(z) + np.abs(z2)) * np.abs(z - z2)
    record("lipschitz_z", lhs > rhs + slack(rhs), lhs, rhs)

    lhs = np.abs(val - g(t, s, y2, z, zp))
    rhs = c.L * np.abs(y - y2)
    record("lipschitz_y", lhs > rhs + slack(rhs), lhs, rhs)

    if c.monotone:
        lo, hi = np.minimum(y, y2), np.maximum(y, y2)
        diff = g(t, s, hi, z, zp) - g(t, s, lo, z, zp)
        tol = slack(np.abs(g(t, s, lo, z, zp)))
        record("monotone", diff < -tol, diff, np.zeros_like(diff))
    return report


def continuity_modulus_probe(g: Generator, t_pairs, spec: SampleSpec = SampleSpec(count=2000)) -> float:
    """Worst |g(t,.) - g(t',.)| / (rho(|t-t'|) (1 + |y| + z^2)) over samples."""
    rho = g.certificate.rho
    if rho is None:
        raise GeneratorError(f"{g.name} declares no modulus of continuity")
    rng = np.random.default_rng(spec.seed)
    worst = 0.0
    for t, tp in t_pairs:
        s = rng.uniform(0, spec.horizon, spec.count)
        y = rng.uniform(*spec.y_range, spec.count)
        z = rng.uniform(*spec.z_range, spec.count)
        zp = rng.uniform(*spec.zp_range, spec.count)
        num = np.abs(g(t, s, y, z, zp) - g(tp, s, y, z, zp))
        den = float(rho(abs(t - tp))) * (1 + np.abs(y) + z * z)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(num == 0, 0.0, num / den)
        worst = max(worst, float(np.max(ratio)))
    return worst
