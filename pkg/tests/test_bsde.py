import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qbsvie import generator as G, position as P
from qbsvie.bsde import (BsdeSolution, SolverError, StepConfig, StepStats, alpha_bound,
                         alpha_ceiling_check, bmo_budget, bmo_norm_estimate, briand_hu_bound_check,
                         c_tilde_for, solve_bsde, solve_bsde_family)
from qbsvie.driver import build_driver
from qbsvie.grid import TimeGrid

from oracles import lattice_log_mgf

# 4 ln cosh(1/2), frozen
Y0_N4 = 0.48045802783


def lattice(n, T=1.0):
    return build_driver(TimeGrid(T, n), "lattice")


def test_zero_generator_constant():
    d = lattice(10)
    sol = solve_bsde(d, G.zero(), np.full(11, 2.0))
    assert all(np.all(y == 2.0) for y in sol.Y)
    assert all(np.all(z == 0.0) for z in sol.Z)


def test_terminal_exact():
    d = lattice(5)
    xi = np.sin(d.terminal_w())
    sol = solve_bsde(d, G.linear_y(0.5), xi)
    assert np.array_equal(sol.Y[5], xi)


def test_quadratic_lattice_exact():
    d = lattice(4)
    sol = solve_bsde(d, G.quadratic_half(), d.terminal_w())
    assert abs(sol.y0 - Y0_N4) < 1e-11
    assert abs(sol.y0 - 4 * math.log(math.cosh(0.5))) < 1e-15
    d = lattice(100)
    sol = solve_bsde(d, G.quadratic_half(), d.terminal_w())
    assert abs(sol.y0 - 100 * math.log(math.cosh(0.1))) < 1e-12
    assert abs(sol.y0 - 0.5) < 3e-3


@pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0])
def test_exponential_transform_nodewise(gamma):
    n = 30
    d = lattice(n)
    xi = np.tanh(d.terminal_w()) + d.terminal_w()
    sol = solve_bsde(d, G.entropic(gamma), xi)
    f = np.exp(xi / gamma)
    for k in range(n, -1, -1):
        assert np.max(np.abs(sol.Y[k] - gamma * np.log(f))) < 1e-12
        if k:
            f = 0.5 * (f[1:] + f[:-1])


def test_squared_terminal():
    d = lattice(12)
    sol = solve_bsde(d, G.zero(), d.terminal_w() ** 2)
    for k in range(13):
        assert np.allclose(sol.Y[k], d.w(k) ** 2 + 1 - d.grid.time(k), atol=1e-13)


def test_one_step_residual():
    d = lattice(40)
    g = G.linear_y(0.8) + G.coherent_abs(1.0)
    sol = solve_bsde(d, g, np.cos(d.terminal_w()))
    for k in range(40):
        ybar = 0.5 * sol.Y[k] + 0.5 * d.expect(sol.Y[k + 1], k)
        res = sol.Y[k] - d.expect(sol.Y[k + 1], k) - d.dt * g.explicit(0, d.grid.time(k), ybar, sol.Z[k], 0)
        assert np.max(np.abs(res)) < 1e-12
    assert sol.stats.inner_iterations > 0 and sol.stats.clip_count == 0


def test_step_size_rejected():
    d = lattice(2)
    with pytest.raises(SolverError):
        solve_bsde(d, G.linear_y(3.0), np.zeros(3))


def test_nonconvergence_reports_node():
    d = lattice(4)
    with pytest.raises(SolverError) as exc:
        solve_bsde(d, G.linear_y(3.9), np.ones(5), cfg=StepConfig(inner_max_iter=2))
    assert "step" in exc.value.info


def test_z_clip_reported():
    d = lattice(10)
    sol = solve_bsde(d, G.quadratic_half(), 3 * d.terminal_w(), cfg=StepConfig(z_clip=1.0))
    assert sol.stats.clip_count > 0


def test_family_examples():
    d = lattice(6)
    fam = solve_bsde_family(d, G.zero(), P.constant(1.5))
    assert all(np.all(e == 1.5) for e in fam.eta)
    fam = solve_bsde_family(d, G.linear_y(0.7), P.constant(1.0), frozen=[np.zeros(d.n_nodes(k)) for k in range(7)])
    assert all(np.all(e == 1.0) for e in fam.eta)


def test_family_closed_form():
    n = 100
    d = lattice(n)
    fam = solve_bsde_family(d, G.quadratic_half(), P.linear_terminal())
    ref = lattice_log_mgf(n, 1.0, lambda t: t)
    assert max(np.max(np.abs(y - r)) for y, r in zip(fam.Y, ref)) < 1e-10
    i = 50
    cont = 0.5 * d.w(i) + 0.125 * 0.5
    assert np.max(np.abs(fam.Y[i] - cont)) < 5e-3


def test_diagonal_consistency():
    d = lattice(20)
    g = G.linear_y(0.4) + G.quadratic_half()
    xi = np.tanh(d.terminal_w())
    fam = solve_bsde_family(d, g, np.tile(xi, (21, 1)))
    sol = solve_bsde(d, g, xi)
    assert all(np.array_equal(a, b) for a, b in zip(fam.Y, sol.Y))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0, 0.5))
def test_bsde_comparison(seed, bump):
    d = lattice(15)
    rng = np.random.default_rng(seed)
    xi1 = np.tanh(rng.normal(size=16))
    xi2 = xi1 + rng.uniform(0, 1, 16)
    y1 = solve_bsde(d, G.linear_y(0.3) + G.quadratic_half(), xi1).Y
    y2 = solve_bsde(d, G.linear_y(0.3) + G.quadratic_half() + G.coherent_abs(bump), xi2).Y
    assert all(np.all(a <= b + 1e-12) for a, b in zip(y1, y2))


def test_briand_hu_examples():
    d = lattice(4)
    rep = briand_hu_bound_check(d, solve_bsde(d, G.zero(), np.full(5, -2.0)))
    assert rep.holds and abs(rep.worst_margin) < 1e-15
    sol = solve_bsde(d, G.quadratic_half(), d.terminal_w())
    m = np.arange(5)
    rhs = sum(math.comb(4, k) / 16 * math.exp(abs((2 * k - 4) * 0.5)) for k in m)
    assert math.exp(Y0_N4) <= rhs
    rep = briand_hu_bound_check(d, sol)
    assert rep.holds and rep.witness is not None
    d = lattice(20)
    assert briand_hu_bound_check(d, solve_bsde(d, G.entropic(2.0), -d.terminal_w())).holds
    d = lattice(30)
    assert briand_hu_bound_check(d, solve_bsde(d, G.linear_y(0.5) + G.quadratic_half(), np.sin(3 * d.terminal_w()))).holds


def test_briand_hu_detects_violation():
    d = lattice(10)
    sol = solve_bsde(d, G.quadratic_half(), d.terminal_w())
    sol.Y[0] = sol.Y[0] + 1.0
    assert not briand_hu_bound_check(d, sol).holds


def test_bmo():
    d = lattice(8)
    sol = solve_bsde(d, G.zero(), np.ones(9))
    assert bmo_norm_estimate(d, sol).value == 0
    ones = BsdeSolution([np.zeros(d.n_nodes(k)) for k in range(9)], [np.ones(d.n_nodes(k)) for k in range(8)],
                        np.zeros(9), G.zero(), 0.0, StepStats())
    est = bmo_norm_estimate(d, ones)
    assert abs(est.value - 1.0) < 1e-14
    assert all(a >= b for a, b in zip(est.profile, est.profile[1:]))
    d = lattice(100)
    sol = solve_bsde(d, G.quadratic_half(), d.terminal_w())
    assert bmo_norm_estimate(d, sol).value <= bmo_budget(1.0, float(np.max(np.abs(d.terminal_w()))))


def test_alpha():
    a = alpha_bound(1.0, 1.0)
    assert a(1.0) == 1.0
    assert abs(a(0.0) - 10.5835) < 1e-4
    with pytest.raises(ValueError):
        alpha_bound(0.0, 1.0)
    d = lattice(30)
    sol = solve_bsde(d, G.quadratic_half(), np.tanh(d.terminal_w()))
    assert alpha_ceiling_check(d, sol.Y, c_tilde_for(1.0, 0.0)).holds
