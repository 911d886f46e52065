import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qbsvie import position as P
from qbsvie.driver import (DriverError, DriverSpec, build_driver, conditional_expectation,
                           conditional_increment_projection, evaluate_position,
                           representation_integrands, stochastic_sum)
from qbsvie.grid import TimeGrid


def lattice(n, T=1.0):
    return build_driver(TimeGrid(T, n), "lattice")


def tree(n, T=1.0):
    return build_driver(TimeGrid(T, n), "path-tree")


def test_node_counts():
    d = lattice(2)
    assert sum(d.n_nodes(k) for k in range(3)) == 6
    t = tree(3)
    assert t.n_nodes(3) == 8
    assert np.allclose(t.probs(3), 1 / 8)


def test_tree_cap():
    with pytest.raises(DriverError):
        build_driver(TimeGrid(1.0, 23), "path-tree")
    with pytest.raises(DriverError):
        build_driver(TimeGrid(1.0, 5), DriverSpec("path-tree", tree_cap=4))


def test_mc_reproducible():
    a = build_driver(TimeGrid(1.0, 10), DriverSpec("monte-carlo", paths=4096, seed=7))
    b = build_driver(TimeGrid(1.0, 10), DriverSpec("monte-carlo", paths=4096, seed=7))
    assert np.array_equal(a.W, b.W)
    with pytest.raises(DriverError):
        build_driver(TimeGrid(1.0, 4), DriverSpec("monte-carlo", paths=1))


def test_lattice_symmetry_and_moments():
    d = lattice(6)
    for k in range(7):
        assert np.array_equal(d.w(k), -d.w(k)[::-1])
    for k in range(6):
        w1 = d.w(k + 1)
        inc = w1[None, :] - d.w(k)[:, None]
        up = inc[np.arange(k + 1), np.arange(k + 1) + 1]
        down = inc[np.arange(k + 1), np.arange(k + 1)]
        assert np.allclose(0.5 * (up + down), 0, atol=1e-15)
        assert np.allclose(0.5 * (up ** 2 + down ** 2), d.dt, rtol=1e-14)


@pytest.mark.parametrize("make", [lattice, tree])
def test_constants_and_martingale(make):
    d = make(5)
    assert np.allclose(conditional_expectation(d, np.full(d.n_nodes(5), 3.0), 5, 2), 3.0)
    assert abs(conditional_expectation(d, d.w(5), 5, 0)[0]) < 1e-15
    assert np.allclose(conditional_increment_projection(d, np.full(d.n_nodes(3), 2.0), 2), 0.0)
    assert np.allclose(conditional_increment_projection(d, d.w(3), 2), 1.0)


def test_second_moment_tree():
    n = 6
    d = tree(n)
    for k in range(n + 1):
        got = conditional_expectation(d, d.w(n) ** 2, n, k)
        assert np.allclose(got, d.w(k) ** 2 + (1.0 - d.grid.time(k)), atol=1e-13)


def test_square_projection_lattice():
    d = lattice(8)
    for k in range(8):
        assert np.allclose(conditional_increment_projection(d, d.w(k + 1) ** 2, k), 2 * d.w(k), atol=1e-13)


@pytest.mark.parametrize("make", [lattice, tree])
def test_tower(make):
    d = make(7)
    f = np.sin(3 * d.w(7)) + d.w(7) ** 3
    direct = conditional_expectation(d, f, 7, 1)
    chained = conditional_expectation(d, conditional_expectation(d, f, 7, 4), 4, 1)
    assert np.allclose(direct, chained, atol=1e-15, rtol=0)


def test_ito_isometry_and_reconstruction():
    n = 8
    d = tree(n)
    rng = np.random.default_rng(3)
    f = rng.normal(size=d.n_nodes(n))
    zs = representation_integrands(d, f, n)
    recon = d.mean(f, n) + stochastic_sum(d, zs, n)
    assert np.max(np.abs(recon - f)) < 1e-13
    lhs = d.mean(stochastic_sum(d, zs, n) ** 2, n)
    rhs = sum(d.mean(z ** 2, j) for j, z in enumerate(zs)) * d.dt
    assert abs(lhs - rhs) < 1e-12


def test_positions():
    d = lattice(4)
    assert np.allclose(evaluate_position(d, P.constant(2.5), 3), 2.5)
    m = np.arange(5)
    assert np.allclose(evaluate_position(d, P.linear_terminal(), 2), 0.5 * (2 * m - 4) * 0.5)
    with pytest.raises(DriverError):
        evaluate_position(d, P.running_max(), 0)
    t = tree(2)
    # leaves ordered down-down, down-up, up-down, up-up
    assert np.allclose(evaluate_position(t, P.running_max(), 0),
                       np.array([0.0, 0.0, 1.0, 2.0]) * math.sqrt(0.5))


def test_rejects_wrong_shape():
    d = lattice(3)
    with pytest.raises(DriverError):
        conditional_expectation(d, np.zeros(3), 3, 1)
    with pytest.raises(DriverError):
        conditional_expectation(d, np.zeros(4), 3, 4)


def test_mc_regression_in_span():
    d = build_driver(TimeGrid(1.0, 5), DriverSpec("monte-carlo", paths=2000, seed=1, basis_degree=4))
    f = d.w(3) ** 3 - 2 * d.w(3)
    assert np.max(np.abs(conditional_expectation(d, f, 3, 3) - f)) == 0
    assert np.max(np.abs(d.regress(f, 3) - f)) < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2 ** 31))
def test_tree_reconstruction_property(n, seed):
    d = tree(n)
    f = np.random.default_rng(seed).uniform(-1, 1, d.n_nodes(n))
    zs = representation_integrands(d, f, n)
    assert np.max(np.abs(d.mean(f, n) + stochastic_sum(d, zs, n) - f)) < 1e-12
