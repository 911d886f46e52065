import numpy as np
import pytest
from hypothesis import given, strategies as st

from qbsvie.grid import (GridError, TimeGrid, is_nested, make_uniform_grid, refine, square_points,
                         triangle_points)


def test_uniform_points():
    assert make_uniform_grid(1.0, 4).points.tolist() == [0, 0.25, 0.5, 0.75, 1.0]
    assert make_uniform_grid(1.0, 1).points.tolist() == [0, 1.0]
    g = make_uniform_grid(2.0, 8)
    assert g.dt == 0.25 and len(g.points) == 9


@pytest.mark.parametrize("horizon, steps", [(0.0, 4), (-1.0, 4), (1.0, 0), (float("inf"), 2), (1.0, 2.5)])
def test_rejects_bad_input(horizon, steps):
    with pytest.raises(GridError):
        make_uniform_grid(horizon, steps)


@given(st.floats(0.01, 100), st.integers(1, 500))
def test_points_exact(horizon, steps):
    g = TimeGrid(horizon, steps)
    p = g.points
    assert p[0] == 0 and p[-1] == horizon
    assert np.all(np.diff(p) > 0)
    assert all(p[k] == k * horizon / steps for k in range(steps))


def test_triangle_small():
    assert [tuple(p) for p in triangle_points(TimeGrid(1.0, 1))] == [(0, 0), (0, 1), (1, 1)]
    assert len(triangle_points(TimeGrid(1.0, 2))) == 6
    assert len(triangle_points(TimeGrid(1.0, 4))) == 15


@pytest.mark.parametrize("n", range(1, 65))
def test_triangle_cardinality(n):
    pts = triangle_points(TimeGrid(1.0, n))
    assert len(pts) == (n + 1) * (n + 2) // 2
    assert pts == sorted(pts)
    assert all(p.i <= p.j for p in pts)
    assert len(square_points(TimeGrid(1.0, n))) == (n + 1) ** 2


def test_refine():
    g = TimeGrid(1.0, 4)
    assert refine(g).steps == 8 and is_nested(g, refine(g))
    assert refine(TimeGrid(1.0, 1)).steps == 2
    assert refine(refine(TimeGrid(1.0, 3))).steps == 12
    with pytest.raises(GridError):
        refine(TimeGrid(1.0, 8), max_steps=10)


@given(st.floats(0.1, 10), st.integers(1, 200))
def test_refine_nested(horizon, steps):
    g = TimeGrid(horizon, steps)
    fine = refine(g)
    assert set(g.points.tolist()) <= set(fine.points.tolist())


def test_index_of():
    g = TimeGrid(1.0, 4)
    assert g.index_of(0.75) == 3
    with pytest.raises(GridError):
        g.index_of(0.3)
