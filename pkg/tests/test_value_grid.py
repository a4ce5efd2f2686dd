import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.interpolate import RegularGridInterpolator

from helpers import scalar_game, scalar_grid
from stgames.game_model import AugmentedState, StateLayout
from stgames.value_grid import (
    GridError,
    GridSpec,
    ValueGrid,
    export_slice_csv,
    interpolate,
    interpolation_gradient_weights,
    interpolation_matrix,
    load_value_grid,
    save_value_grid,
    sup_norm_diff,
    swap_grid,
    swap_values,
)

SPEC = scalar_game()
GRID = scalar_grid(SPEC)


def random_value(seed=0):
    return ValueGrid(GRID, np.random.default_rng(seed).normal(size=GRID.size))


def random_points(n, seed=1):
    rng = np.random.default_rng(seed)
    return rng.uniform(GRID.lower, GRID.upper, size=(n, GRID.layout.dim))


def test_interpolation_reproduces_node_values():
    v = random_value()
    np.testing.assert_allclose(interpolate(v, GRID.nodes()), v.values, atol=1e-14)


def test_constant_table_interpolates_to_the_constant():
    v = ValueGrid.constant(GRID, 3.7)
    np.testing.assert_allclose(interpolate(v, random_points(50)), 3.7, rtol=1e-14)


def test_one_dimensional_midpoint_example():
    lay = StateLayout(1, 1, 1)
    g = GridSpec(lay, (np.array([0.0, 1.0]),) + (np.array([0.0, 1.0]),) * 4,
                 (np.array([1.0]), np.array([1.0])), (np.zeros((1, 1)), np.zeros((1, 1))))
    v = ValueGrid.from_function(g, lambda P: P[:, 0])
    assert interpolate(v, [0.25, 0.0, 0.0, 0.0, 0.0]) == pytest.approx(0.25, abs=1e-15)


def test_interpolate_accepts_augmented_states():
    v = random_value()
    chi = AugmentedState([0.13], 0.3, [0.2], 0.5, [-0.7])
    assert interpolate(v, chi) == pytest.approx(interpolate(v, chi.to_vector()), abs=0)


def test_matches_independent_multilinear_interpolator():
    v = random_value(4)
    oracle = RegularGridInterpolator(GRID.axes, v.table, method="linear")
    P = random_points(200, seed=9)
    np.testing.assert_allclose(interpolate(v, P), oracle(P), atol=1e-12)


def test_out_of_box_queries_are_clamped():
    v = random_value()
    P = random_points(10)
    far = P.copy()
    far[:, 0] = 5.0
    edge = P.copy()
    edge[:, 0] = GRID.upper[0]
    np.testing.assert_allclose(interpolate(v, far), interpolate(v, edge))


def test_interpolation_matrix_agrees_with_interpolate():
    v = random_value(2)
    P = random_points(30)
    np.testing.assert_allclose(interpolation_matrix(GRID, P) @ v.values, interpolate(v, P), atol=1e-13)


def test_gradient_weights_match_finite_differences():
    v = random_value(3)
    P = random_points(20, seed=5)
    idx, w = interpolation_gradient_weights(GRID, P, wrt=[0, 2])
    grad = np.stack([np.sum(wk * v.values[idx], axis=1) for wk in w], axis=1)
    h = 1e-7
    for j, axis in enumerate([0, 2]):
        Pp, Pm = P.copy(), P.copy()
        Pp[:, axis] += h
        Pm[:, axis] -= h
        fd = (interpolate(v, Pp) - interpolate(v, Pm)) / (2 * h)
        np.testing.assert_allclose(grad[:, j], fd, atol=1e-5)


def test_sup_norm_examples():
    a = ValueGrid.constant(GRID, 1.0)
    b = ValueGrid(GRID, np.where(np.arange(GRID.size) == 7, 3.5, 1.0))
    assert sup_norm_diff(a, b) == 2.5
    assert sup_norm_diff(a, a) == 0.0


def test_sup_norm_refuses_different_grids():
    other = scalar_grid(SPEC, x_nodes=5)
    with pytest.raises(GridError):
        sup_norm_diff(ValueGrid.constant(GRID, 0.0), ValueGrid.constant(other, 0.0))


def test_non_finite_values_are_rejected():
    vals = np.zeros(GRID.size)
    vals[3] = np.nan
    with pytest.raises(GridError):
        ValueGrid(GRID, vals)


def test_grid_validation():
    with pytest.raises(GridError, match="budget"):
        GridSpec(GRID.layout, GRID.axes, GRID.dwell_candidates, GRID.param_candidates, node_budget=100)
    with pytest.raises(GridError, match="increasing"):
        GridSpec(GRID.layout, (np.array([0.0, 0.0]),) + GRID.axes[1:], GRID.dwell_candidates, GRID.param_candidates)


values = arrays(np.float64, GRID.size, elements=st.floats(-10, 10))


@settings(max_examples=30, deadline=None)
@given(values, st.floats(0, 5))
def test_interpolation_is_monotone(u, bump):
    P = random_points(40)
    lo, hi = ValueGrid(GRID, u), ValueGrid(GRID, u + bump)
    assert np.all(interpolate(hi, P) >= interpolate(lo, P) - 1e-12)


@settings(max_examples=30, deadline=None)
@given(values, values)
def test_interpolation_is_non_expansive(u, w):
    P = random_points(40)
    a, b = ValueGrid(GRID, u), ValueGrid(GRID, w)
    assert np.max(np.abs(interpolate(a, P) - interpolate(b, P))) <= sup_norm_diff(a, b) + 1e-12


def test_save_load_round_trip(tmp_path):
    v = random_value(7)
    paths = save_value_grid(v, tmp_path / "val", extra={"note": 1})
    assert [p.suffix for p in paths] == [".bin", ".json"]
    back = load_value_grid(tmp_path / "val")
    assert back.grid.same_as(GRID)
    assert np.array_equal(back.values, v.values)
    assert (tmp_path / "val.bin").stat().st_size == 8 * GRID.size


def test_swap_is_an_involution():
    v = random_value(8)
    twice = swap_values(swap_values(v))
    assert twice.grid.same_as(GRID) and np.array_equal(twice.values, v.values)


def test_swap_exchanges_player_coordinates():
    v = random_value(9)
    sw = swap_values(v)
    P = random_points(15)
    perm = [0, 3, 4, 1, 2]
    np.testing.assert_allclose(interpolate(sw, P[:, perm]), interpolate(v, P), atol=1e-13)
    assert np.array_equal(swap_grid(GRID).dwell_candidates[0], GRID.dwell_candidates[1])


def test_slice_export(tmp_path):
    v = random_value()
    path = export_slice_csv(v, tmp_path / "s.csv", free=(0, 3), fixed={1: 0.2})
    rows = path.read_text().splitlines()
    assert rows[0] == "x0,sigma2,value"
    assert len(rows) == 1 + GRID.shape[0] * GRID.shape[3]
