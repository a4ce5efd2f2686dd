import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import stgames.primitives as prim
from helpers import scalar_game, scalar_grid
from stgames.follower_dp import StackelbergOperator, value_iteration
from stgames.game_model import GameSpec, PlayerSpec, swap_players
from stgames.nash_relax import (
    NashOperator,
    classify,
    nash_iterate,
    nash_sweep,
    no_profitable_deviation,
    pure_equilibria,
    solve_bimatrix,
    static_game_solve,
)
from stgames.value_grid import ValueGrid, build_grid, swap_grid, swap_values, sup_norm_diff


def decoupled_game():
    def player(i, kappa):
        return PlayerSpec((0.2, 0.6), [-1.0], [1.0], trigger_cost=prim.ConstantTriggerCost(kappa),
                          running_cost=prim.OwnStateCost(axis=i - 1, player=i, weight=1.0, control_weight=0.1))
    spec = GameSpec(2, [-1.0, -1.0], [1.0, 1.0], prim.DecoupledDrift(decay=0.5, gain=1.0),
                    (player(1, 0.05), player(2, 0.1)), 0.5)
    lv = np.linspace(-1, 1, 3)
    grid = build_grid(spec, [np.linspace(-1, 1, 5)] * 2, [[0.2, 0.4, 0.6]] * 2, [[lv], [lv]])
    return spec, grid


def symmetric_game():
    drift = prim.LinearDrift([[-1.0]], [[0.5]], [[0.5]])
    c1 = prim.QuadraticCost([[1.0]], [[0.1]], [[0.0]])
    c2 = prim.QuadraticCost([[1.0]], [[0.0]], [[0.1]])
    return scalar_game(drift=drift, cost1=c1, cost2=c2, kappa1=0.05, kappa2=0.05)


def separable_values(grid, own, seed):
    """Random table that is a sum of a function of the ``own`` axes and one of the rest.

    Corner bimatrices built from such tables have dominant strategies, so
    their pure equilibrium is unique.
    """
    rng = np.random.default_rng(seed)
    shape = grid.shape
    mask = np.zeros(len(shape), dtype=bool)
    mask[list(own)] = True
    f = rng.uniform(0, 1, [n if m else 1 for n, m in zip(shape, mask)])
    g = rng.uniform(0, 1, [1 if m else n for n, m in zip(shape, mask)])
    return ValueGrid(grid, (f + g).ravel())


# ---------------------------------------------------------------- bimatrix


def test_constant_bimatrix_picks_first_pair():
    res = solve_bimatrix(np.ones((3, 4)), np.full((3, 4), 2.0))
    assert (res.i, res.j, res.pure, res.n_equilibria) == (0, 0, True, 12)


def test_dominant_strategies():
    A = np.array([[3.0, 3.0, 3.0], [1.0, 0.5, 2.0], [4.0, 5.0, 6.0]])
    B = np.array([[2.0, 0.0, 1.0], [2.0, 0.0, 1.0], [2.0, 0.0, 1.0]])
    res = solve_bimatrix(A, B)
    assert (res.i, res.j) == (1, 1) and res.values == (0.5, 0.0)


def test_matching_pennies_falls_back_to_a_cycle():
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    res = solve_bimatrix(A, 1.0 - A)
    assert not res.pure and res.n_equilibria == 0 and len(res.cycle) >= 2


def brute_force_equilibria(A, B):
    out = set()
    for i, j in itertools.product(range(A.shape[0]), range(A.shape[1])):
        if all(A[i, j] <= A[k, j] for k in range(A.shape[0])) and all(B[i, j] <= B[i, l] for l in range(A.shape[1])):
            out.add((i, j))
    return out


@pytest.mark.parametrize("seed", range(20))
def test_equilibrium_set_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    A, B = rng.integers(0, 4, (3, 3)).astype(float), rng.integers(0, 4, (3, 3)).astype(float)
    got = {tuple(ij) for ij in np.argwhere(pure_equilibria(A, B))}
    assert got == brute_force_equilibria(A, B)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5), st.integers(2, 5))
def test_reported_pure_equilibrium_has_no_profitable_deviation(seed, m, n):
    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(m, n)), rng.normal(size=(m, n))
    res = solve_bimatrix(A, B)
    assert res.pure == no_profitable_deviation(A, B, res.i, res.j) or not res.pure
    if res.pure:
        assert no_profitable_deviation(A, B, res.i, res.j)


# ---------------------------------------------------------------- sweeps


def test_zero_game_stays_zero():
    spec = scalar_game()
    grid = scalar_grid(spec)
    z = ValueGrid.constant(grid, 0.0)
    w1, w2 = nash_sweep(spec, z, z)
    assert np.all(w1.values == 0) and np.all(w2.values == 0)
    v1, v2, rep = nash_iterate(spec, grid, tol=1e-9)
    assert rep.iterations == 1 and rep.classification == "converged"


def test_decoupled_sweep_equals_single_player_sweep():
    spec, grid = decoupled_game()
    v1 = separable_values(grid, (0, 2, 3), 0).values
    v2 = separable_values(grid, (1, 4, 5), 1).values
    op = NashOperator(spec, grid)
    w1, w2 = op.sweep(v1, v2)
    pi1, pi2 = op.policies(v1, v2)
    np.testing.assert_allclose(w2, StackelbergOperator(spec, grid, pi1).sweep(v2), atol=1e-12)
    sgrid = swap_grid(grid)
    w1_single = StackelbergOperator(swap_players(spec), sgrid, pi2.swapped()).sweep(swap_values(ValueGrid(grid, v1)).values)
    np.testing.assert_allclose(w1, swap_values(ValueGrid(sgrid, w1_single)).values, atol=1e-12)


def test_decoupled_iteration_matches_single_player_fixed_points():
    spec, grid = decoupled_game()
    tol = 1e-8
    v1, v2, rep = nash_iterate(spec, grid, damping=0.5, tol=tol)
    assert rep.classification == "converged"
    pi1, pi2 = NashOperator(spec, grid).policies(v1.values, v2.values)
    f2, _, _ = value_iteration(spec, pi1, grid, tol=1e-10)
    sgrid = swap_grid(grid)
    f1, _, _ = value_iteration(swap_players(spec), pi2.swapped(), sgrid, tol=1e-10)
    # a residual r of a two-step contraction bounds the distance to its fixed point by 2r / (1 - beta)
    slack = 2 * tol / (1 - spec.contraction_modulus)
    assert sup_norm_diff(v2, f2) <= slack
    assert sup_norm_diff(v1, swap_values(f1)) <= slack


def test_symmetric_inputs_give_symmetric_outputs():
    spec = symmetric_game()
    grid = scalar_grid(spec)
    v1 = separable_values(grid, (0, 1, 2), 4)
    v2 = swap_values(v1)
    w1, w2 = nash_sweep(spec, v1, v2)
    np.testing.assert_allclose(swap_values(w1).values, w2.values, atol=1e-12)


def test_iterates_from_zero_stay_in_the_value_bound():
    spec = symmetric_game()
    grid = scalar_grid(spec, x_nodes=5)
    r_max = 1.0 + 0.1          # |x|^2 + 0.1 |u|^2 on the unit boxes
    R = r_max / spec.discount + 0.05 / (1 - spec.contraction_modulus)
    op = NashOperator(spec, grid)
    v1 = v2 = np.zeros(grid.size)
    for _ in range(60):
        v1, v2 = op.sweep(v1, v2)
        assert np.all(np.abs(v1) <= R) and np.all(np.abs(v2) <= R)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_one_sweep_inflates_the_bound_by_at_most_one_trigger_cost(seed):
    spec = symmetric_game()
    grid = scalar_grid(spec, x_nodes=5)
    R = 1.1 / spec.discount + 0.05 / (1 - spec.contraction_modulus)
    rng = np.random.default_rng(seed)
    v1, v2 = (ValueGrid(grid, rng.uniform(-R, R, grid.size)) for _ in range(2))
    w1, w2 = nash_sweep(spec, v1, v2)
    assert np.all(np.abs(w1.values) <= R + 0.05 + 1e-12) and np.all(np.abs(w2.values) <= R + 0.05 + 1e-12)


def test_swapped_table_policy():
    spec, grid = decoupled_game()
    pi1, pi2 = NashOperator(spec, grid).policies(*(separable_values(grid, own, s).values
                                                   for own, s in [((0, 2, 3), 0), ((1, 4, 5), 1)]))
    sw = pi2.swapped()
    assert sw.owner == 1 and sw.swapped().owner == 2
    np.testing.assert_array_equal(sw.swapped().dwell, pi2.dwell)
    S = grid.nodes()[::7]
    S = S[S[:, grid.layout.sigma2] == 0]
    perm = [0, 1, 4, 5, 2, 3]
    d, p = pi2.decide(S)
    ds, ps = sw.decide(S[:, perm])
    np.testing.assert_array_equal(d, ds)
    np.testing.assert_array_equal(p, ps)


def test_corner_choices_admit_no_profitable_deviation():
    spec = symmetric_game()
    grid = scalar_grid(spec)
    rng = np.random.default_rng(5)
    v1, v2 = (ValueGrid(grid, rng.uniform(0, 1, grid.size)) for _ in range(2))
    for x in (-1.0, 0.0, 0.5):
        for th1, th2 in [(0.0, 0.0), (1.0, -1.0)]:
            chi = [x, 0.0, th1, 0.0, th2]
            a1, a2, vals, res = static_game_solve(spec, v1, v2, chi)
            if not res.pure:
                continue
            (d1, P1), (d2, P2) = grid.candidates(1), grid.candidates(2)
            A = np.array([[0.05 + v1([x, d1[a], P1[a, 0], d2[b], P2[b, 0]]) for b in range(d2.size)] for a in range(d1.size)])
            B = np.array([[0.05 + v2([x, d1[a], P1[a, 0], d2[b], P2[b, 0]]) for b in range(d2.size)] for a in range(d1.size)])
            assert no_profitable_deviation(A, B, res.i, res.j)
            assert vals == pytest.approx((A[res.i, res.j], B[res.i, res.j]))


def test_damping_comparison_is_reported():
    spec = symmetric_game()
    grid = scalar_grid(spec, x_nodes=5)
    reports = {a: nash_iterate(spec, grid, damping=a, tol=1e-8, max_iters=300)[2] for a in (0.5, 1.0)}
    for a, rep in reports.items():
        assert rep.damping == a and rep.iterations == len(rep.residuals) > 0
        assert rep.classification in ("converged", "oscillating", "diverging")


def test_damping_outside_unit_interval_is_rejected():
    spec = scalar_game()
    with pytest.raises(ValueError):
        nash_iterate(spec, scalar_grid(spec), damping=0.0)


@pytest.mark.parametrize("res,expected", [
    ([1.0, 0.1, 1e-9], "converged"),
    ([1.0, 0.5, 1.0, 0.5, 1.0, 0.5], "oscillating"),
    ([1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0], "diverging"),
    ([1.0, float("inf")], "diverging"),
])
def test_classification(res, expected):
    assert classify(res, 1e-6) == expected


def test_report_json(tmp_path):
    spec = scalar_game()
    _, _, rep = nash_iterate(spec, scalar_grid(spec), tol=1e-9)
    assert '"classification": "converged"' in rep.save(tmp_path / "n.json").read_text()
