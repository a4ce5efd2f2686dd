"""Damped Nash relaxation on a decoupled and a coupled scalar game.

Prints the classification and sweep count for several damping factors.

    python3 scripts/nash_damping.py
"""

import argparse

import numpy as np

import stgames.primitives as prim
from stgames.game_model import GameSpec, PlayerSpec
from stgames.nash_relax import nash_iterate
from stgames.value_grid import build_grid


def decoupled():
    def player(i, kappa):
        return PlayerSpec((0.2, 0.6), [-1.0], [1.0], trigger_cost=prim.ConstantTriggerCost(kappa),
                          running_cost=prim.OwnStateCost(axis=i - 1, player=i, weight=1.0, control_weight=0.1))
    spec = GameSpec(2, [-1.0, -1.0], [1.0, 1.0], prim.DecoupledDrift(decay=0.5, gain=1.0),
                    (player(1, 0.05), player(2, 0.1)), 0.5)
    lv = np.linspace(-1, 1, 3)
    return spec, build_grid(spec, [np.linspace(-1, 1, 9)] * 2, [[0.2, 0.4, 0.6]] * 2, [[lv], [lv]])


def coupled():
    cost = lambda r1, r2: prim.QuadraticCost([[1.0]], [[r1]], [[r2]])
    p1 = PlayerSpec((0.2, 0.6), [-1.0], [1.0], running_cost=cost(0.1, 0.0), trigger_cost=prim.ConstantTriggerCost(0.05))
    p2 = PlayerSpec((0.2, 0.6), [-1.0], [1.0], running_cost=cost(0.0, 0.1), trigger_cost=prim.ConstantTriggerCost(0.05))
    spec = GameSpec(1, [-1.0], [1.0], prim.LinearDrift([[-1.0]], [[0.5]], [[0.5]]), (p1, p2), 0.5)
    lv = np.linspace(-1, 1, 3)
    return spec, build_grid(spec, [np.linspace(-1, 1, 9)], [[0.2, 0.4, 0.6]] * 2, [[lv], [lv]])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--damping", type=float, nargs="+", default=[0.25, 0.5, 1.0])
    ap.add_argument("--tol", type=float, default=1e-8)
    ap.add_argument("--max-iters", type=int, default=2000)
    args = ap.parse_args()
    for name, (spec, grid) in {"decoupled": decoupled(), "coupled": coupled()}.items():
        for a in args.damping:
            _, _, rep = nash_iterate(spec, grid, damping=a, tol=args.tol, max_iters=args.max_iters)
            print(f"{name:9s} damping {a:4.2f}: {rep.classification:11s} after {rep.iterations:4d} sweeps, "
                  f"last residual {rep.residuals[-1]:.2e}")


if __name__ == "__main__":
    main()
