"""Monte Carlo cost of the extracted follower policy vs the interpolated value.

Solves the desk game on position/velocity grids of 11, 21 and 41 nodes
and reports the per-grid gap together with the Richardson estimate
2 max |V_h - V_{h/2}| at 20 random initial states.

    python3 scripts/rollout_consistency.py
"""

import argparse

import numpy as np

from stgames.follower_dp import value_iteration
from stgames.lq_pursuit import LQPursuitConfig, build_game, build_lq_grid
from stgames.pdmp_sim import monte_carlo_costs
from stgames.policies import ConstantPolicy
from stgames.value_grid import interpolate

DWELLS = [0.1, 0.55, 1.0]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, nargs="+", default=[11, 21, 41])
    ap.add_argument("--states", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    pi1 = ConstantPolicy(1, 0.55, [0.0])
    cfgs = [LQPursuitConfig(leader="evader", dwell_candidates_pursuer=DWELLS, dwell_candidates_evader=DWELLS,
                            position_nodes=n, velocity_nodes=n) for n in args.nodes]
    spec = build_game(cfgs[0])
    lay = spec.layout
    rng = np.random.default_rng(args.seed)
    S = args.states
    chi = lay.pack(rng.uniform(-1, 1, (S, 2)), rng.choice(DWELLS, S), rng.choice([-1.0, 0.0, 1.0], S)[:, None],
                   rng.choice(DWELLS, S), rng.choice([-1.0, 0.0, 1.0], S)[:, None])
    vals = []
    for n, cfg in zip(args.nodes, cfgs):
        v, pol, rep = value_iteration(spec, pi1, build_lq_grid(cfg, spec), tol=1e-8)
        V = interpolate(v, chi)
        mean, _ = monte_carlo_costs(spec, chi, pi1, pol, 60.0, 1, args.seed)
        vals.append(V)
        print(f"{n:3d} nodes: {rep.iterations} sweeps, max |rollout - value| {np.max(np.abs(mean[:, 1] - V)):.4f}")
    for (n, a), b in zip(zip(args.nodes, vals), vals[1:]):
        print(f"Richardson bound at {n} nodes: {2 * np.max(np.abs(a - b)):.4f}")


if __name__ == "__main__":
    main()
