"""Small games shared by the test modules."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

import stgames.primitives as prim
from stgames.game_model import GameSpec, PlayerSpec
from stgames.lq_pursuit import LQPursuitConfig, build_game, build_lq_grid
from stgames.value_grid import build_grid

DESK_DWELLS = [0.1, 0.55, 1.0]


def desk_config(**kw) -> LQPursuitConfig:
    base = dict(dwell_candidates_pursuer=DESK_DWELLS, dwell_candidates_evader=DESK_DWELLS)
    base.update(kw)
    return LQPursuitConfig(**base)


@lru_cache(maxsize=None)
def desk(leader: str = "pursuer", nodes: int = 11):
    cfg = desk_config(leader=leader, position_nodes=nodes, velocity_nodes=nodes)
    spec = build_game(cfg)
    return cfg, spec, build_lq_grid(cfg, spec)


def scalar_game(
    drift=None,
    cost1=None,
    cost2=None,
    kappa1: float = 0.0,
    kappa2: float = 0.0,
    dwell1=(0.2, 0.6),
    dwell2=(0.2, 0.6),
    gamma: float = 0.5,
    **extra,
) -> GameSpec:
    """Scalar state in [-1, 1], scalar held controls in [-1, 1]."""
    drift = drift if drift is not None else prim.LinearDrift([[-1.0]], [[0.3]], [[0.6]])
    p1 = PlayerSpec(dwell1, [-1.0], [1.0], running_cost=cost1 or prim.ConstantCost(0.0),
                    trigger_cost=prim.ConstantTriggerCost(kappa1))
    p2 = PlayerSpec(dwell2, [-1.0], [1.0], running_cost=cost2 or prim.ConstantCost(0.0),
                    trigger_cost=prim.ConstantTriggerCost(kappa2))
    return GameSpec(1, [-1.0], [1.0], drift, (p1, p2), gamma, **extra)


def scalar_grid(spec: GameSpec, x_nodes: int = 9, dwells=(0.2, 0.4, 0.6), params=3):
    lv = np.linspace(-1.0, 1.0, params)
    return build_grid(spec, [np.linspace(-1.0, 1.0, x_nodes)], [list(dwells)] * 2, [[lv], [lv]])


def quadratic_follower_game(**kw) -> GameSpec:
    return scalar_game(cost2=prim.QuadraticCost([[1.0]], [[0.0]], [[0.1]]), kappa2=0.05, **kw)


def stochastic_toy() -> GameSpec:
    """Scalar game with Poisson jumps that resample x uniformly."""
    return quadratic_follower_game(
        jump_intensity=prim.ConstantIntensity(0.5), intensity_bound=0.5,
        jump_kernel=prim.UniformBoxKernel(-1.0, 1.0),
    )
