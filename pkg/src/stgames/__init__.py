"""Solvers and simulators for self-triggered two-player games on PDMPs."""

from .game_model import (
    AugmentedState,
    DomainError,
    GameSpec,
    PlayerSpec,
    SpecError,
    StateLayout,
    held_control,
    time_to_boundary,
    validate_spec,
)
from .value_grid import GridSpec, ValueGrid, build_grid, interpolate, sup_norm_diff
from .follower_dp import StackelbergOperator, value_iteration
from .leader_opt import LeaderPolicyHead, LeaderProblem, optimize_leader
from .nash_relax import NashOperator, nash_iterate
from .lq_pursuit import LQPursuitConfig, build_game, riccati_baseline
from .policies import ConstantPolicy, TablePolicy

__version__ = "0.1.0"
