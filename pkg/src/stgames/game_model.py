"""Problem data for self-triggered two-player games on PDMPs.

The physical state lives in a box of R^n. Each player holds an open-loop
control Gamma_i(s, theta_i) for a committed dwell time; the lifted state
chi = (x, sigma1, theta1, sigma2, theta2) is Markov.

Batched states are flat arrays of shape (B, D) laid out as
``[x, sigma1, theta1, sigma2, theta2]``; see :class:`StateLayout`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from . import primitives as prim

log = logging.getLogger(__name__)

DEFAULT_VALIDATION_SAMPLES = 10_000


class SpecError(ValueError):
    """Structurally malformed problem data (e.g. a box with lower > upper)."""


class DomainError(ValueError):
    """An argument outside the domain of a function handle."""


@dataclass(frozen=True, eq=False)
class PlayerSpec:
    dwell_bounds: tuple[float, float]
    param_lower: np.ndarray
    param_upper: np.ndarray
    control_law: Callable = field(default_factory=prim.ConstantHold)
    running_cost: Callable = field(default_factory=prim.ConstantCost)
    trigger_cost: Callable = field(default_factory=prim.ConstantTriggerCost)
    cost_bound: float = np.inf

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.param_lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.param_upper, dtype=float))
        object.__setattr__(self, "param_lower", lo)
        object.__setattr__(self, "param_upper", hi)
        object.__setattr__(self, "dwell_bounds", (float(self.dwell_bounds[0]), float(self.dwell_bounds[1])))

    @property
    def t_under(self) -> float:
        return self.dwell_bounds[0]

    @property
    def t_over(self) -> float:
        return self.dwell_bounds[1]

    @property
    def param_dim(self) -> int:
        return self.param_lower.size

    @property
    def action_dim(self) -> int:
        law = self.control_law
        return law.action_dim(self.param_dim) if hasattr(law, "action_dim") else self.param_dim

    def clip_params(self, theta: np.ndarray) -> np.ndarray:
        return np.clip(theta, self.param_lower, self.param_upper)


@dataclass(frozen=True)
class StateLayout:
    """Index map of the flat augmented vector [x, sigma1, theta1, sigma2, theta2]."""

    n: int
    m1: int
    m2: int

    @property
    def dim(self) -> int:
        return self.n + self.m1 + self.m2 + 2

    @property
    def x(self) -> slice:
        return slice(0, self.n)

    @property
    def sigma1(self) -> int:
        return self.n

    @property
    def theta1(self) -> slice:
        return slice(self.n + 1, self.n + 1 + self.m1)

    @property
    def sigma2(self) -> int:
        return self.n + 1 + self.m1

    @property
    def theta2(self) -> slice:
        return slice(self.n + 2 + self.m1, self.dim)

    def sigma(self, player: int) -> int:
        return self.sigma1 if player == 1 else self.sigma2

    def theta(self, player: int) -> slice:
        return self.theta1 if player == 1 else self.theta2

    def axis_names(self) -> list[str]:
        return (
            [f"x{i}" for i in range(self.n)]
            + ["sigma1"]
            + [f"theta1_{j}" for j in range(self.m1)]
            + ["sigma2"]
            + [f"theta2_{j}" for j in range(self.m2)]
        )

    def pack(self, x, sigma1, theta1, sigma2, theta2) -> np.ndarray:
        """Assemble batched components into (B, D) rows."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        B = x.shape[0]
        col = lambda a: np.broadcast_to(np.asarray(a, dtype=float).reshape(-1, 1), (B, 1))
        mat = lambda a, m: np.broadcast_to(np.asarray(a, dtype=float).reshape(-1, m), (B, m))
        return np.hstack([x, col(sigma1), mat(theta1, self.m1), col(sigma2), mat(theta2, self.m2)])


@dataclass(frozen=True, eq=False)
class GameSpec:
    """Full problem definition. Immutable; function handles must be pure."""

    state_dim: int
    state_lower: np.ndarray
    state_upper: np.ndarray
    drift: Callable
    players: tuple[PlayerSpec, PlayerSpec]
    discount: float
    jump_intensity: Callable = field(default_factory=prim.ZeroIntensity)
    intensity_bound: float = 0.0
    jump_kernel: Callable = field(default_factory=prim.NoJump)
    trigger_cost_timing: str = "start"
    name: str = ""

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.state_lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.state_upper, dtype=float))
        object.__setattr__(self, "state_lower", lo)
        object.__setattr__(self, "state_upper", hi)
        object.__setattr__(self, "players", tuple(self.players))
        if self.trigger_cost_timing not in ("start", "end"):
            raise SpecError("trigger_cost_timing must be 'start' or 'end'")

    @property
    def layout(self) -> StateLayout:
        return StateLayout(self.state_dim, self.players[0].param_dim, self.players[1].param_dim)

    def player(self, i: int) -> PlayerSpec:
        return self.players[i - 1]

    @property
    def min_dwell(self) -> float:
        return min(p.t_under for p in self.players)

    @property
    def contraction_modulus(self) -> float:
        """beta = exp(-gamma * min(T_under_1, T_under_2))."""
        return float(np.exp(-self.discount * self.min_dwell))

    @property
    def rk4_step(self) -> float:
        return min(0.01, self.min_dwell / 20)

    @property
    def is_deterministic(self) -> bool:
        return self.intensity_bound <= 0.0 or isinstance(self.jump_intensity, prim.ZeroIntensity)

    def trigger_charge(self, player: int, dwell: np.ndarray) -> np.ndarray:
        """Trigger cost as seen at the decision instant (discounted to the end under 'end' timing)."""
        g = np.asarray(self.player(player).trigger_cost(np.asarray(dwell, dtype=float)), dtype=float)
        if self.trigger_cost_timing == "end":
            g = g * np.exp(-self.discount * np.asarray(dwell))
        return g

    def clamp_state(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.state_lower, self.state_upper)

    def with_(self, **changes) -> "GameSpec":
        return replace(self, **changes)


@dataclass
class AugmentedState:
    """chi = (x, sigma1, theta1, sigma2, theta2) for one sample."""

    x: np.ndarray
    sigma1: float
    theta1: np.ndarray
    sigma2: float
    theta2: np.ndarray

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        self.theta1 = np.atleast_1d(np.asarray(self.theta1, dtype=float))
        self.theta2 = np.atleast_1d(np.asarray(self.theta2, dtype=float))
        self.sigma1 = float(self.sigma1)
        self.sigma2 = float(self.sigma2)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.x, [self.sigma1], self.theta1, [self.sigma2], self.theta2])

    @classmethod
    def from_vector(cls, layout: StateLayout, vec: np.ndarray) -> "AugmentedState":
        vec = np.asarray(vec, dtype=float).ravel()
        return cls(vec[layout.x], vec[layout.sigma1], vec[layout.theta1], vec[layout.sigma2], vec[layout.theta2])

    def violations(self, spec: GameSpec, tol: float = 1e-12) -> list[str]:
        out = []
        p1, p2 = spec.players
        for i, (s, p) in enumerate(((self.sigma1, p1), (self.sigma2, p2)), start=1):
            if not -tol <= s <= p.t_over + tol:
                out.append(f"sigma{i}={s} outside [0, {p.t_over}]")
        for i, (th, p) in enumerate(((self.theta1, p1), (self.theta2, p2)), start=1):
            if th.shape != p.param_lower.shape:
                out.append(f"theta{i} has shape {th.shape}, expected {p.param_lower.shape}")
            elif np.any(th < p.param_lower - tol) or np.any(th > p.param_upper + tol):
                out.append(f"theta{i}={th.tolist()} outside parameter box")
        if self.x.shape != (spec.state_dim,):
            out.append(f"x has shape {self.x.shape}, expected ({spec.state_dim},)")
        elif np.any(self.x < spec.state_lower - tol) or np.any(self.x > spec.state_upper + tol):
            out.append(f"x={self.x.tolist()} outside state box")
        return out


def time_to_boundary(chi: AugmentedState) -> float:
    """Time until the next clock expiry, min(sigma1, sigma2)."""
    return min(chi.sigma1, chi.sigma2)


def held_control(player: PlayerSpec, elapsed: float, theta) -> np.ndarray:
    """Evaluate Gamma_i(elapsed, theta) for a single sample."""
    if not 0.0 <= elapsed <= player.t_over:
        raise DomainError(f"elapsed time {elapsed} outside [0, {player.t_over}]")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    out = player.control_law(np.array([elapsed]), theta[None, :])
    return np.asarray(out, dtype=float).reshape(-1)


def _check_box(lo: np.ndarray, hi: np.ndarray, what: str) -> None:
    if lo.shape != hi.shape:
        raise SpecError(f"{what}: lower and upper bounds have different shapes")
    bad = np.flatnonzero(lo > hi)
    if bad.size:
        raise SpecError(f"{what}: lower > upper in dimension(s) {bad.tolist()}")


def check_structure(spec: GameSpec) -> None:
    """Raise SpecError on malformed boxes; soft problems are left to validate_spec."""
    if spec.state_lower.size != spec.state_dim:
        raise SpecError("state box dimension does not match state_dim")
    _check_box(spec.state_lower, spec.state_upper, "state box")
    for i, p in enumerate(spec.players, start=1):
        _check_box(p.param_lower, p.param_upper, f"player {i} parameter box")
        if p.t_under > p.t_over:
            raise SpecError(f"player {i}: dwell lower bound exceeds upper bound")


def validate_spec(spec: GameSpec, n_samples: int = DEFAULT_VALIDATION_SAMPLES, seed: int = 0) -> list[str]:
    """Randomized spot checks of the regularity requirements.

    Samples states in the box (box corners included) and parameters in the
    parameter boxes, then checks cost bounds, intensity bounds, kernel
    support and control-law domains. The checks can refute but never prove
    regularity. Deterministic for a given seed.
    """
    check_structure(spec)
    out: list[str] = []
    if not spec.discount > 0:
        out.append(f"discount must be strictly positive (got {spec.discount})")
    for i, p in enumerate(spec.players, start=1):
        if not p.t_under > 0:
            out.append(f"player {i}: dwell lower bound must be positive (got {p.t_under})")

    rng = np.random.default_rng(seed)
    n = spec.state_dim
    corners = np.array(np.meshgrid(*[[a, b] for a, b in zip(spec.state_lower, spec.state_upper)])).reshape(n, -1).T
    x = spec.state_lower + (spec.state_upper - spec.state_lower) * rng.random((n_samples, n))
    x = np.vstack([corners[:n_samples], x])[:n_samples]
    B = x.shape[0]
    us = []
    for i, p in enumerate(spec.players, start=1):
        theta = p.param_lower + (p.param_upper - p.param_lower) * rng.random((B, p.param_dim))
        s = p.t_over * rng.random(B)
        u = np.asarray(p.control_law(s, theta), dtype=float)
        if not np.all(np.isfinite(u)):
            out.append(f"player {i}: control law not finite on [0, {p.t_over}]")
        us.append(u)
    u1, u2 = us

    for i, p in enumerate(spec.players, start=1):
        r = np.asarray(p.running_cost(x, u1, u2), dtype=float)
        bad = np.flatnonzero(~(np.abs(r) <= p.cost_bound))
        if bad.size:
            k = bad[0]
            out.append(f"player {i}: |running cost| = {abs(r[k]):.6g} exceeds bound {p.cost_bound} at x={x[k].tolist()}")
        g = np.asarray(p.trigger_cost(np.linspace(p.t_under, p.t_over, 16)), dtype=float)
        if not np.all(np.isfinite(g)):
            out.append(f"player {i}: trigger cost not finite on dwell bounds")

    lam = np.asarray(spec.jump_intensity(x, u1, u2), dtype=float)
    bad = np.flatnonzero(lam > spec.intensity_bound)
    if bad.size:
        k = bad[0]
        out.append(f"jump intensity {lam[k]:.6g} exceeds declared bound {spec.intensity_bound} at x={x[k].tolist()}")
    bad = np.flatnonzero(lam < 0)
    if bad.size:
        out.append(f"negative jump intensity at x={x[bad[0]].tolist()}")

    if not spec.is_deterministic:
        y = np.asarray(spec.jump_kernel(x, u1, u2, rng), dtype=float)
        outside = np.flatnonzero(np.any((y < spec.state_lower) | (y > spec.state_upper), axis=1))
        if outside.size:
            out.append(f"jump kernel sample {y[outside[0]].tolist()} leaves the state box")
    return out


# ------------------------------------------------------------------ config


def player_to_config(p: PlayerSpec) -> dict:
    return {
        "dwell_bounds": list(p.dwell_bounds),
        "param_lower": p.param_lower.tolist(),
        "param_upper": p.param_upper.tolist(),
        "control_law": prim.primitive_to_config(p.control_law),
        "running_cost": prim.primitive_to_config(p.running_cost),
        "trigger_cost": prim.primitive_to_config(p.trigger_cost),
        "cost_bound": None if not np.isfinite(p.cost_bound) else p.cost_bound,
    }


def player_from_config(cfg: dict) -> PlayerSpec:
    bound = cfg.get("cost_bound")
    return PlayerSpec(
        dwell_bounds=tuple(cfg["dwell_bounds"]),
        param_lower=cfg["param_lower"],
        param_upper=cfg["param_upper"],
        control_law=prim.primitive_from_config(cfg.get("control_law", {"kind": "constant"})),
        running_cost=prim.primitive_from_config(cfg.get("running_cost", {"kind": "constant_cost"})),
        trigger_cost=prim.primitive_from_config(cfg.get("trigger_cost", {"kind": "constant_trigger"})),
        cost_bound=np.inf if bound is None else float(bound),
    )


def spec_to_config(spec: GameSpec) -> dict[str, Any]:
    return {
        "kind": "custom",
        "name": spec.name,
        "state_dim": spec.state_dim,
        "state_lower": spec.state_lower.tolist(),
        "state_upper": spec.state_upper.tolist(),
        "drift": prim.primitive_to_config(spec.drift),
        "jump_intensity": prim.primitive_to_config(spec.jump_intensity),
        "intensity_bound": spec.intensity_bound,
        "jump_kernel": prim.primitive_to_config(spec.jump_kernel),
        "discount": spec.discount,
        "trigger_cost_timing": spec.trigger_cost_timing,
        "players": [player_to_config(p) for p in spec.players],
    }


def spec_from_config(cfg: dict[str, Any]) -> GameSpec:
    spec = GameSpec(
        state_dim=int(cfg["state_dim"]),
        state_lower=cfg["state_lower"],
        state_upper=cfg["state_upper"],
        drift=prim.primitive_from_config(cfg["drift"]),
        players=tuple(player_from_config(p) for p in cfg["players"]),
        discount=float(cfg["discount"]),
        jump_intensity=prim.primitive_from_config(cfg.get("jump_intensity", {"kind": "zero_intensity"})),
        intensity_bound=float(cfg.get("intensity_bound", 0.0)),
        jump_kernel=prim.primitive_from_config(cfg.get("jump_kernel", {"kind": "no_jump"})),
        trigger_cost_timing=cfg.get("trigger_cost_timing", "start"),
        name=cfg.get("name", ""),
    )
    check_structure(spec)
    return spec


# ----------------------------------------------------------------- swapping


@dataclass(frozen=True, eq=False)
class SwapControls:
    """Wraps a handle h(x, u1, u2, ...) as h(x, u2, u1, ...)."""

    inner: Callable

    def __call__(self, x, u1, u2, *rest):
        return self.inner(x, u2, u1, *rest)


def swap_players(spec: GameSpec) -> GameSpec:
    """The same game with the player labels exchanged.

    Handles are wrapped so that player 1 of the result is player 2 of
    ``spec``. The physical state is unchanged. The result is not
    serializable to config.
    """
    p1, p2 = spec.players
    wrap = lambda p: replace(p, running_cost=SwapControls(p.running_cost))
    return replace(
        spec,
        drift=SwapControls(spec.drift),
        players=(wrap(p2), wrap(p1)),
        jump_intensity=spec.jump_intensity if isinstance(spec.jump_intensity, prim.ZeroIntensity) else SwapControls(spec.jump_intensity),
        jump_kernel=SwapControls(spec.jump_kernel),
        name=f"{spec.name}_swapped" if spec.name else "swapped",
    )
