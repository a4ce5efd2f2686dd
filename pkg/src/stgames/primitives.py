"""Named built-in function handles for game definitions.

Every handle operates on batches: the leading axis indexes samples.
Handles are small frozen dataclasses so they can round-trip through the
JSON config (``{"kind": ..., **params}``). Arbitrary user callables work
everywhere a handle is expected, they just cannot be serialized.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Any, Callable

import numpy as np

_REGISTRY: dict[str, type] = {}


def register_primitive(cls):
    """Class decorator adding a handle type to the config registry."""
    _REGISTRY[cls.kind] = cls
    return cls


def primitive_from_config(cfg: dict) -> Any:
    cfg = dict(cfg)
    try:
        kind = cfg.pop("kind")
    except KeyError:
        raise ValueError(f"primitive block without 'kind': {cfg}") from None
    if kind not in _REGISTRY:
        raise ValueError(f"unknown primitive kind {kind!r}; known: {sorted(_REGISTRY)}")
    return _REGISTRY[kind](**cfg)


def primitive_to_config(obj: Any) -> dict:
    if not hasattr(obj, "kind") or type(obj).kind not in _REGISTRY:
        raise TypeError(f"{obj!r} is not a registered primitive and cannot be serialized")
    out: dict[str, Any] = {"kind": obj.kind}
    for f in fields(obj):
        if not f.init:
            continue
        val = getattr(obj, f.name)
        out[f.name] = np.asarray(val).tolist() if isinstance(val, (np.ndarray, tuple, list)) else val
    return out


def _mat(a) -> np.ndarray:
    return np.atleast_2d(np.asarray(a, dtype=float))


def _quad(x: np.ndarray, M: np.ndarray) -> np.ndarray:
    return np.einsum("bi,ij,bj->b", x, M, x)


# ---------------------------------------------------------------- drifts


@register_primitive
@dataclass(frozen=True, eq=False)
class ZeroDrift:
    kind = "zero"

    def __call__(self, x, u1, u2):
        return np.zeros_like(x)


@register_primitive
@dataclass(frozen=True, eq=False)
class LinearDrift:
    """x' = A x + B1 u1 + B2 u2."""

    A: Any
    B1: Any
    B2: Any
    kind = "linear"

    def __post_init__(self):
        for name in ("A", "B1", "B2"):
            object.__setattr__(self, name, _mat(getattr(self, name)))

    def __call__(self, x, u1, u2):
        return x @ self.A.T + u1 @ self.B1.T + u2 @ self.B2.T


def relative_double_integrator(axes: int, pursuer: int = 1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Matrices of the relative double integrator z = [p - e, p' - e'].

    Positions come first, then velocities. ``pursuer`` names the player
    whose acceleration enters with a plus sign.
    """
    I, Z = np.eye(axes), np.zeros((axes, axes))
    A = np.block([[Z, I], [Z, Z]])
    Bp = np.vstack([Z, I])
    return (A, Bp, -Bp) if pursuer == 1 else (A, -Bp, Bp)


@register_primitive
@dataclass(frozen=True, eq=False)
class DoubleIntegratorRelative(LinearDrift):
    axes: int = 2
    pursuer: int = 1
    A: Any = field(default=None, init=False, repr=False)
    B1: Any = field(default=None, init=False, repr=False)
    B2: Any = field(default=None, init=False, repr=False)
    kind = "double_integrator_relative"

    def __post_init__(self):
        A, B1, B2 = relative_double_integrator(self.axes, self.pursuer)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B1", B1)
        object.__setattr__(self, "B2", B2)


@register_primitive
@dataclass(frozen=True, eq=False)
class SingleIntegratorRelative(LinearDrift):
    """z' = u_pursuer - u_evader for the relative position z = p - e."""

    axes: int = 1
    pursuer: int = 1
    A: Any = field(default=None, init=False, repr=False)
    B1: Any = field(default=None, init=False, repr=False)
    B2: Any = field(default=None, init=False, repr=False)
    kind = "single_integrator_relative"

    def __post_init__(self):
        I = np.eye(self.axes)
        object.__setattr__(self, "A", np.zeros((self.axes, self.axes)))
        object.__setattr__(self, "B1", I if self.pursuer == 1 else -I)
        object.__setattr__(self, "B2", -I if self.pursuer == 1 else I)


@register_primitive
@dataclass(frozen=True, eq=False)
class ExponentialDecay:
    """x' = -rate * x, controls ignored."""

    rate: float = 1.0
    kind = "exponential_decay"

    def __call__(self, x, u1, u2):
        return -self.rate * x


@register_primitive
@dataclass(frozen=True, eq=False)
class DecoupledDrift:
    """Separable drift: x[i] driven by player ``owner[i]`` as x_i' = -a x_i + b u."""

    owner: tuple = (1, 2)
    decay: float = 1.0
    gain: float = 1.0
    kind = "decoupled"

    def __call__(self, x, u1, u2):
        own = np.asarray(self.owner)
        u = np.where(own[None, :] == 1, u1[:, :1], u2[:, :1])
        return -self.decay * x + self.gain * u


# ------------------------------------------------------------ intensities


@register_primitive
@dataclass(frozen=True, eq=False)
class ZeroIntensity:
    kind = "zero_intensity"

    def __call__(self, x, u1, u2):
        return np.zeros(x.shape[0])


@register_primitive
@dataclass(frozen=True, eq=False)
class ConstantIntensity:
    rate: float = 1.0
    kind = "constant_intensity"

    def __call__(self, x, u1, u2):
        return np.full(x.shape[0], float(self.rate))


@register_primitive
@dataclass(frozen=True, eq=False)
class PositiveIndicatorIntensity:
    """rate * 1{x[axis] > 0}."""

    rate: float = 1.0
    axis: int = 0
    kind = "positive_indicator_intensity"

    def __call__(self, x, u1, u2):
        return np.where(x[:, self.axis] > 0, float(self.rate), 0.0)


# ---------------------------------------------------------------- kernels


@register_primitive
@dataclass(frozen=True, eq=False)
class NoJump:
    kind = "no_jump"

    def __call__(self, x, u1, u2, rng):
        return np.array(x, copy=True)


@register_primitive
@dataclass(frozen=True, eq=False)
class ResetKernel:
    """Sends the state to ``target`` (plus optional Gaussian spread)."""

    target: Any = 0.0
    spread: float = 0.0
    kind = "reset"

    def __call__(self, x, u1, u2, rng):
        out = np.broadcast_to(np.asarray(self.target, dtype=float), x.shape).copy()
        if self.spread > 0:
            out += self.spread * rng.standard_normal(x.shape)
        return out


@register_primitive
@dataclass(frozen=True, eq=False)
class UniformBoxKernel:
    lower: Any = -1.0
    upper: Any = 1.0
    kind = "uniform_box"

    def __call__(self, x, u1, u2, rng):
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), x.shape)
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), x.shape)
        return lo + (hi - lo) * rng.random(x.shape)


# ----------------------------------------------------------- control laws


@register_primitive
@dataclass(frozen=True, eq=False)
class ConstantHold:
    """Gamma(s, theta) = theta."""

    kind = "constant"
    time_invariant = True

    def action_dim(self, param_dim: int) -> int:
        return param_dim

    def __call__(self, s, theta):
        return np.asarray(theta, dtype=float)


@register_primitive
@dataclass(frozen=True, eq=False)
class LinearRamp:
    """Gamma(s, theta) = theta_a + theta_b * s with theta = [theta_a, theta_b]."""

    kind = "linear_ramp"
    time_invariant = False

    def action_dim(self, param_dim: int) -> int:
        if param_dim % 2:
            raise ValueError("linear ramp needs an even number of parameters")
        return param_dim // 2

    def __call__(self, s, theta):
        theta = np.asarray(theta, dtype=float)
        k = theta.shape[-1] // 2
        s = np.asarray(s, dtype=float)
        return theta[..., :k] + theta[..., k:] * s[..., None]


# ---------------------------------------------------------- running costs


@register_primitive
@dataclass(frozen=True, eq=False)
class ConstantCost:
    value: float = 0.0
    kind = "constant_cost"

    def __call__(self, x, u1, u2):
        return np.full(x.shape[0], float(self.value))


@register_primitive
@dataclass(frozen=True, eq=False)
class QuadraticCost:
    """r = x'Qx + u1'R1u1 + u2'R2u2 (any of the weights may be indefinite)."""

    Q: Any
    R1: Any
    R2: Any
    kind = "quadratic"

    def __post_init__(self):
        for name in ("Q", "R1", "R2"):
            object.__setattr__(self, name, _mat(getattr(self, name)))

    def __call__(self, x, u1, u2):
        return _quad(x, self.Q) + _quad(u1, self.R1) + _quad(u2, self.R2)

    def bound(self, x_radius: float, u1_radius: float, u2_radius: float) -> float:
        """Crude sup-bound over Euclidean balls of the given radii."""
        norm = lambda M: float(np.max(np.abs(np.linalg.eigvalsh((M + M.T) / 2))))
        return norm(self.Q) * x_radius**2 + norm(self.R1) * u1_radius**2 + norm(self.R2) * u2_radius**2


@register_primitive
@dataclass(frozen=True, eq=False)
class OwnStateCost:
    """r = weight * x[axis]^2 + control_weight * |u_own|^2, for decoupled games."""

    axis: int = 0
    player: int = 1
    weight: float = 1.0
    control_weight: float = 0.0
    kind = "own_state"

    def __call__(self, x, u1, u2):
        u = u1 if self.player == 1 else u2
        return self.weight * x[:, self.axis] ** 2 + self.control_weight * np.sum(u * u, axis=1)


# ---------------------------------------------------------- trigger costs


@register_primitive
@dataclass(frozen=True, eq=False)
class ConstantTriggerCost:
    kappa: float = 0.0
    kind = "constant_trigger"

    def __call__(self, T):
        return np.full(np.shape(T), float(self.kappa))

    def derivative(self, T):
        return np.zeros(np.shape(T))


@register_primitive
@dataclass(frozen=True, eq=False)
class AffineTriggerCost:
    """g(T) = kappa + slope * T."""

    kappa: float = 0.0
    slope: float = 0.0
    kind = "affine_trigger"

    def __call__(self, T):
        return self.kappa + self.slope * np.asarray(T, dtype=float)

    def derivative(self, T):
        return np.full(np.shape(T), float(self.slope))


def trigger_cost_derivative(g: Callable, T: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """dg/dT, analytic when the handle provides it, central differences otherwise."""
    if hasattr(g, "derivative"):
        return np.asarray(g.derivative(T), dtype=float)
    T = np.asarray(T, dtype=float)
    return (g(T + step) - g(T - step)) / (2 * step)
