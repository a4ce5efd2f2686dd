"""Pursuit-evasion case study on a relative double integrator.

The relative state is z = [p - e, p' - e'] (positions, then velocities).
Both players hold accelerations between their own triggers. The pursuer
pays z'Qz + u_p'R_p u_p, the evader -z'Qz + u_e'R_e u_e, and each trigger
costs a constant kappa. A continuous-time LQ feedback-Nash pair (no
triggers) serves as the baseline.

Which role is player 1 (the leader in the Stackelberg solver) is set by
``LQPursuitConfig.leader``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from . import primitives as prim
from .game_model import AugmentedState, GameSpec, PlayerSpec, SpecError
from .pdmp_sim import Trajectory, rollout
from .policies import CallablePolicy, TriggerPolicy
from .value_grid import GridSpec, build_grid


class RiccatiError(RuntimeError):
    """Coupled Riccati iteration failed; ``trace`` holds the per-iteration gain changes."""

    def __init__(self, msg: str, trace: list[float]):
        super().__init__(msg)
        self.trace = trace


@dataclass
class LQPursuitConfig:
    axes: int = 1
    integrator: str = "double"
    z0: Sequence[float] | None = None
    Q: Sequence | None = None
    R_pursuer: Sequence | None = None
    R_evader: Sequence | None = None
    kappa_pursuer: float = 0.05
    kappa_evader: float = 0.05
    dwell_pursuer: tuple[float, float] = (0.1, 1.0)
    dwell_evader: tuple[float, float] = (0.1, 1.0)
    accel_pursuer: float = 1.0
    accel_evader: float = 1.0
    position_bound: float = 2.0
    velocity_bound: float = 2.0
    capture_radius: float = 0.1
    gamma: float = 0.5
    zero_sum: bool = False
    leader: str = "pursuer"
    # grid resolution for the dynamic-programming solvers
    position_nodes: int = 11
    velocity_nodes: int = 11
    dwell_candidates_pursuer: Sequence[float] | None = None
    dwell_candidates_evader: Sequence[float] | None = None
    accel_levels: int = 3

    def __post_init__(self):
        if self.integrator not in ("double", "single"):
            raise SpecError("integrator must be 'double' or 'single'")
        if self.leader not in ("pursuer", "evader"):
            raise SpecError("leader must be 'pursuer' or 'evader'")
        if not self.capture_radius > 0:
            raise SpecError("capture_radius must be positive")
        n, a = self.state_dim, self.axes
        self.z0 = np.zeros(n) if self.z0 is None else np.asarray(self.z0, dtype=float).reshape(n)
        self.Q = np.eye(n) if self.Q is None else np.asarray(self.Q, dtype=float).reshape(n, n)
        self.R_pursuer = np.eye(a) if self.R_pursuer is None else np.asarray(self.R_pursuer, dtype=float).reshape(a, a)
        self.R_evader = np.eye(a) if self.R_evader is None else np.asarray(self.R_evader, dtype=float).reshape(a, a)
        if not np.allclose(self.Q, self.Q.T) or np.linalg.eigvalsh(self.Q).min() < -1e-12:
            raise SpecError("Q must be symmetric positive semidefinite")
        for name in ("R_pursuer", "R_evader"):
            R = getattr(self, name)
            if not np.allclose(R, R.T) or np.linalg.eigvalsh(R).min() <= 0:
                raise SpecError(f"{name} must be symmetric positive definite")
        self.dwell_pursuer = tuple(float(t) for t in self.dwell_pursuer)
        self.dwell_evader = tuple(float(t) for t in self.dwell_evader)

    @property
    def state_dim(self) -> int:
        return 2 * self.axes if self.integrator == "double" else self.axes

    @property
    def pursuer_index(self) -> int:
        return 1 if self.leader == "pursuer" else 2

    @property
    def evader_index(self) -> int:
        return 3 - self.pursuer_index

    def to_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else (list(v) if isinstance(v, tuple) else v)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "LQPursuitConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise SpecError(f"unknown lq_pursuit option(s): {sorted(extra)}")
        return cls(**d)


def system_matrices(cfg: LQPursuitConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(A, B_pursuer, B_evader) of the relative dynamics."""
    a = cfg.axes
    if cfg.integrator == "double":
        A, Bp, Be = prim.relative_double_integrator(a, pursuer=1)
    else:
        A, Bp, Be = np.zeros((a, a)), np.eye(a), -np.eye(a)
    return A, Bp, Be


def _cost_weights(cfg: LQPursuitConfig):
    """(Q_p, Q_e, R_pp, R_pe, R_ee, R_ep): player i pays z'Q_i z + u_i'R_ii u_i + u_j'R_ij u_j."""
    a = cfg.axes
    Z = np.zeros((a, a))
    if cfg.zero_sum:
        return cfg.Q, -cfg.Q, cfg.R_pursuer, -cfg.R_evader, cfg.R_evader, -cfg.R_pursuer
    return cfg.Q, -cfg.Q, cfg.R_pursuer, Z, cfg.R_evader, Z


def _state_box(cfg: LQPursuitConfig) -> tuple[np.ndarray, np.ndarray]:
    a = cfg.axes
    hi = np.full(a, cfg.position_bound)
    if cfg.integrator == "double":
        hi = np.concatenate([hi, np.full(a, cfg.velocity_bound)])
    return -hi, hi


def build_game(cfg: LQPursuitConfig) -> GameSpec:
    """GameSpec with players ordered (leader, follower) per ``cfg.leader``."""
    a = cfg.axes
    Qp, Qe, Rpp, Rpe, Ree, Rep = _cost_weights(cfg)
    pi = cfg.pursuer_index
    lo, hi = _state_box(cfg)
    zmax = float(np.linalg.norm(hi))
    ap, ae = cfg.accel_pursuer * math.sqrt(a), cfg.accel_evader * math.sqrt(a)

    def cost(Qs, Rown, Ropp, own_is_1):
        R1, R2 = (Rown, Ropp) if own_is_1 else (Ropp, Rown)
        return prim.QuadraticCost(Qs, R1, R2)

    p_first = pi == 1
    rp = cost(Qp, Rpp, Rpe, p_first)
    re = cost(Qe, Ree, Rep, not p_first)
    u1r, u2r = (ap, ae) if p_first else (ae, ap)
    pursuer = PlayerSpec(
        cfg.dwell_pursuer, -cfg.accel_pursuer * np.ones(a), cfg.accel_pursuer * np.ones(a),
        prim.ConstantHold(), rp, prim.ConstantTriggerCost(cfg.kappa_pursuer), rp.bound(zmax, u1r, u2r),
    )
    evader = PlayerSpec(
        cfg.dwell_evader, -cfg.accel_evader * np.ones(a), cfg.accel_evader * np.ones(a),
        prim.ConstantHold(), re, prim.ConstantTriggerCost(cfg.kappa_evader), re.bound(zmax, u1r, u2r),
    )
    if cfg.integrator == "double":
        drift = prim.DoubleIntegratorRelative(axes=a, pursuer=pi)
    else:
        drift = prim.SingleIntegratorRelative(axes=a, pursuer=pi)
    players = (pursuer, evader) if p_first else (evader, pursuer)
    return GameSpec(cfg.state_dim, lo, hi, drift, players, cfg.gamma, name=f"lq_pursuit_{cfg.integrator}_{a}d")


def _default_dwells(bounds: tuple[float, float], count: int = 3) -> np.ndarray:
    return np.linspace(bounds[0], bounds[1], count)


def build_lq_grid(cfg: LQPursuitConfig, spec: GameSpec | None = None) -> GridSpec:
    """Tensor grid for the case study; clock axes are {0} plus the dwell candidates."""
    spec = spec or build_game(cfg)
    lo, hi = _state_box(cfg)
    a = cfg.axes
    counts = [cfg.position_nodes] * a + ([cfg.velocity_nodes] * a if cfg.integrator == "double" else [])
    x_axes = [np.linspace(l, h, c) for l, h, c in zip(lo, hi, counts)]
    dp = np.asarray(cfg.dwell_candidates_pursuer if cfg.dwell_candidates_pursuer is not None else _default_dwells(cfg.dwell_pursuer))
    de = np.asarray(cfg.dwell_candidates_evader if cfg.dwell_candidates_evader is not None else _default_dwells(cfg.dwell_evader))
    lev_p = [np.linspace(-cfg.accel_pursuer, cfg.accel_pursuer, cfg.accel_levels)] * a
    lev_e = [np.linspace(-cfg.accel_evader, cfg.accel_evader, cfg.accel_levels)] * a
    if cfg.pursuer_index == 1:
        dwells, params = (dp, de), (lev_p, lev_e)
    else:
        dwells, params = (de, dp), (lev_e, lev_p)
    return build_grid(spec, x_axes, dwells, params)


# ------------------------------------------------------------------ Riccati


@dataclass
class RiccatiSolution:
    P1: np.ndarray
    P2: np.ndarray
    K1: np.ndarray
    K2: np.ndarray
    residuals: tuple[float, float]
    iterations: int
    gain_trace: list[float]
    closed_loop_eigs: np.ndarray

    def value(self, z: np.ndarray, player: int = 1) -> np.ndarray:
        z = np.atleast_2d(z)
        P = self.P1 if player == 1 else self.P2
        return np.einsum("bi,ij,bj->b", z, P, z)


def _are_residual(Ai, Bi, Rii, Qi, Pi):
    return Ai.T @ Pi + Pi @ Ai + Qi - Pi @ Bi @ np.linalg.solve(Rii, Bi.T @ Pi)


def _best_response(At, Bi, Bj, Kj, Qi, Rii, Rij):
    """Player i's discounted LQ response to u_j = -K_j z: (P_i, K_i)."""
    Ai = At - Bj @ Kj
    Qeff = Qi + Kj.T @ Rij @ Kj
    Qeff = (Qeff + Qeff.T) / 2
    if not np.any(Bi):
        P = sla.solve_continuous_lyapunov(Ai.T, -Qeff)
        return (P + P.T) / 2, np.zeros((Bi.shape[1], At.shape[0]))
    P = sla.solve_continuous_are(Ai, Bi, Qeff, Rii)
    P = (P + P.T) / 2
    return P, np.linalg.solve(Rii, Bi.T @ P)


def coupled_riccati(
    A, B1, B2, Q1, Q2, R11, R22, R12=None, R21=None, gamma: float = 0.0, tol: float = 1e-10, max_iters: int = 2000
) -> RiccatiSolution:
    """Feedback-Nash gains of the discounted LQ game by alternating best responses.

    Player i pays int e^{-gamma t} (z'Q_i z + u_i'R_ii u_i + u_j'R_ij u_j) dt.
    Discounting is absorbed by the shift A - (gamma/2) I. Each player's
    Riccati equation is solved against the other's frozen gain until the
    largest gain change falls below ``tol``.
    """
    A, B1, B2 = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B1, B2))
    Q1, Q2, R11, R22 = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (Q1, Q2, R11, R22))
    R12 = np.zeros((B2.shape[1],) * 2) if R12 is None else np.atleast_2d(np.asarray(R12, dtype=float))
    R21 = np.zeros((B1.shape[1],) * 2) if R21 is None else np.atleast_2d(np.asarray(R21, dtype=float))
    n = A.shape[0]
    At = A - 0.5 * gamma * np.eye(n)
    K1 = np.zeros((B1.shape[1], n))
    K2 = np.zeros((B2.shape[1], n))
    trace: list[float] = []
    for it in range(1, max_iters + 1):
        try:
            P1, K1n = _best_response(At, B1, B2, K2, Q1, R11, R12)
            P2, K2n = _best_response(At, B2, B1, K1n, Q2, R22, R21)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise RiccatiError(f"Riccati solve failed at iteration {it}: {exc}", trace) from exc
        delta = max(np.max(np.abs(K1n - K1)), np.max(np.abs(K2n - K2)))
        trace.append(float(delta))
        K1, K2 = K1n, K2n
        if not np.isfinite(delta) or delta > 1e12:
            raise RiccatiError("coupled Riccati iteration diverged", trace)
        if delta < tol:
            break
    else:
        raise RiccatiError(f"no convergence within {max_iters} iterations (last change {trace[-1]:.3g})", trace)
    # final polish so the returned P's are consistent with the returned gains
    P1, _ = _best_response(At, B1, B2, K2, Q1, R11, R12)
    P2, _ = _best_response(At, B2, B1, K1, Q2, R22, R21)
    res1 = _are_residual(At - B2 @ K2, B1, R11, Q1 + K2.T @ R12 @ K2, P1) if np.any(B1) else (
        (At - B2 @ K2).T @ P1 + P1 @ (At - B2 @ K2) + Q1 + K2.T @ R12 @ K2)
    res2 = _are_residual(At - B1 @ K1, B2, R22, Q2 + K1.T @ R21 @ K1, P2) if np.any(B2) else (
        (At - B1 @ K1).T @ P2 + P2 @ (At - B1 @ K1) + Q2 + K1.T @ R21 @ K1)
    eigs = np.linalg.eigvals(At - B1 @ K1 - B2 @ K2)
    return RiccatiSolution(P1, P2, K1, K2, (float(np.max(np.abs(res1))), float(np.max(np.abs(res2)))), it, trace, eigs)


@dataclass
class Baseline:
    solution: RiccatiSolution
    P: np.ndarray  # pursuer value matrix
    K_pursuer: np.ndarray
    K_evader: np.ndarray

    def value(self, z) -> np.ndarray:
        z = np.atleast_2d(z)
        return np.einsum("bi,ij,bj->b", z, self.P, z)


def riccati_baseline(cfg: LQPursuitConfig) -> Baseline:
    """Continuous feedback-Nash baseline (no triggers, no acceleration bounds)."""
    A, Bp, Be = system_matrices(cfg)
    Qp, Qe, Rpp, Rpe, Ree, Rep = _cost_weights(cfg)
    sol = coupled_riccati(A, Bp, Be, Qp, Qe, Rpp, Ree, Rpe, Rep, gamma=cfg.gamma)
    return Baseline(sol, sol.P1, sol.K1, sol.K2)


def closed_loop_matrix(cfg: LQPursuitConfig, base: Baseline) -> np.ndarray:
    A, Bp, Be = system_matrices(cfg)
    return A - Bp @ base.K_pursuer - Be @ base.K_evader


@dataclass
class ContinuousRollout:
    times: np.ndarray
    states: np.ndarray
    cost_pursuer: float
    cost_evader: float


def continuous_rollout(cfg: LQPursuitConfig, base: Baseline, z0=None, t_max: float | None = None, dt: float = 1e-3) -> ContinuousRollout:
    """RK4 integration of the closed loop z' = (A - B_p K_p - B_e K_e) z with discounted cost ledgers."""
    z0 = cfg.z0 if z0 is None else np.asarray(z0, dtype=float)
    t_max = 60.0 / cfg.gamma if t_max is None else t_max
    Acl = closed_loop_matrix(cfg, base)
    Qp, Qe, Rpp, Rpe, Ree, Rep = _cost_weights(cfg)
    Kp, Ke = base.K_pursuer, base.K_evader
    Wp = Qp + Kp.T @ Rpp @ Kp + Ke.T @ Rpe @ Ke
    We = Qe + Ke.T @ Ree @ Ke + Kp.T @ Rep @ Kp
    g = cfg.gamma
    n = z0.size
    # augmented linear system [z; c_p; c_e] integrated with RK4 on a fixed step
    steps = int(math.ceil(t_max / dt))
    h = t_max / steps
    z = z0.copy()
    cp = ce = 0.0
    times = np.linspace(0.0, t_max, steps + 1)
    states = np.empty((steps + 1, n))
    states[0] = z

    def f(t, z):
        w = math.exp(-g * t)
        return Acl @ z, w * z @ Wp @ z, w * z @ We @ z

    for k in range(steps):
        t = times[k]
        k1 = f(t, z)
        k2 = f(t + h / 2, z + h / 2 * k1[0])
        k3 = f(t + h / 2, z + h / 2 * k2[0])
        k4 = f(t + h, z + h * k3[0])
        z = z + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        cp += h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        ce += h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        states[k + 1] = z
    return ContinuousRollout(times, states, cp, ce)


# ----------------------------------------------------------- comparisons


def feedback_hold_policy(cfg: LQPursuitConfig, spec: GameSpec, player: int, K: np.ndarray, dwell: float) -> TriggerPolicy:
    """Self-triggered sample-and-hold of u = -K z with a fixed dwell (clipped to the acceleration box)."""
    lay = spec.layout
    p = spec.player(player)

    def decide(states):
        z = states[:, lay.x]
        return np.full(z.shape[0], dwell), p.clip_params(-z @ K.T)

    return CallablePolicy(player, decide)


def capture_time(times: np.ndarray, states: np.ndarray, axes: int, radius: float) -> float | None:
    d = np.linalg.norm(states[:, :axes], axis=1)
    hit = np.flatnonzero(d <= radius)
    return float(times[hit[0]]) if hit.size else None


@dataclass
class ComparisonReport:
    baseline: ContinuousRollout
    triggered: Trajectory
    capture_time_baseline: float | None
    capture_time_triggered: float | None
    costs_baseline: dict
    costs_triggered: dict
    trigger_counts: dict
    config: dict

    def to_json(self) -> dict:
        return {
            "capture_time_baseline": self.capture_time_baseline,
            "capture_time_triggered": self.capture_time_triggered,
            "costs_baseline": self.costs_baseline,
            "costs_triggered": self.costs_triggered,
            "trigger_counts": self.trigger_counts,
            "config": self.config,
        }

    def save(self, out_dir: str | Path, stem: str = "comparison") -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / f"{stem}.json", out / f"{stem}_baseline.csv", out / f"{stem}_triggered.csv", out / f"{stem}_events.csv"]
        paths[0].write_text(json.dumps(self.to_json(), indent=1, sort_keys=True))
        n = self.baseline.states.shape[1]
        with paths[1].open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i}" for i in range(n)])
            for t, s in zip(self.baseline.times, self.baseline.states):
                w.writerow([f"{v:.17g}" for v in (t, *s)])
        self.triggered.to_csv(paths[2])
        with paths[3].open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "player", "simultaneous", "dwell", "param", "cost"] + [f"x{i}" for i in range(n)])
            for e in self.triggered.events:
                w.writerow([f"{e.t:.17g}", e.player, int(e.simultaneous), f"{e.chosen_dwell:.17g}",
                            ";".join(f"{v:.17g}" for v in e.chosen_param), f"{e.cost:.17g}",
                            *[f"{v:.17g}" for v in e.pre_state[:n]]])
        return paths


def run_comparison(
    cfg: LQPursuitConfig,
    leader_policy: TriggerPolicy,
    follower_policy: TriggerPolicy,
    seed: int = 0,
    t_max: float = 20.0,
    base: Baseline | None = None,
) -> ComparisonReport:
    """Roll out the continuous baseline and the self-triggered pair from the same z0."""
    if leader_policy is None or follower_policy is None:
        raise SpecError("run_comparison needs both a leader and a follower policy")
    spec = build_game(cfg)
    base = base or riccati_baseline(cfg)
    cont = continuous_rollout(cfg, base, t_max=t_max)
    lay = spec.layout
    chi0 = AugmentedState(cfg.z0, 0.0, np.zeros(lay.m1), 0.0, np.zeros(lay.m2))
    traj = rollout(spec, chi0, leader_policy, follower_policy, t_max, seed)
    pi = cfg.pursuer_index
    a = cfg.axes
    cp, ce = traj.total_cost[pi - 1], traj.total_cost[2 - pi]
    counts = traj.trigger_counts()
    return ComparisonReport(
        cont,
        traj,
        capture_time(cont.times, cont.states, a, cfg.capture_radius),
        capture_time(traj.times, traj.states[:, lay.x], a, cfg.capture_radius),
        {"pursuer": cont.cost_pursuer, "evader": cont.cost_evader},
        {"pursuer": float(cp), "evader": float(ce)},
        {"pursuer": int(counts[pi - 1]), "evader": int(counts[2 - pi])},
        cfg.to_dict(),
    )


def triggered_feedback_cost(cfg: LQPursuitConfig, max_dwell: float, base: Baseline | None = None, t_max: float | None = None) -> float:
    """Pursuer cost when both players sample-and-hold their baseline feedback every ``max_dwell``."""
    base = base or riccati_baseline(cfg)
    lo_p, lo_e = min(cfg.dwell_pursuer[0], max_dwell), min(cfg.dwell_evader[0], max_dwell)
    c = LQPursuitConfig(**{**cfg.to_dict(), "dwell_pursuer": (lo_p, max_dwell), "dwell_evader": (lo_e, max_dwell),
                           "kappa_pursuer": 0.0, "kappa_evader": 0.0,
                           "accel_pursuer": 1e6, "accel_evader": 1e6,
                           "position_bound": 1e6, "velocity_bound": 1e6})
    spec = build_game(c)
    pi = c.pursuer_index
    K = {pi: base.K_pursuer, 3 - pi: base.K_evader}
    pol = [feedback_hold_policy(c, spec, i, K[i], max_dwell) for i in (1, 2)]
    lay = spec.layout
    chi0 = AugmentedState(c.z0, 0.0, np.zeros(lay.m1), 0.0, np.zeros(lay.m2))
    t_max = 40.0 / c.gamma if t_max is None else t_max
    traj = rollout(spec, chi0, pol[0], pol[1], t_max, 0)
    return float(traj.total_cost[pi - 1])


# ---------------------------------------------------------- sensitivity


SENSITIVITY_HEADER = ("sigma_opp", "distance", "dwell", "control_norm")


def policy_sensitivity_sweep(
    policy: TriggerPolicy,
    spec: GameSpec,
    sigma_opp: Sequence[float],
    distances: Sequence[float],
    velocity: Sequence[float] | None = None,
    theta_opp: Sequence[float] | None = None,
    direction: Sequence[float] | None = None,
) -> np.ndarray:
    """Evaluate (dwell, |param|) of ``policy`` on its own boundary over (sigma_opp, distance).

    The position error is ``distance * direction`` (unit vector, default the
    first axis); velocities and the opponent's held parameter stay at the
    given slice values (zero by default). Returns rows
    (sigma_opp, distance, dwell, control_norm).
    """
    lay = spec.layout
    own = policy.owner
    opp = 3 - own
    n = lay.n
    axes = n // 2 if n % 2 == 0 and getattr(spec.drift, "kind", "") == "double_integrator_relative" else n
    u = np.zeros(axes)
    u[0] = 1.0
    if direction is not None:
        u = np.asarray(direction, dtype=float) / np.linalg.norm(direction)
    vel = np.zeros(n - axes) if velocity is None else np.asarray(velocity, dtype=float)
    th_opp = np.zeros(lay.m1 if opp == 1 else lay.m2) if theta_opp is None else np.asarray(theta_opp, dtype=float)
    th_own = np.zeros(lay.m1 if own == 1 else lay.m2)
    S, Dm = np.meshgrid(np.asarray(sigma_opp, dtype=float), np.asarray(distances, dtype=float), indexing="ij")
    rows = []
    for s, d in zip(S.ravel(), Dm.ravel()):
        x = np.concatenate([d * u, vel])
        if own == 1:
            rows.append(lay.pack(x, 0.0, th_own, s, th_opp)[0])
        else:
            rows.append(lay.pack(x, s, th_opp, 0.0, th_own)[0])
    states = np.asarray(rows)
    dwell, params = policy.decide(states)
    return np.column_stack([S.ravel(), Dm.ravel(), dwell, np.linalg.norm(params, axis=1)])


def save_sensitivity_csv(table: np.ndarray, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SENSITIVITY_HEADER)
        for row in table:
            w.writerow([f"{v:.12g}" for v in row])
    return path
