"""Simulation of the augmented PDMP.

Between events the physical state follows x' = f(x, u1, u2) with the held
controls, integrated by fixed-step RK4 (step ``spec.rk4_step``) that is
shortened to land exactly on clock expiries, jump proposals and the
horizon. Jumps use Poisson thinning against the declared intensity bound.
Costs follow the discounted functional: running cost weighted by
exp(-gamma t), trigger cost g_i(T) charged at the trigger instant (or at
the end of the dwell under ``trigger_cost_timing="end"``).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .game_model import AugmentedState, DomainError, GameSpec, SpecError, time_to_boundary
from .policies import TriggerPolicy

log = logging.getLogger(__name__)

CLOCK_TOL = 1e-12


class IntensityBoundError(SpecError):
    """Jump intensity evaluated above the declared bound during thinning."""


# -------------------------------------------------------------- integrator


def rk4_step(spec: GameSpec, x, t, dt, e1, th1, e2, th2):
    """One RK4 step of the state and both players' discounted running costs.

    All arguments are batched; ``t`` is absolute time (for the discount
    weight), ``e_i`` the elapsed time since player i's last trigger.
    Returns (x_new, dc1, dc2).
    """
    p1, p2 = spec.players
    gam = spec.discount
    law1, law2 = p1.control_law, p2.control_law
    static = getattr(law1, "time_invariant", False) and getattr(law2, "time_invariant", False)
    if static:
        u1s, u2s = law1(e1, th1), law2(e2, th2)

    def deriv(xx, s):
        if static:
            u1, u2 = u1s, u2s
        else:
            u1, u2 = law1(e1 + s, th1), law2(e2 + s, th2)
        w = np.exp(-gam * (t + s))
        return spec.drift(xx, u1, u2), w * p1.running_cost(xx, u1, u2), w * p2.running_cost(xx, u1, u2)

    h = dt[:, None]
    zero = np.zeros_like(dt)
    k1 = deriv(x, zero)
    k2 = deriv(x + 0.5 * h * k1[0], 0.5 * dt)
    k3 = deriv(x + 0.5 * h * k2[0], 0.5 * dt)
    k4 = deriv(x + h * k3[0], dt)
    x_new = x + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    dc1 = dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    dc2 = dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    return x_new, dc1, dc2


def _controls(spec: GameSpec, e1, th1, e2, th2):
    return spec.players[0].control_law(e1, th1), spec.players[1].control_law(e2, th2)


def propagate(
    spec: GameSpec,
    x: np.ndarray,
    th1: np.ndarray,
    th2: np.ndarray,
    horizon: np.ndarray,
    rng: np.random.Generator | None = None,
    e1: np.ndarray | None = None,
    e2: np.ndarray | None = None,
):
    """Flow (with thinning jumps when the game is stochastic) for ``horizon`` time.

    Vectorized over B paths sharing one generator. Costs are discounted
    relative to the start of the interval. Returns (x_end, c1, c2, n_jumps).
    """
    x = np.array(x, dtype=float, copy=True)
    B = x.shape[0]
    horizon = np.broadcast_to(np.asarray(horizon, dtype=float), (B,)).copy()
    e1 = np.zeros(B) if e1 is None else np.array(e1, dtype=float)
    e2 = np.zeros(B) if e2 is None else np.array(e2, dtype=float)
    t = np.zeros(B)
    c1, c2 = np.zeros(B), np.zeros(B)
    jumps = np.zeros(B, dtype=np.int64)
    lam_max = spec.intensity_bound
    stochastic = not spec.is_deterministic
    if stochastic and rng is None:
        raise ValueError("a generator is required for stochastic games")
    cand = rng.exponential(1.0 / lam_max, B) if stochastic else np.full(B, np.inf)
    h = spec.rk4_step
    while True:
        act = np.flatnonzero(horizon - t > CLOCK_TOL)
        if act.size == 0:
            break
        dt = np.minimum(np.minimum(h, horizon[act] - t[act]), np.maximum(cand[act] - t[act], 0.0))
        xs, d1, d2 = rk4_step(spec, x[act], t[act], dt, e1[act] + t[act], th1[act], e2[act] + t[act], th2[act])
        x[act] = spec.clamp_state(xs)
        c1[act] += d1
        c2[act] += d2
        t[act] += dt
        if stochastic:
            hit = act[cand[act] - t[act] <= CLOCK_TOL]
            if hit.size:
                u1, u2 = _controls(spec, e1[hit] + t[hit], th1[hit], e2[hit] + t[hit], th2[hit])
                lam = np.asarray(spec.jump_intensity(x[hit], u1, u2), dtype=float)
                if np.any(lam > lam_max * (1 + 1e-12)):
                    raise IntensityBoundError(f"intensity {lam.max()} above declared bound {lam_max}")
                acc = rng.random(hit.size) * lam_max < lam
                if np.any(acc):
                    j = hit[acc]
                    x[j] = spec.jump_kernel(x[j], u1[acc], u2[acc], rng)
                    jumps[j] += 1
                cand[hit] = t[hit] + rng.exponential(1.0 / lam_max, hit.size)
    return x, c1, c2, jumps


# ------------------------------------------------------------ single steps


def flow_step(spec: GameSpec, chi: AugmentedState, dt: float, elapsed: tuple[float, float] = (0.0, 0.0)) -> AugmentedState:
    """Advance chi by dt of jump-free flow; clocks decay at unit rate."""
    if not 0 < dt <= time_to_boundary(chi) + CLOCK_TOL:
        raise DomainError(f"dt={dt} must lie in (0, time_to_boundary={time_to_boundary(chi)}]")
    det = spec.with_(intensity_bound=0.0)
    x, _, _, _ = propagate(det, chi.x[None, :], chi.theta1[None, :], chi.theta2[None, :], np.array([dt]),
                           e1=np.array([elapsed[0]]), e2=np.array([elapsed[1]]))
    return AugmentedState(x[0], max(chi.sigma1 - dt, 0.0), chi.theta1, max(chi.sigma2 - dt, 0.0), chi.theta2)


def sample_jump_time(spec: GameSpec, chi: AugmentedState, horizon: float, rng_seed, elapsed=(0.0, 0.0)):
    """First jump within ``horizon`` by thinning, or None.

    Returns (time, post-jump AugmentedState) on acceptance.
    """
    if horizon > time_to_boundary(chi) + CLOCK_TOL:
        raise DomainError("horizon exceeds the time to the next trigger boundary")
    lam_max = spec.intensity_bound
    if spec.is_deterministic:
        return None
    rng = np.random.default_rng(rng_seed)
    det = spec.with_(intensity_bound=0.0)
    x = chi.x[None, :].copy()
    th1, th2 = chi.theta1[None, :], chi.theta2[None, :]
    t = 0.0
    while True:
        cand = t + rng.exponential(1.0 / lam_max)
        if cand > horizon:
            return None
        x, _, _, _ = propagate(det, x, th1, th2, np.array([cand - t]), e1=np.array([elapsed[0] + t]), e2=np.array([elapsed[1] + t]))
        t = cand
        u1, u2 = _controls(spec, np.array([elapsed[0] + t]), th1, np.array([elapsed[1] + t]), th2)
        lam = float(np.asarray(spec.jump_intensity(x, u1, u2))[0])
        if lam > lam_max * (1 + 1e-12):
            raise IntensityBoundError(f"intensity {lam} above declared bound {lam_max} at x={x[0].tolist()}")
        if rng.random() * lam_max < lam:
            y = np.asarray(spec.jump_kernel(x, u1, u2, rng), dtype=float)[0]
            post = AugmentedState(y, chi.sigma1 - t, chi.theta1, chi.sigma2 - t, chi.theta2)
            return t, post


# ----------------------------------------------------------------- rollouts


@dataclass
class TriggerEvent:
    t: float
    player: int
    chosen_dwell: float
    chosen_param: np.ndarray
    cost: float
    simultaneous: bool
    pre_state: np.ndarray
    post_state: np.ndarray

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "player": self.player,
            "simultaneous": self.simultaneous,
            "chosen_dwell": self.chosen_dwell,
            "chosen_param": np.asarray(self.chosen_param).tolist(),
            "cost": self.cost,
            "pre_state": np.asarray(self.pre_state).tolist(),
            "post_state": np.asarray(self.post_state).tolist(),
        }


@dataclass
class Trajectory:
    spec: GameSpec
    times: np.ndarray
    states: np.ndarray
    events: list[TriggerEvent]
    jumps: list[tuple[float, np.ndarray, np.ndarray]]
    discounted_running_cost: np.ndarray
    discounted_trigger_cost: np.ndarray

    @property
    def total_cost(self) -> np.ndarray:
        return self.discounted_running_cost + self.discounted_trigger_cost

    def trigger_counts(self) -> tuple[int, int]:
        return tuple(sum(1 for e in self.events if e.player == i) for i in (1, 2))

    def to_csv(self, path: str | Path) -> Path:
        lay = self.spec.layout
        names = ["t"] + [f"x{i}" for i in range(lay.n)] + ["sigma1", "sigma2"]
        names += [f"theta1_{j}" for j in range(lay.m1)] + [f"theta2_{j}" for j in range(lay.m2)]
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for t, s in zip(self.times, self.states):
                row = [t, *s[lay.x], s[lay.sigma1], s[lay.sigma2], *s[lay.theta1], *s[lay.theta2]]
                w.writerow([f"{v:.17g}" for v in row])
        return path

    def events_json(self) -> dict:
        return {
            "events": [e.to_json() for e in self.events],
            "jumps": [{"t": t, "pre": a.tolist(), "post": b.tolist()} for t, a, b in self.jumps],
            "discounted_running_cost": self.discounted_running_cost.tolist(),
            "discounted_trigger_cost": self.discounted_trigger_cost.tolist(),
        }

    def to_event_log(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.events_json(), indent=1))
        return path


@dataclass
class BatchResult:
    running_cost: np.ndarray  # (B, 2)
    trigger_cost: np.ndarray  # (B, 2)
    trigger_counts: np.ndarray  # (B, 2)
    final_states: np.ndarray
    jump_counts: np.ndarray

    @property
    def total_cost(self) -> np.ndarray:
        return self.running_cost + self.trigger_cost


def _decide(policy: TriggerPolicy, spec: GameSpec, player: int, states: np.ndarray):
    dwell, params = policy.decide(states)
    dwell = np.asarray(dwell, dtype=float).reshape(-1)
    params = np.atleast_2d(np.asarray(params, dtype=float))
    if np.any(~np.isfinite(dwell)) or np.any(~np.isfinite(params)):
        raise ValueError(f"policy of player {player} returned a non-finite decision")
    p = spec.player(player)
    lo, hi = p.dwell_bounds
    if np.any((dwell < lo - CLOCK_TOL) | (dwell > hi + CLOCK_TOL)):
        log.warning("player %d dwell outside [%g, %g]; clamped", player, lo, hi)
    if np.any((params < p.param_lower - 1e-12) | (params > p.param_upper + 1e-12)):
        log.warning("player %d parameter outside its box; clipped", player)
    return np.clip(dwell, lo, hi), p.clip_params(params)


def simulate(
    spec: GameSpec,
    chi0: np.ndarray,
    policy1: TriggerPolicy,
    policy2: TriggerPolicy,
    t_max: float,
    seeds: Sequence[int],
    record: bool = False,
):
    """Event-driven simulation of B independent trajectories.

    ``chi0`` holds (B, D) initial augmented states; initial commitments are
    treated as made at t = 0 (elapsed time zero). A clock at 0 forces an
    immediate decision. Simultaneous expiries query both policies with the
    same pre-decision state. Each trajectory draws its jump randomness from
    its own seed, so a trajectory does not depend on its batch companions.
    Returns a BatchResult, plus recorded (times, states, events, jumps)
    when ``record`` is set (B must be 1).
    """
    lay = spec.layout
    chi0 = np.atleast_2d(np.asarray(chi0, dtype=float))
    B = chi0.shape[0]
    if record and B != 1:
        raise ValueError("recording is only supported for a single trajectory")
    seeds = list(seeds)
    if len(seeds) != B:
        raise ValueError("one seed per trajectory is required")
    gam = spec.discount
    x = chi0[:, lay.x].copy()
    sig = np.stack([chi0[:, lay.sigma1], chi0[:, lay.sigma2]], axis=1).copy()
    th = [chi0[:, lay.theta1].copy(), chi0[:, lay.theta2].copy()]
    dwell = sig.copy()
    t = np.zeros(B)
    run = np.zeros((B, 2))
    trig = np.zeros((B, 2))
    counts = np.zeros((B, 2), dtype=np.int64)
    njumps = np.zeros(B, dtype=np.int64)
    lam_max = spec.intensity_bound
    stochastic = not spec.is_deterministic
    rngs = [np.random.default_rng(s) for s in seeds]
    cand = np.array([r.exponential(1.0 / lam_max) for r in rngs]) if stochastic else np.full(B, np.inf)
    h = spec.rk4_step
    policies = (policy1, policy2)
    clamped_once = False

    times: list[float] = []
    states: list[np.ndarray] = []
    events: list[TriggerEvent] = []
    jumps: list = []

    def pack(idx):
        return np.hstack([x[idx], sig[idx, :1], th[0][idx], sig[idx, 1:], th[1][idx]])

    def triggers():
        live = t < t_max - CLOCK_TOL
        exp1 = live & (sig[:, 0] <= CLOCK_TOL)
        exp2 = live & (sig[:, 1] <= CLOCK_TOL)
        if not (exp1.any() or exp2.any()):
            return
        both = exp1 & exp2
        groups = []
        for player, mask in ((1, exp1), (2, exp2)):
            idx = np.flatnonzero(mask)
            if idx.size:
                pre = pack(idx)
                groups.append((player, idx, pre, _decide(policies[player - 1], spec, player, pre)))
        for player, idx, pre, (d, p) in groups:
            k = player - 1
            sig[idx, k] = d
            dwell[idx, k] = d
            th[k][idx] = p
            charge = spec.trigger_charge(player, d) * np.exp(-gam * t[idx])
            trig[idx, k] += charge
            counts[idx, k] += 1
            if record:
                for j, b in enumerate(idx):
                    events.append(TriggerEvent(float(t[b]), player, float(d[j]), p[j].copy(), float(charge[j]),
                                               bool(both[b]), pre[j].copy(), None))
        if record:
            post = pack(np.array([0]))[0]
            for e in events:
                if e.post_state is None:
                    e.post_state = post.copy()

    triggers()
    if record:
        times.append(0.0)
        states.append(pack(np.array([0]))[0])

    while True:
        act = np.flatnonzero(t_max - t > CLOCK_TOL)
        if act.size == 0:
            break
        dt = np.minimum.reduce([np.full(act.size, h), sig[act, 0], sig[act, 1], t_max - t[act], cand[act] - t[act]])
        dt = np.maximum(dt, 0.0)
        e1 = dwell[act, 0] - sig[act, 0]
        e2 = dwell[act, 1] - sig[act, 1]
        xs, d1, d2 = rk4_step(spec, x[act], t[act], dt, e1, th[0][act], e2, th[1][act])
        xc = spec.clamp_state(xs)
        if not clamped_once and not np.array_equal(xc, xs):
            log.warning("state left the box during flow; clamped")
            clamped_once = True
        x[act] = xc
        run[act, 0] += d1
        run[act, 1] += d2
        t[act] += dt
        sig[act] -= dt[:, None]
        sig[sig <= CLOCK_TOL] = 0.0
        if stochastic:
            hit = act[cand[act] - t[act] <= CLOCK_TOL]
            for b in hit:
                e1b = np.array([dwell[b, 0] - sig[b, 0]])
                e2b = np.array([dwell[b, 1] - sig[b, 1]])
                u1, u2 = _controls(spec, e1b, th[0][b:b + 1], e2b, th[1][b:b + 1])
                lam = float(np.asarray(spec.jump_intensity(x[b:b + 1], u1, u2))[0])
                if lam > lam_max * (1 + 1e-12):
                    raise IntensityBoundError(f"intensity {lam} above declared bound {lam_max}")
                if rngs[b].random() * lam_max < lam:
                    pre = x[b].copy()
                    x[b] = np.asarray(spec.jump_kernel(x[b:b + 1], u1, u2, rngs[b]), dtype=float)[0]
                    njumps[b] += 1
                    if record:
                        jumps.append((float(t[b]), pre, x[b].copy()))
                cand[b] = t[b] + rngs[b].exponential(1.0 / lam_max)
        triggers()
        if record:
            times.append(float(t[0]))
            states.append(pack(np.array([0]))[0])

    res = BatchResult(run, trig, counts, pack(np.arange(B)), njumps)
    if record:
        return res, (np.asarray(times), np.asarray(states), events, jumps)
    return res


def rollout(
    spec: GameSpec,
    chi0: AugmentedState,
    policy1: TriggerPolicy,
    policy2: TriggerPolicy,
    t_max: float,
    rng_seed: int = 0,
) -> Trajectory:
    """Single recorded trajectory from chi0 up to t_max."""
    res, (times, states, events, jumps) = simulate(
        spec, chi0.to_vector()[None, :], policy1, policy2, t_max, [rng_seed], record=True
    )
    return Trajectory(spec, times, states, events, jumps, res.running_cost[0], res.trigger_cost[0])


def monte_carlo_costs(
    spec: GameSpec,
    chi0: np.ndarray,
    policy1: TriggerPolicy,
    policy2: TriggerPolicy,
    t_max: float,
    n_rollouts: int,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error of both players' discounted costs per initial state.

    Seeds are derived from ``seed`` with a SeedSequence so that runs are
    reproducible. Returns arrays of shape (len(chi0), 2).
    """
    chi0 = np.atleast_2d(chi0)
    S = chi0.shape[0]
    reps = 1 if spec.is_deterministic else n_rollouts
    child = np.random.SeedSequence(seed).generate_state(S * reps)
    X = np.repeat(chi0, reps, axis=0)
    res = simulate(spec, X, policy1, policy2, t_max, child.tolist())
    tot = res.total_cost.reshape(S, reps, 2)
    mean = tot.mean(axis=1)
    se = tot.std(axis=1, ddof=1) / np.sqrt(reps) if reps > 1 else np.zeros_like(mean)
    return mean, se
