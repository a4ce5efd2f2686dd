"""Leader optimization through the follower's fixed point.

The leader's policy is a smooth head pi1(.; xi) on its boundary: features
phi = (1, x, sigma2, theta2) (rescaled to [-1, 1]) feed sigmoids that map
into the dwell interval and the parameter box. The follower's parameters
omega are the node values of its value grid.

The grid objective is J1(xi) = mean_{chi0} V1(chi0), where V1 evaluates the
leader's cost along the follower's response: hard argmin in plain mode,
softmax weights softmax(-Q / temperature) in smoothed mode (in which case
the follower's value is the matching soft-min fixed point). Gradients use
implicit differentiation of both fixed points, with adjoints summed as
truncated Neumann series; central finite differences of the same objective
serve as the fallback and as the oracle.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .follower_dp import (
    DEFAULT_MC_PATHS,
    NODE_TOL,
    StackelbergOperator,
    _tiebreak_argmin,
    build_flow_block,
    iterate_to_fixed_point,
    node_classes,
    on_grid_axes,
    reset_points,
    softmin,
)
from .game_model import GameSpec
from .pdmp_sim import monte_carlo_costs
from .policies import CallablePolicy, TablePolicy, TriggerPolicy
from .primitives import trigger_cost_derivative
from .value_grid import GridSpec, ValueGrid, interpolation_gradient_weights, interpolation_matrix, weights_matrix

log = logging.getLogger(__name__)


class UnconvergedError(RuntimeError):
    pass


class AmbiguousArgminError(RuntimeError):
    """Follower argmin not unique by the required margin and smoothing is disabled."""

    def __init__(self, msg: str, nodes: np.ndarray):
        super().__init__(msg)
        self.nodes = nodes


# ------------------------------------------------------------- policy head


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(eq=False)
class LeaderPolicyHead:
    """Smooth leader policy pi1(chi; xi).

    ``xi`` is laid out as [w_dwell (F), w_param_1 (F), ..., w_param_m1 (F)]
    with F = 1 + n + 1 + m2 features. ``mask`` marks trainable entries.
    """

    spec: GameSpec
    mask: np.ndarray | None = None

    def __post_init__(self):
        lay = self.spec.layout
        self.n_features = 1 + lay.n + 1 + lay.m2
        if self.mask is None:
            self.mask = np.ones(self.dim, dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool).reshape(self.dim)
        s = self.spec
        self._x_mid = (s.state_lower + s.state_upper) / 2
        self._x_half = np.where(s.state_upper > s.state_lower, (s.state_upper - s.state_lower) / 2, 1.0)
        p2 = s.player(2)
        self._t2 = p2.t_over
        self._th_mid = (p2.param_lower + p2.param_upper) / 2
        self._th_half = np.where(p2.param_upper > p2.param_lower, (p2.param_upper - p2.param_lower) / 2, 1.0)

    @property
    def dim(self) -> int:
        return (1 + self.spec.layout.m1) * (1 + self.spec.layout.n + 1 + self.spec.layout.m2)

    def features(self, states: np.ndarray) -> np.ndarray:
        lay = self.spec.layout
        states = np.atleast_2d(states)
        return np.hstack([
            np.ones((states.shape[0], 1)),
            (states[:, lay.x] - self._x_mid) / self._x_half,
            states[:, [lay.sigma2]] / self._t2,
            (states[:, lay.theta2] - self._th_mid) / self._th_half,
        ])

    def evaluate(self, xi: np.ndarray, states: np.ndarray, jacobian: bool = False):
        """(dwell, params) and optionally d dwell/d xi (B, d) and d params/d xi (B, m1, d)."""
        xi = np.asarray(xi, dtype=float).reshape(self.dim)
        F = self.n_features
        m1 = self.spec.layout.m1
        p1 = self.spec.player(1)
        phi = self.features(states)
        W = xi.reshape(1 + m1, F)
        s = _sigmoid(phi @ W.T)  # (B, 1 + m1)
        lo = np.concatenate([[p1.t_under], p1.param_lower])
        hi = np.concatenate([[p1.t_over], p1.param_upper])
        out = lo + (hi - lo) * s
        if not jacobian:
            return out[:, 0], out[:, 1:]
        B = phi.shape[0]
        J = np.zeros((B, 1 + m1, self.dim))
        ds = (hi - lo) * s * (1 - s)
        for j in range(1 + m1):
            J[:, j, j * F:(j + 1) * F] = ds[:, j:j + 1] * phi
        J[:, :, ~self.mask] = 0.0
        return out[:, 0], out[:, 1:], J

    def policy(self, xi: np.ndarray) -> TriggerPolicy:
        xi = np.array(xi, dtype=float, copy=True)
        return CallablePolicy(1, lambda S: self.evaluate(xi, S))

    def table(self, xi: np.ndarray, grid: GridSpec) -> TablePolicy:
        """The policy tabulated on the leader's boundary slice of ``grid``."""
        nodes = grid.nodes()
        k = grid.layout.sigma1
        on = nodes[:, k] == grid.axes[k][0]
        d, p = self.evaluate(xi, nodes[on])
        shape = tuple(n for a, n in enumerate(grid.shape) if a != k)
        return TablePolicy(1, grid, d.reshape(shape), p.reshape(shape + (p.shape[1],)))


@dataclass
class SmoothingConfig:
    temperature: float = 0.05
    margin: float = 1e-2
    enabled: bool = True
    force_soft: bool = False
    anneal: float = 1.0
    min_temperature: float = 1e-3

    def at(self, k: int) -> "SmoothingConfig":
        t = max(self.temperature * self.anneal**k, self.min_temperature)
        return SmoothingConfig(t, self.margin, self.enabled, self.force_soft, self.anneal, self.min_temperature)


# ----------------------------------------------------------- linear algebra


def neumann_terms(beta: float, tail_tol: float = 1e-6) -> int:
    """Smallest K with beta^floor(K/2) / (1 - beta) < tail_tol."""
    if not 0 <= beta < 1:
        raise ValueError("contraction modulus must lie in [0, 1)")
    if beta == 0:
        return 1
    half = math.floor(math.log(tail_tol * (1 - beta)) / math.log(beta)) + 1
    return 2 * max(half, 0)


def neumann_solve(J, b: np.ndarray, beta: float, tail_tol: float = 1e-6, transpose: bool = False) -> tuple[np.ndarray, int]:
    """x = sum_{k=0}^{K} A^k b for A = J (or J^T), i.e. the solution of (I - A) x = b."""
    K = neumann_terms(beta, tail_tol)
    A = J.T if transpose else J
    if sp.issparse(A):
        A = A.tocsr()
    term = np.array(b, dtype=float, copy=True)
    x = term.copy()
    for _ in range(K):
        term = A @ term
        x += term
        if not np.any(term):
            break
    return x, K


def implicit_gradient(dJ_dxi, dJ_domega, S_omega, S_xi, beta: float, tail_tol: float = 1e-6) -> np.ndarray:
    """dJ/dxi + dJ/domega (I - S_omega)^{-1} S_xi, via the adjoint Neumann series."""
    nu, _ = neumann_solve(S_omega, np.asarray(dJ_domega, dtype=float), beta, tail_tol, transpose=True)
    return np.asarray(dJ_dxi, dtype=float) + np.asarray(S_xi).T @ nu


def solve_affine_fixed_point(J: sp.spmatrix, b: np.ndarray, tol: float = 1e-12, max_iters: int = 100_000, x0=None):
    """Fixed point of x = b + J x for a (two-step) contraction J."""
    x, res, ok = iterate_to_fixed_point(lambda x: b + J @ x, np.zeros_like(b) if x0 is None else x0, tol, max_iters)
    if not ok:
        raise UnconvergedError(f"affine fixed point did not converge (residual {res[-1]:.3g})")
    return x


# ------------------------------------------------------------ the problem


@dataclass
class Evaluation:
    xi: np.ndarray
    objective: float
    omega: np.ndarray
    v1: np.ndarray
    weights: np.ndarray
    mode: str
    sweeps: int
    operator: StackelbergOperator


@dataclass
class HypergradientResult:
    gradient: np.ndarray
    direct: np.ndarray
    indirect: np.ndarray
    objective: float
    mode: str
    temperature: float | None
    min_margin: float
    neumann_terms: int
    ambiguous_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


class LeaderProblem:
    """Leader's grid objective and its derivatives for a fixed game, grid and initial-state set.

    The semigroup data of the flow nodes do not depend on the leader and are
    assembled once.
    """

    def __init__(
        self,
        spec: GameSpec,
        grid: GridSpec,
        head: LeaderPolicyHead,
        chi0_set: np.ndarray,
        n_mc: int = DEFAULT_MC_PATHS,
        seed: int = 0,
        inner_tol: float = 1e-10,
        max_sweeps: int = 100_000,
    ):
        grid.check_against(spec)
        self.spec, self.grid, self.head = spec, grid, head
        self.chi0 = np.atleast_2d(np.asarray(chi0_set, dtype=float))
        self.a = np.asarray(interpolation_matrix(grid, self.chi0).mean(axis=0)).ravel()
        self.flow = build_flow_block(spec, grid, node_classes(grid).flow, n_mc, seed)
        self.beta = spec.contraction_modulus
        self.inner_tol = inner_tol
        self.max_sweeps = max_sweeps
        self.nodes = grid.nodes()

    def operator(self, xi) -> StackelbergOperator:
        return StackelbergOperator(self.spec, self.grid, self.head.policy(xi), flow=self.flow)

    # -- follower fixed points ---------------------------------------------

    def follower_fixed_point(self, op: StackelbergOperator, mode: str, temperature: float, omega0=None, tol=None):
        tol = self.inner_tol if tol is None else tol
        start = np.zeros(self.grid.size) if omega0 is None else omega0
        step = op.sweep if mode == "hard" else (lambda v: op.soft_sweep(v, temperature)[0])
        omega, res, ok = iterate_to_fixed_point(step, start, tol, self.max_sweeps)
        if not ok:
            raise UnconvergedError(f"follower fixed point did not converge (residual {res[-1]:.3g})")
        return omega, len(res)

    def weights(self, op: StackelbergOperator, omega: np.ndarray, mode: str, temperature: float) -> np.ndarray:
        Q = op.q_values(omega)
        if mode == "hard":
            return op.one_hot(_tiebreak_argmin(Q))
        return softmin(Q, temperature)[1]

    def leader_cost_vector(self, op: StackelbergOperator) -> np.ndarray:
        b = np.zeros(self.grid.size)
        c = op.classes
        b[c.flow] = self.flow.c1
        b[c.gamma1] = op.leader_charge_g1
        b[c.corner] = op.leader_charge_corner
        return b

    def leader_values(self, op: StackelbergOperator, weights: np.ndarray, x0=None) -> np.ndarray:
        J = op.jacobian(weights)
        return solve_affine_fixed_point(J, self.leader_cost_vector(op), self.inner_tol, self.max_sweeps, x0)

    def choose_mode(self, op: StackelbergOperator, omega: np.ndarray, smoothing: SmoothingConfig):
        gaps = op.margins(omega)
        ambiguous = op.int_rows[gaps < smoothing.margin]
        if smoothing.force_soft and smoothing.enabled:
            return "soft", gaps, ambiguous
        if ambiguous.size == 0:
            return "hard", gaps, ambiguous
        if not smoothing.enabled:
            raise AmbiguousArgminError(
                f"{ambiguous.size} follower decision node(s) have an argmin margin below {smoothing.margin}; "
                f"first nodes: {ambiguous[:10].tolist()}", ambiguous)
        return "soft", gaps, ambiguous

    def evaluate(self, xi, mode: str = "hard", temperature: float = 0.05, omega0=None) -> Evaluation:
        op = self.operator(xi)
        omega, sweeps = self.follower_fixed_point(op, mode, temperature, omega0)
        W = self.weights(op, omega, mode, temperature)
        v1 = self.leader_values(op, W)
        return Evaluation(np.array(xi, dtype=float), float(self.a @ v1), omega, v1, W, mode, sweeps, op)

    def objective(self, xi, mode: str = "hard", temperature: float = 0.05, omega0=None) -> float:
        return self.evaluate(xi, mode, temperature, omega0).objective

    # -- derivatives -------------------------------------------------------

    def _coord_grads(self, pts: np.ndarray):
        """Sparse d interp / d(sigma1, theta1...) matrices at ``pts``."""
        lay = self.grid.layout
        wrt = [lay.sigma1] + list(range(lay.theta1.start, lay.theta1.stop))
        active = sorted(set(on_grid_axes(self.grid, pts)) | set(wrt))
        idx, grads = interpolation_gradient_weights(self.grid, pts, wrt, active)
        return [weights_matrix(self.grid, idx, g) for g in grads]

    def _leader_jacobian(self, xi, rows: np.ndarray):
        d, p, D = self.head.evaluate(xi, self.nodes[rows], jacobian=True)
        return D  # (R, 1 + m1, dim)

    def hypergradient(
        self,
        xi,
        omega_star: np.ndarray | None = None,
        smoothing: SmoothingConfig | None = None,
        tail_tol: float = 1e-6,
    ) -> HypergradientResult:
        smoothing = smoothing or SmoothingConfig()
        op = self.operator(xi)
        if omega_star is None:
            omega_star, _ = self.follower_fixed_point(op, "hard", smoothing.temperature)
        mode, gaps, ambiguous = self.choose_mode(op, omega_star, smoothing)
        tau = smoothing.temperature
        omega = omega_star
        if mode == "soft":
            omega, _ = self.follower_fixed_point(op, "soft", tau, omega0=omega_star)
        W = self.weights(op, omega, mode, tau)
        J = op.jacobian(W).tocsr()
        v1 = solve_affine_fixed_point(J, self.leader_cost_vector(op), self.inner_tol, self.max_sweeps)
        mu, K = neumann_solve(J, self.a, self.beta, tail_tol, transpose=True)

        c = op.classes
        NI, Kc = op.n_int, op.K
        ir = op.int_rows
        corner_pos = np.arange(NI - op.n_corner, NI)
        Ysoft = None
        if mode == "soft":
            Y = (op.M @ v1).reshape(Kc, NI)
            ybar = np.sum(W * Y, axis=0)
            Ysoft = W * (ybar[None, :] - Y) / tau  # d(sum_k p_k y_k)/dQ_j
            coef = (Ysoft * mu[ir][None, :]).ravel()
            rhs = op.M.T @ coef
        else:
            rhs = np.zeros(self.grid.size)
        nu, _ = neumann_solve(J, rhs, self.beta, tail_tol, transpose=True)

        dim = self.head.dim
        direct = np.zeros(dim)
        indirect = np.zeros(dim)
        timing = self.spec.trigger_cost_timing
        g1 = self.spec.player(1).trigger_cost

        def charge_slope(T):
            s = trigger_cost_derivative(g1, T)
            if timing == "end":
                gam = self.spec.discount
                s = s * np.exp(-gam * T) - gam * np.exp(-gam * T) * np.asarray(g1(T))
            return s

        # boundary rows of the leader only
        if c.gamma1.size:
            D = self._leader_jacobian(xi, c.gamma1)
            d1, p1 = op.leader_g1
            pts = reset_points(self.grid, self.nodes[c.gamma1], 1, d1, p1)
            G = self._coord_grads(pts)
            gv1 = np.stack([g @ v1 for g in G], axis=1)
            gom = np.stack([g @ omega for g in G], axis=1)
            m = mu[c.gamma1]
            direct += np.einsum("r,ra,rad->d", m, gv1, D) + (m * charge_slope(d1)) @ D[:, 0, :]
            indirect += np.einsum("r,ra,rad->d", nu[c.gamma1], gom, D)

        # corner rows: leader reset then follower candidates
        if op.n_corner:
            D = self._leader_jacobian(xi, c.corner)
            dc, pc = op.leader_corner
            pre = op.int_pre[corner_pos]
            m = mu[c.corner]
            n_ = nu[c.corner]
            direct += (m * charge_slope(dc)) @ D[:, 0, :]
            for k in range(Kc):
                post = reset_points(self.grid, pre, 2, np.full(pre.shape[0], op.cand_dwell[k]), np.tile(op.cand_params[k], (pre.shape[0], 1)))
                G = self._coord_grads(post)
                gv1 = np.stack([g @ v1 for g in G], axis=1)
                gom = np.stack([g @ omega for g in G], axis=1)
                wk = W[k, corner_pos]
                direct += np.einsum("r,ra,rad->d", m * wk, gv1, D)
                if Ysoft is not None:
                    direct += np.einsum("r,ra,rad->d", m * Ysoft[k, corner_pos], gom, D)
                indirect += np.einsum("r,ra,rad->d", n_ * wk, gom, D)

        grad = direct + indirect
        return HypergradientResult(
            grad, direct, indirect, float(self.a @ v1), mode, tau if mode == "soft" else None,
            float(gaps.min()) if gaps.size else float("inf"), K, ambiguous,
        )

    def finite_difference_gradient(self, xi, mode: str, temperature: float = 0.05, step: float = 1e-3, omega0=None) -> np.ndarray:
        """Central differences of the grid objective with tightly solved inner fixed points."""
        xi = np.asarray(xi, dtype=float)
        g = np.zeros_like(xi)
        for i in np.flatnonzero(self.head.mask):
            e = np.zeros_like(xi)
            e[i] = step
            fp = self.objective(xi + e, mode, temperature, omega0)
            fm = self.objective(xi - e, mode, temperature, omega0)
            g[i] = (fp - fm) / (2 * step)
        return g


# ------------------------------------------------------- Monte Carlo cost


def leader_objective(
    problem: LeaderProblem,
    xi,
    omega_star: np.ndarray | ValueGrid,
    n_rollouts: int = 32,
    seed: int = 0,
    t_max: float | None = None,
    residual_tol: float = 1e-5,
    force: bool = False,
) -> float:
    """Monte Carlo average of the leader's discounted cost against the follower's greedy policy.

    The follower policy is extracted from ``omega_star``; unless ``force`` is
    set, ``omega_star`` must be a fixed point of the follower operator for
    pi1(.; xi) up to ``residual_tol``.
    """
    omega = omega_star.values if isinstance(omega_star, ValueGrid) else np.asarray(omega_star, dtype=float)
    op = problem.operator(xi)
    res = float(np.max(np.abs(op.sweep(omega) - omega)))
    if res > residual_tol and not force:
        raise UnconvergedError(f"omega_star is not a fixed point (residual {res:.3g} > {residual_tol})")
    pi2 = op.follower_policy(omega)
    pi1 = problem.head.policy(xi)
    spec = problem.spec
    t_max = 30.0 / spec.discount if t_max is None else t_max
    mean, _ = monte_carlo_costs(spec, problem.chi0, pi1, pi2, t_max, n_rollouts, seed)
    return float(mean[:, 0].mean())


# ------------------------------------------------------------ optimization


@dataclass
class OptimizationHistory:
    iters: list[int] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    inner_sweeps: list[int] = field(default_factory=list)
    mode: list[str] = field(default_factory=list)
    wall_time: list[float] = field(default_factory=list)
    xi: list[np.ndarray] = field(default_factory=list)
    stopped: str = ""

    def append(self, k, J, g, sweeps, mode, wall, xi):
        self.iters.append(k)
        self.objective.append(float(J))
        self.grad_norm.append(float(g))
        self.inner_sweeps.append(int(sweeps))
        self.mode.append(mode)
        self.wall_time.append(float(wall))
        self.xi.append(np.array(xi, dtype=float))

    @property
    def best(self) -> int:
        """Index of the lowest recorded objective; gradient steps need not decrease it."""
        return int(np.argmin(self.objective))

    def to_csv(self, path: str | Path) -> Path:
        """Deterministic columns only; wall-clock times go to :meth:`timing_csv`."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "J1", "grad_norm", "inner_sweeps", "mode"])
            for row in zip(self.iters, self.objective, self.grad_norm, self.inner_sweeps, self.mode):
                w.writerow([row[0], f"{row[1]:.17g}", f"{row[2]:.17g}", row[3], row[4]])
        return path

    def timing_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "wall_time"])
            for k, t in zip(self.iters, self.wall_time):
                w.writerow([k, f"{t:.6f}"])
        return path


def _schedule(schedule) -> Callable[[int], float]:
    if callable(schedule):
        return schedule
    if np.isscalar(schedule):
        return lambda k: float(schedule)
    seq = list(schedule)
    return lambda k: float(seq[min(k, len(seq) - 1)])


def optimize_leader(
    problem: LeaderProblem,
    xi0,
    schedule=0.1,
    inner_tol: float = 1e-8,
    outer_iters: int = 20,
    grad: str = "implicit",
    objective: str = "grid",
    smoothing: SmoothingConfig | None = None,
    grad_tol: float = 1e-8,
    fd_step: float = 1e-3,
    n_rollouts: int = 16,
    seed: int = 0,
) -> tuple[np.ndarray, OptimizationHistory]:
    """Projected-free gradient descent xi <- xi - alpha_k * grad J1.

    Each outer step warm-starts the follower's value iteration from the
    previous fixed point. The history row k records J1(xi_k) (hard follower
    response; Monte Carlo when ``objective="mc"``), the gradient norm and
    the inner sweep count. Stops after ``outer_iters`` steps or when the
    gradient norm falls below ``grad_tol``.
    """
    if grad not in ("implicit", "fd"):
        raise ValueError("grad must be 'implicit' or 'fd'")
    if objective not in ("grid", "mc"):
        raise ValueError("objective must be 'grid' or 'mc'")
    smoothing = smoothing or SmoothingConfig()
    alpha = _schedule(schedule)
    xi = np.array(xi0, dtype=float, copy=True)
    hist = OptimizationHistory()
    omega = None
    problem.inner_tol = min(problem.inner_tol, inner_tol)
    for k in range(outer_iters + 1):
        t0 = time.perf_counter()
        op = problem.operator(xi)
        try:
            omega, sweeps = problem.follower_fixed_point(op, "hard", smoothing.temperature, omega0=omega, tol=inner_tol)
        except UnconvergedError:
            hist.stopped = "inner value iteration did not converge"
            log.error("aborting: %s at outer step %d", hist.stopped, k)
            break
        if objective == "grid":
            W = problem.weights(op, omega, "hard", smoothing.temperature)
            J = float(problem.a @ problem.leader_values(op, W))
        else:
            J = leader_objective(problem, xi, omega, n_rollouts, seed, residual_tol=max(10 * inner_tol, 1e-6))
        if k == outer_iters:
            hist.append(k, J, float("nan"), sweeps, "", time.perf_counter() - t0, xi)
            hist.stopped = "outer_iters reached"
            break
        sm = smoothing.at(k)
        if grad == "implicit":
            hg = problem.hypergradient(xi, omega, sm)
            g, mode = hg.gradient, hg.mode
        else:
            mode, _, _ = problem.choose_mode(op, omega, sm)
            g = problem.finite_difference_gradient(xi, mode, sm.temperature, fd_step, omega)
        g = np.where(problem.head.mask, g, 0.0)
        gn = float(np.linalg.norm(g))
        hist.append(k, J, gn, sweeps, mode, time.perf_counter() - t0, xi)
        if gn < grad_tol:
            hist.stopped = "gradient below tolerance"
            break
        xi = xi - alpha(k) * g
    return xi, hist
