"""Follower dynamic programming for a committed leader policy.

The follower is player 2 and the leader player 1 (use
:func:`stgames.game_model.swap_players` to solve the mirrored problem).
On a :class:`GridSpec` the Stackelberg operator acts node by node:

* flow nodes (both clocks positive) run the semigroup up to the next
  clock expiry and interpolate the value at the endpoint;
* nodes with only sigma2 = 0 take the cheapest follower reset;
* nodes with only sigma1 = 0 read the value after the leader's reset;
* corner nodes apply the leader's decision, computed from the same
  pre-decision state, and the follower best-responds to it.

Because every positive clock node lies in [T_under, T_over] and resets land
on flow nodes, the discretized operator keeps the two-sweep contraction
modulus exp(-gamma * min T_under). The operator is assembled once per
leader policy as sparse matrices; a sweep is then a handful of sparse
mat-vecs and a column-wise minimum.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .game_model import GameSpec
from .pdmp_sim import propagate
from .policies import TablePolicy, TriggerPolicy
from .value_grid import GridError, GridSpec, ValueGrid, interpolation_weights, interpolate, weights_matrix

log = logging.getLogger(__name__)

DEFAULT_MC_PATHS = 64
TIE_TOL = 1e-12
NODE_TOL = 1e-12


# ------------------------------------------------------------------ helpers


@dataclass(frozen=True)
class NodeClasses:
    flow: np.ndarray
    gamma1: np.ndarray  # sigma1 = 0 < sigma2
    gamma2: np.ndarray  # sigma2 = 0 < sigma1
    corner: np.ndarray

    @property
    def intervention(self) -> np.ndarray:
        """Rows where the follower decides: sigma2 = 0, corner rows last."""
        return np.concatenate([self.gamma2, self.corner])


def node_classes(grid: GridSpec) -> NodeClasses:
    nodes = grid.nodes()
    lay = grid.layout
    z1 = nodes[:, lay.sigma1] == 0.0
    z2 = nodes[:, lay.sigma2] == 0.0
    return NodeClasses(
        np.flatnonzero(~z1 & ~z2), np.flatnonzero(z1 & ~z2), np.flatnonzero(~z1 & z2), np.flatnonzero(z1 & z2)
    )


def require_time_invariant(spec: GameSpec) -> None:
    for i in (1, 2):
        if not getattr(spec.player(i).control_law, "time_invariant", False):
            raise GridError(
                f"player {i}: grid dynamic programming needs a control law that does not depend on elapsed time "
                "(the grid carries no elapsed-time coordinate)"
            )


def on_grid_axes(grid: GridSpec, pts: np.ndarray) -> list[int]:
    """Axes along which at least one point is off the node set."""
    active = []
    for k, ax in enumerate(grid.axes):
        q = np.clip(pts[:, k], ax[0], ax[-1])
        i = np.clip(np.searchsorted(ax, q), 1, ax.size - 1)
        gap = np.minimum(np.abs(q - ax[i - 1]), np.abs(q - ax[i]))
        if np.any(gap > NODE_TOL * (1.0 + np.abs(q))):
            active.append(k)
    return active


def sparse_interp(grid: GridSpec, pts: np.ndarray, chunk: int = 200_000) -> sp.csr_matrix:
    """Interpolation matrix that only spans the axes where points are off-node."""
    pts = np.atleast_2d(pts)
    if pts.shape[0] == 0:
        return sp.csr_matrix((0, grid.size))
    active = on_grid_axes(grid, pts)
    step = max(1, chunk >> len(active))
    blocks = [weights_matrix(grid, *interpolation_weights(grid, pts[a:a + step], active)) for a in range(0, pts.shape[0], step)]
    return sp.vstack(blocks, format="csr")


def reset_points(grid: GridSpec, states: np.ndarray, player: int, dwell: np.ndarray, params: np.ndarray) -> np.ndarray:
    lay = grid.layout
    out = np.array(states, dtype=float, copy=True)
    out[:, lay.sigma(player)] = dwell
    out[:, lay.theta(player)] = params
    return out


def _tiebreak_argmin(Q: np.ndarray) -> np.ndarray:
    """First (lexicographically smallest) candidate within TIE_TOL of the column minimum."""
    qmin = Q.min(axis=0)
    near = Q <= qmin + TIE_TOL * (1.0 + np.abs(qmin))
    return np.argmax(near, axis=0)


def softmin(Q: np.ndarray, temperature: float) -> tuple[np.ndarray, np.ndarray]:
    """Soft minimum over axis 0 and its softmax weights."""
    z = -Q / temperature
    zmax = z.max(axis=0)
    e = np.exp(z - zmax)
    s = e.sum(axis=0)
    return -temperature * (np.log(s) + zmax), e / s


def leader_decisions(spec: GameSpec, policy: TriggerPolicy, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if states.shape[0] == 0:
        return np.zeros(0), np.zeros((0, spec.layout.m1))
    try:
        d, p = policy.decide(states)
    except Exception as exc:  # pragma: no cover - re-raised with context
        raise GridError(f"leader policy failed on boundary nodes: {exc}") from exc
    d = np.asarray(d, dtype=float).reshape(-1)
    p = np.asarray(p, dtype=float).reshape(states.shape[0], -1)
    bad = np.flatnonzero(~np.isfinite(d) | ~np.all(np.isfinite(p), axis=1))
    if bad.size:
        raise GridError(f"leader policy undefined at {bad.size} boundary node(s), first at {states[bad[0]].tolist()}")
    p1 = spec.player(1)
    return np.clip(d, *p1.dwell_bounds), p1.clip_params(p)


# --------------------------------------------------------------- semigroup


@dataclass(eq=False)
class FlowBlock:
    """Semigroup data for the flow nodes of a grid.

    ``F`` averages the endpoint interpolation rows over the Monte Carlo
    paths (a single path when the game is deterministic); ``c1``/``c2`` are
    the matching path-averaged discounted running costs.
    """

    rows: np.ndarray
    tau: np.ndarray
    disc: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    F: sp.csr_matrix
    n_paths: int
    path_F: sp.csr_matrix | None = None
    path_c: tuple[np.ndarray, np.ndarray] | None = None

    def apply(self, v: np.ndarray, player: int = 2) -> np.ndarray:
        c = self.c2 if player == 2 else self.c1
        return c + self.disc * (self.F @ v)

    def standard_error(self, v: np.ndarray, player: int = 2) -> np.ndarray:
        """Per-node Monte Carlo standard error of the flow value for ``v``."""
        if self.path_F is None:
            return np.zeros(self.rows.size)
        c = self.path_c[player - 1]
        samples = (c + np.tile(self.disc, self.n_paths) * (self.path_F @ v)).reshape(self.n_paths, -1)
        return samples.std(axis=0, ddof=1) / math.sqrt(self.n_paths)


def build_flow_block(spec: GameSpec, grid: GridSpec, rows: np.ndarray, n_mc: int = DEFAULT_MC_PATHS, seed: int = 0) -> FlowBlock:
    require_time_invariant(spec)
    lay = grid.layout
    nodes = grid.nodes()[rows]
    tau = np.minimum(nodes[:, lay.sigma1], nodes[:, lay.sigma2])
    paths = 1 if spec.is_deterministic else int(n_mc)
    rng = np.random.default_rng(seed)
    rep = np.tile(nodes, (paths, 1))
    taus = np.tile(tau, paths)
    x, c1, c2, _ = propagate(spec, rep[:, lay.x], rep[:, lay.theta1], rep[:, lay.theta2], taus, rng)
    end = rep.copy()
    end[:, lay.x] = x
    for k in (lay.sigma1, lay.sigma2):
        end[:, k] = np.maximum(rep[:, k] - taus, 0.0)
        end[rep[:, k] - taus <= NODE_TOL, k] = 0.0
    W = sparse_interp(grid, end)
    disc = np.exp(-spec.discount * tau)
    if paths == 1:
        return FlowBlock(rows, tau, disc, c1, c2, W, 1)
    R = rows.size
    avg = sp.hstack([sp.identity(R, format="csr") / paths] * paths, format="csr")
    F = (avg @ W).tocsr()
    return FlowBlock(
        rows, tau, disc, c1.reshape(paths, R).mean(0), c2.reshape(paths, R).mean(0), F, paths, W, (c1, c2)
    )


def semigroup_apply(
    spec: GameSpec, v: ValueGrid, chi, player: int = 2, n_mc: int = DEFAULT_MC_PATHS, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """E[int_0^tau e^{-gamma s} r_player ds + e^{-gamma tau} v(chi(tau))] with tau = min(sigma1, sigma2).

    ``chi`` is a (D,) vector or (B, D) rows. Deterministic games use a single
    integration pass; otherwise ``n_mc`` thinning paths per state are
    averaged. Returns (values, standard errors).
    """
    require_time_invariant(spec)
    lay = spec.layout
    pts = np.atleast_2d(np.asarray(chi.to_vector() if hasattr(chi, "to_vector") else chi, dtype=float))
    tau = np.minimum(pts[:, lay.sigma1], pts[:, lay.sigma2])
    paths = 1 if spec.is_deterministic else int(n_mc)
    rep = np.tile(pts, (paths, 1))
    taus = np.tile(tau, paths)
    x, c1, c2, _ = propagate(spec, rep[:, lay.x], rep[:, lay.theta1], rep[:, lay.theta2], taus, np.random.default_rng(seed))
    end = rep.copy()
    end[:, lay.x] = x
    end[:, lay.sigma1] = np.maximum(rep[:, lay.sigma1] - taus, 0.0)
    end[:, lay.sigma2] = np.maximum(rep[:, lay.sigma2] - taus, 0.0)
    c = c2 if player == 2 else c1
    vals = (c + np.exp(-spec.discount * taus) * interpolate(v, end)).reshape(paths, -1)
    se = vals.std(axis=0, ddof=1) / math.sqrt(paths) if paths > 1 else np.zeros(pts.shape[0])
    return vals.mean(axis=0), se


# ------------------------------------------------------------- boundaries


def _check_candidates(grid: GridSpec, player: int) -> tuple[np.ndarray, np.ndarray]:
    d, P = grid.candidates(player)
    if d.size == 0:
        raise GridError(f"player {player} has an empty candidate set")
    return d, P


def intervene(spec: GameSpec, v: ValueGrid, chi, player: int = 2):
    """min over the grid's candidates of g_player(T) + v(reset state).

    Returns (values, dwell*, param*) for (B, D) rows (scalars for a single
    state). Ties go to the smallest dwell, then the smallest parameter in
    axis order.
    """
    grid = v.grid
    lay = grid.layout
    single = np.ndim(chi) == 1 or hasattr(chi, "to_vector")
    pts = np.atleast_2d(np.asarray(chi.to_vector() if hasattr(chi, "to_vector") else chi, dtype=float))
    if np.any(np.abs(pts[:, lay.sigma(player)]) > NODE_TOL):
        raise GridError(f"intervention requires sigma{player} = 0")
    d, P = _check_candidates(grid, player)
    B, K = pts.shape[0], d.size
    Q = np.empty((K, B))
    charge = spec.trigger_charge(player, d)
    for k in range(K):
        Q[k] = charge[k] + interpolate(v, reset_points(grid, pts, player, np.full(B, d[k]), np.tile(P[k], (B, 1))))
    k = _tiebreak_argmin(Q)
    vals = Q[k, np.arange(B)]
    if single:
        return float(vals[0]), float(d[k[0]]), P[k[0]].copy()
    return vals, d[k], P[k]


def leader_boundary_update(spec: GameSpec, v: ValueGrid, chi, pi1: TriggerPolicy):
    """Value right after the leader's reset (x, T1, theta1, sigma2, theta2) = pi1(chi); no follower cost."""
    lay = v.grid.layout
    single = np.ndim(chi) == 1 or hasattr(chi, "to_vector")
    pts = np.atleast_2d(np.asarray(chi.to_vector() if hasattr(chi, "to_vector") else chi, dtype=float))
    if np.any(np.abs(pts[:, lay.sigma1]) > NODE_TOL):
        raise GridError("leader update requires sigma1 = 0")
    d, p = leader_decisions(spec, pi1, pts)
    out = interpolate(v, reset_points(v.grid, pts, 1, d, p))
    return float(np.atleast_1d(out)[0]) if single else out


@dataclass(eq=False)
class GreedyPolicy(TriggerPolicy):
    """Follower decisions by one-step lookahead on an interpolated value table.

    At a state with both clocks expired the leader's reset pi1(state) is
    applied first, as in the grid operator. Unlike the nearest-node
    :class:`TablePolicy`, this uses the exact continuous state.
    """

    spec: GameSpec
    value: ValueGrid
    pi1: TriggerPolicy
    owner: int = 2

    def decide(self, states):
        pts = np.array(np.atleast_2d(states), dtype=float)
        lay = self.value.grid.layout
        corner = np.abs(pts[:, lay.sigma1]) <= NODE_TOL
        if corner.any():
            d, p = leader_decisions(self.spec, self.pi1, pts[corner])
            pts[corner] = reset_points(self.value.grid, pts[corner], 1, d, p)
        pts[:, lay.sigma2] = 0.0
        _, d, p = intervene(self.spec, self.value, pts, 2)
        return np.atleast_1d(d), np.atleast_2d(p)


# ---------------------------------------------------------------- operator


class StackelbergOperator:
    """The follower's Bellman operator for a fixed leader policy, assembled on a grid."""

    def __init__(
        self,
        spec: GameSpec,
        grid: GridSpec,
        pi1: TriggerPolicy,
        n_mc: int = DEFAULT_MC_PATHS,
        seed: int = 0,
        flow: FlowBlock | None = None,
    ):
        grid.check_against(spec)
        require_time_invariant(spec)
        self.spec, self.grid, self.pi1 = spec, grid, pi1
        self.classes = cls = node_classes(grid)
        nodes = grid.nodes()
        self.flow = flow if flow is not None else build_flow_block(spec, grid, cls.flow, n_mc, seed)
        d1, p1 = leader_decisions(spec, pi1, nodes[cls.gamma1])
        self.leader_g1 = (d1, p1)
        self.L = sparse_interp(grid, reset_points(grid, nodes[cls.gamma1], 1, d1, p1))
        dc, pc = leader_decisions(spec, pi1, nodes[cls.corner])
        self.leader_corner = (dc, pc)
        pre = np.vstack([nodes[cls.gamma2], reset_points(grid, nodes[cls.corner], 1, dc, pc)])
        self.int_rows = cls.intervention
        self.n_corner = cls.corner.size
        self.cand_dwell, self.cand_params = _check_candidates(grid, 2)
        self.charge2 = spec.trigger_charge(2, self.cand_dwell)
        self.int_pre = pre
        self.M = self._reset_matrix(pre)
        self.leader_charge_g1 = spec.trigger_charge(1, d1)
        self.leader_charge_corner = spec.trigger_charge(1, dc)

    @property
    def K(self) -> int:
        return self.cand_dwell.size

    @property
    def n_int(self) -> int:
        return self.int_rows.size

    def _reset_matrix(self, pre: np.ndarray) -> sp.csr_matrix:
        NI = pre.shape[0]
        pts = np.vstack([
            reset_points(self.grid, pre, 2, np.full(NI, self.cand_dwell[k]), np.tile(self.cand_params[k], (NI, 1)))
            for k in range(self.K)
        ])
        return sparse_interp(self.grid, pts)

    # -- sweeps -----------------------------------------------------------

    def q_values(self, v: np.ndarray) -> np.ndarray:
        """(K, n_int) follower reset costs g2(T_k) + v(reset_k)."""
        return self.charge2[:, None] + (self.M @ v).reshape(self.K, self.n_int)

    def _assemble(self, v: np.ndarray, int_vals: np.ndarray) -> np.ndarray:
        w = np.empty(self.grid.size)
        c = self.classes
        w[c.flow] = self.flow.apply(v, 2)
        w[c.gamma1] = self.L @ v
        w[self.int_rows] = int_vals
        return w

    def sweep(self, v: np.ndarray, return_argmin: bool = False):
        Q = self.q_values(v)
        k = _tiebreak_argmin(Q)
        w = self._assemble(v, Q[k, np.arange(self.n_int)])
        return (w, k) if return_argmin else w

    def soft_sweep(self, v: np.ndarray, temperature: float):
        Q = self.q_values(v)
        val, p = softmin(Q, temperature)
        return self._assemble(v, val), p

    def margins(self, v: np.ndarray) -> np.ndarray:
        """Gap between the best and second-best candidate at each decision row."""
        if self.K < 2:
            return np.full(self.n_int, np.inf)
        Q = np.sort(self.q_values(v), axis=0)
        return Q[1] - Q[0]

    def jacobian(self, weights: np.ndarray) -> sp.csr_matrix:
        """d sweep / d v for fixed candidate weights ``weights`` (K, n_int)."""
        c = self.classes
        N = self.grid.size
        blocks_rows, blocks = [], []
        blocks_rows.append(c.flow)
        blocks.append(sp.diags(self.flow.disc) @ self.flow.F)
        blocks_rows.append(c.gamma1)
        blocks.append(self.L)
        blocks_rows.append(self.int_rows)
        blocks.append(self.mix(weights))
        stacked = sp.vstack(blocks, format="csr")
        order = np.concatenate(blocks_rows)
        P = sp.csr_matrix((np.ones(N), (order, np.arange(N))), shape=(N, N))
        return (P @ stacked).tocsr()

    def mix(self, weights: np.ndarray) -> sp.csr_matrix:
        """sum_k diag(weights[k]) M_k as an (n_int, N) matrix."""
        NI = self.n_int
        S = sp.hstack([sp.diags(weights[k]) for k in range(self.K)], format="csr")
        return (S @ self.M).tocsr()

    def one_hot(self, k: np.ndarray) -> np.ndarray:
        W = np.zeros((self.K, self.n_int))
        W[k, np.arange(self.n_int)] = 1.0
        return W

    # -- policies ---------------------------------------------------------

    def follower_policy(self, v: np.ndarray) -> TablePolicy:
        k = _tiebreak_argmin(self.q_values(v))
        return self._table(self.cand_dwell[k], self.cand_params[k])

    def _table(self, dwell_rows: np.ndarray, param_rows: np.ndarray) -> TablePolicy:
        g, lay = self.grid, self.grid.layout
        m2 = lay.m2
        full_d = np.full(g.size, np.nan)
        full_p = np.full((g.size, m2), np.nan)
        full_d[self.int_rows] = dwell_rows
        full_p[self.int_rows] = param_rows
        ax = lay.sigma2
        d = np.take(full_d.reshape(g.shape), 0, axis=ax)
        p = np.take(full_p.reshape(g.shape + (m2,)), 0, axis=ax)
        return TablePolicy(2, g, d, p)


def bellman_sweep(spec: GameSpec, v: ValueGrid, pi1: TriggerPolicy, n_mc: int = DEFAULT_MC_PATHS, seed: int = 0) -> ValueGrid:
    """One application of the follower's operator (assembles it; prefer :class:`StackelbergOperator` in loops)."""
    op = StackelbergOperator(spec, v.grid, pi1, n_mc=n_mc, seed=seed)
    return ValueGrid(v.grid, op.sweep(v.values))


# --------------------------------------------------------- value iteration


@dataclass
class FixedPointReport:
    iterations: int
    residuals: list[float]
    final_residual: float
    converged: bool
    tol: float
    beta: float
    two_sweep_ratios: list[float] = field(default_factory=list)
    one_step_ratios: list[float] = field(default_factory=list)
    sweep_bound: int | None = None
    mc_standard_error: float | None = None

    @classmethod
    def from_residuals(cls, residuals, tol, beta, converged, mc_se=None) -> "FixedPointReport":
        r = np.asarray(residuals, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            one = (r[1:] / r[:-1]).tolist() if r.size > 1 else []
            two = (r[2:] / r[:-2]).tolist() if r.size > 2 else []
        return cls(
            iterations=int(r.size),
            residuals=r.tolist(),
            final_residual=float(r[-1]) if r.size else float("nan"),
            converged=bool(converged),
            tol=float(tol),
            beta=float(beta),
            two_sweep_ratios=[x for x in two],
            one_step_ratios=[x for x in one],
            sweep_bound=sweep_bound(r[0], tol, beta) if r.size else None,
            mc_standard_error=mc_se,
        )

    def to_json(self) -> dict:
        clean = lambda xs: [x if np.isfinite(x) else None for x in xs]
        out = asdict(self)
        out["two_sweep_ratios"] = clean(self.two_sweep_ratios)
        out["one_step_ratios"] = clean(self.one_step_ratios)
        return out

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), indent=1))
        return path


def sweep_bound(first_residual: float, tol: float, beta: float) -> int:
    """Sweeps guaranteed by the two-sweep contraction: ceil(log(tol/r1)/log beta) * 2 + 10."""
    if first_residual <= tol:
        return 10
    return int(math.ceil(math.log(tol / first_residual) / math.log(beta))) * 2 + 10


def iterate_to_fixed_point(step, v0: np.ndarray, tol: float, max_iters: int):
    """Generic v <- step(v) loop returning (v, residual history, converged)."""
    v = np.array(v0, dtype=float, copy=True)
    res: list[float] = []
    for _ in range(max_iters):
        w = step(v)
        r = float(np.max(np.abs(w - v)))
        res.append(r)
        v = w
        if r < tol:
            return v, res, True
    return v, res, False


def value_iteration(
    spec: GameSpec,
    pi1: TriggerPolicy,
    grid: GridSpec,
    tol: float = 1e-6,
    max_iters: int = 10_000,
    n_mc: int = DEFAULT_MC_PATHS,
    seed: int = 0,
    v0: ValueGrid | None = None,
    operator: StackelbergOperator | None = None,
):
    """Iterate the follower operator from v0 (default zero) to its fixed point.

    Returns (ValueGrid, follower TablePolicy, FixedPointReport). Hitting
    ``max_iters`` returns the last iterate with ``report.converged`` false.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    op = operator or StackelbergOperator(spec, grid, pi1, n_mc=n_mc, seed=seed)
    start = np.zeros(grid.size) if v0 is None else v0.values
    v, res, ok = iterate_to_fixed_point(op.sweep, start, tol, max_iters)
    if not ok:
        log.warning("value iteration stopped after %d sweeps with residual %.3g", len(res), res[-1])
    se = None
    if op.flow.n_paths > 1:
        se = float(np.max(op.flow.standard_error(v, 2))) if op.flow.rows.size else 0.0
    report = FixedPointReport.from_residuals(res, tol, spec.contraction_modulus, ok, se)
    return ValueGrid(grid, v), op.follower_policy(v), report
