"""Simultaneous-move (Nash) pattern: coupled sweep, corner static games, damped relaxation.

At a node where only player i's clock has expired, player i takes its
cheapest reset for v_i and the opponent's table is read at that reset
(no cost to the opponent). At a corner both players pick from their
candidate sets simultaneously, giving a bimatrix game on the value
surface; a pure equilibrium is searched exhaustively.

No convergence is promised: the coupled operator is not a contraction in
general, and :func:`nash_iterate` reports what happened instead of raising.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .follower_dp import (
    DEFAULT_MC_PATHS,
    FlowBlock,
    _tiebreak_argmin,
    build_flow_block,
    node_classes,
    reset_points,
    sparse_interp,
)
from .game_model import GameSpec
from .policies import TablePolicy
from .value_grid import GridError, GridSpec, ValueGrid, interpolate

log = logging.getLogger(__name__)

BR_ROUNDS = 100
EQ_TOL = 1e-12


# ---------------------------------------------------------- static games


@dataclass
class StaticGameResult:
    i: int
    j: int
    values: tuple[float, float]
    pure: bool
    n_equilibria: int
    cycle: list[tuple[int, int]] = field(default_factory=list)


def pure_equilibria(A: np.ndarray, B: np.ndarray, tol: float = EQ_TOL) -> np.ndarray:
    """Boolean mask of pure Nash equilibria of the cost bimatrix (A, B).

    Player 1 picks the row and minimizes A, player 2 picks the column and
    minimizes B.
    """
    A, B = np.asarray(A, dtype=float), np.asarray(B, dtype=float)
    colmin = A.min(axis=0, keepdims=True)
    rowmin = B.min(axis=1, keepdims=True)
    return (A <= colmin + tol * (1 + np.abs(colmin))) & (B <= rowmin + tol * (1 + np.abs(rowmin)))


def _first_min(a: np.ndarray) -> int:
    m = a.min()
    return int(np.argmax(a <= m + EQ_TOL * (1 + abs(m))))


def solve_bimatrix(A: np.ndarray, B: np.ndarray) -> StaticGameResult:
    """Lexicographically first pure equilibrium, else a best-response walk from (0, 0).

    The walk alternates row and column best responses for at most
    BR_ROUNDS rounds and reports the cycle it ends in.
    """
    A, B = np.asarray(A, dtype=float), np.asarray(B, dtype=float)
    eq = pure_equilibria(A, B)
    n_eq = int(eq.sum())
    if n_eq:
        i, j = np.unravel_index(int(np.argmax(eq.ravel())), eq.shape)
        return StaticGameResult(int(i), int(j), (float(A[i, j]), float(B[i, j])), True, n_eq)
    i, j = 0, 0
    seen: list[tuple[int, int]] = []
    for _ in range(BR_ROUNDS):
        i = _first_min(A[:, j])
        j = _first_min(B[i, :])
        if (i, j) in seen:
            cycle = seen[seen.index((i, j)):]
            break
        seen.append((i, j))
    else:
        cycle = seen[-2:]
    return StaticGameResult(i, j, (float(A[i, j]), float(B[i, j])), False, 0, cycle)


def no_profitable_deviation(A: np.ndarray, B: np.ndarray, i: int, j: int, tol: float = 1e-12) -> bool:
    """Exhaustive unilateral-deviation check of the pair (i, j)."""
    return bool(np.all(A[i, j] <= A[:, j] + tol) and np.all(B[i, j] <= B[i, :] + tol))


# ------------------------------------------------------------- operator


class NashOperator:
    """Coupled operator on (v1, v2) assembled on a grid."""

    def __init__(self, spec: GameSpec, grid: GridSpec, n_mc: int = DEFAULT_MC_PATHS, seed: int = 0, flow: FlowBlock | None = None):
        grid.check_against(spec)
        self.spec, self.grid = spec, grid
        self.classes = c = node_classes(grid)
        nodes = grid.nodes()
        self.flow = flow if flow is not None else build_flow_block(spec, grid, c.flow, n_mc, seed)
        self.cand = [grid.candidates(1), grid.candidates(2)]
        for i, (d, _) in enumerate(self.cand, start=1):
            if d.size == 0:
                raise GridError(f"player {i} has an empty candidate set")
        self.charge = [spec.trigger_charge(i, self.cand[i - 1][0]) for i in (1, 2)]
        self.K1, self.K2 = self.cand[0][0].size, self.cand[1][0].size
        self.M1 = self._resets(nodes[c.gamma1], [1])
        self.M2 = self._resets(nodes[c.gamma2], [2])
        self.MC = self._resets(nodes[c.corner], [1, 2])

    def _resets(self, pre: np.ndarray, players: list[int]) -> sp.csr_matrix:
        R = pre.shape[0]
        if players == [1] or players == [2]:
            p = players[0]
            d, P = self.cand[p - 1]
            pts = [reset_points(self.grid, pre, p, np.full(R, d[k]), np.tile(P[k], (R, 1))) for k in range(d.size)]
        else:
            (d1, P1), (d2, P2) = self.cand
            pts = []
            for a in range(d1.size):
                s = reset_points(self.grid, pre, 1, np.full(R, d1[a]), np.tile(P1[a], (R, 1)))
                for b in range(d2.size):
                    pts.append(reset_points(self.grid, s, 2, np.full(R, d2[b]), np.tile(P2[b], (R, 1))))
        if R == 0:
            return sp.csr_matrix((0, self.grid.size))
        return sparse_interp(self.grid, np.vstack(pts))

    def sweep(self, v1: np.ndarray, v2: np.ndarray, return_decisions: bool = False):
        c = self.classes
        w1, w2 = np.empty(self.grid.size), np.empty(self.grid.size)
        w1[c.flow] = self.flow.apply(v1, 1)
        w2[c.flow] = self.flow.apply(v2, 2)
        dec = {}
        n1 = c.gamma1.size
        if n1:
            Q = self.charge[0][:, None] + (self.M1 @ v1).reshape(self.K1, n1)
            k = _tiebreak_argmin(Q)
            w1[c.gamma1] = Q[k, np.arange(n1)]
            w2[c.gamma1] = (self.M1 @ v2).reshape(self.K1, n1)[k, np.arange(n1)]
            dec["gamma1"] = k
        n2 = c.gamma2.size
        if n2:
            Q = self.charge[1][:, None] + (self.M2 @ v2).reshape(self.K2, n2)
            k = _tiebreak_argmin(Q)
            w2[c.gamma2] = Q[k, np.arange(n2)]
            w1[c.gamma2] = (self.M2 @ v1).reshape(self.K2, n2)[k, np.arange(n2)]
            dec["gamma2"] = k
        nc = c.corner.size
        if nc:
            A = (self.MC @ v1).reshape(self.K1, self.K2, nc) + self.charge[0][:, None, None]
            B = (self.MC @ v2).reshape(self.K1, self.K2, nc) + self.charge[1][None, :, None]
            ij = np.zeros((nc, 2), dtype=int)
            pure = np.zeros(nc, dtype=bool)
            eqmask = pure_equilibria_batched(A, B)
            for r in range(nc):
                if eqmask[:, :, r].any():
                    i, j = np.unravel_index(int(np.argmax(eqmask[:, :, r].ravel())), (self.K1, self.K2))
                    pure[r] = True
                else:
                    res = solve_bimatrix(A[:, :, r], B[:, :, r])
                    i, j = res.i, res.j
                ij[r] = (i, j)
            w1[c.corner] = A[ij[:, 0], ij[:, 1], np.arange(nc)]
            w2[c.corner] = B[ij[:, 0], ij[:, 1], np.arange(nc)]
            dec["corner"] = ij
            dec["corner_pure"] = pure
        return (w1, w2, dec) if return_decisions else (w1, w2)

    def policies(self, v1: np.ndarray, v2: np.ndarray) -> tuple[TablePolicy, TablePolicy]:
        """Both players' decision tables implied by one sweep at (v1, v2)."""
        _, _, dec = self.sweep(v1, v2, return_decisions=True)
        c, g = self.classes, self.grid
        out = []
        for p in (1, 2):
            d, P = self.cand[p - 1]
            rows = [c.gamma1 if p == 1 else c.gamma2, c.corner]
            ks = [dec.get("gamma1" if p == 1 else "gamma2", np.zeros(0, dtype=int)),
                  dec["corner"][:, p - 1] if "corner" in dec else np.zeros(0, dtype=int)]
            full_d = np.full(g.size, np.nan)
            full_p = np.full((g.size, P.shape[1]), np.nan)
            for r, k in zip(rows, ks):
                full_d[r] = d[k]
                full_p[r] = P[k]
            ax = g.layout.sigma(p)
            out.append(TablePolicy(p, g, np.take(full_d.reshape(g.shape), 0, axis=ax),
                                   np.take(full_p.reshape(g.shape + (P.shape[1],)), 0, axis=ax)))
        return out[0], out[1]


def pure_equilibria_batched(A: np.ndarray, B: np.ndarray, tol: float = EQ_TOL) -> np.ndarray:
    """pure_equilibria over a stack of bimatrices with trailing batch axis."""
    colmin = A.min(axis=0, keepdims=True)
    rowmin = B.min(axis=1, keepdims=True)
    return (A <= colmin + tol * (1 + np.abs(colmin))) & (B <= rowmin + tol * (1 + np.abs(rowmin)))


def nash_sweep(spec: GameSpec, v1: ValueGrid, v2: ValueGrid, n_mc: int = DEFAULT_MC_PATHS, seed: int = 0):
    """One application of the coupled operator (assembles it on every call)."""
    if not v1.grid.same_as(v2.grid):
        raise GridError("value grids live on different grids")
    op = NashOperator(spec, v1.grid, n_mc, seed)
    w1, w2 = op.sweep(v1.values, v2.values)
    return ValueGrid(v1.grid, w1), ValueGrid(v2.grid, w2)


def static_game_solve(spec: GameSpec, v1: ValueGrid, v2: ValueGrid, chi) -> tuple:
    """Corner bimatrix at one state with sigma1 = sigma2 = 0.

    Returns ((T1, theta1), (T2, theta2), (value1, value2), StaticGameResult).
    """
    grid = v1.grid
    lay = grid.layout
    chi = np.asarray(chi.to_vector() if hasattr(chi, "to_vector") else chi, dtype=float).reshape(1, -1)
    if abs(chi[0, lay.sigma1]) > 1e-12 or abs(chi[0, lay.sigma2]) > 1e-12:
        raise GridError("static game requires sigma1 = sigma2 = 0")
    (d1, P1), (d2, P2) = grid.candidates(1), grid.candidates(2)
    A = np.empty((d1.size, d2.size))
    B = np.empty_like(A)
    g1, g2 = spec.trigger_charge(1, d1), spec.trigger_charge(2, d2)
    for a in range(d1.size):
        s = reset_points(grid, chi, 1, d1[a:a + 1], P1[a:a + 1])
        for b in range(d2.size):
            pt = reset_points(grid, s, 2, d2[b:b + 1], P2[b:b + 1])
            A[a, b] = g1[a] + interpolate(v1, pt)[0]
            B[a, b] = g2[b] + interpolate(v2, pt)[0]
    res = solve_bimatrix(A, B)
    return (d1[res.i], P1[res.i]), (d2[res.j], P2[res.j]), res.values, res


# ------------------------------------------------------------- iteration


@dataclass
class NashReport:
    iterations: int
    residuals: list[float]
    classification: str
    damping: float
    tol: float
    corner_fallbacks: int = 0

    def to_json(self) -> dict:
        return asdict(self)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), indent=1))
        return path


def classify(residuals: list[float], tol: float, window: int = 20) -> str:
    r = np.asarray(residuals, dtype=float)
    if r.size and np.isfinite(r[-1]) and r[-1] < tol:
        return "converged"
    if r.size == 0 or not np.all(np.isfinite(r)):
        return "diverging"
    tail = r[-window:]
    best = r.min()
    if tail[-1] > 10 * max(best, tol) and np.all(np.diff(tail[-min(5, tail.size):]) >= 0):
        return "diverging"
    return "oscillating"


def nash_iterate(
    spec: GameSpec,
    grid: GridSpec,
    damping: float = 0.5,
    tol: float = 1e-6,
    max_iters: int = 5000,
    n_mc: int = DEFAULT_MC_PATHS,
    seed: int = 0,
    v0: tuple[ValueGrid, ValueGrid] | None = None,
):
    """Damped relaxation (v1, v2) <- (1 - a)(v1, v2) + a * N(v1, v2) from zero.

    Returns (v1, v2, NashReport). The residual is the joint sup-norm of the
    undamped update, max_i |N_i(v) - v_i|.
    """
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    op = NashOperator(spec, grid, n_mc, seed)
    v1 = np.zeros(grid.size) if v0 is None else v0[0].values.copy()
    v2 = np.zeros(grid.size) if v0 is None else v0[1].values.copy()
    res: list[float] = []
    fallbacks = 0
    for _ in range(max_iters):
        w1, w2, dec = op.sweep(v1, v2, return_decisions=True)
        if "corner_pure" in dec:
            fallbacks = int((~dec["corner_pure"]).sum())
        r = float(max(np.max(np.abs(w1 - v1)), np.max(np.abs(w2 - v2))))
        res.append(r)
        if not np.isfinite(r):
            break
        v1 = (1 - damping) * v1 + damping * w1
        v2 = (1 - damping) * v2 + damping * w2
        if r < tol:
            break
    cls = classify(res, tol)
    if cls != "converged":
        log.warning("Nash relaxation %s after %d sweeps (residual %.3g)", cls, len(res), res[-1])
    report = NashReport(len(res), res, cls, damping, tol, fallbacks)
    finite = lambda v: v if np.all(np.isfinite(v)) else np.nan_to_num(v, nan=0.0, posinf=0.0, neginf=0.0)
    return ValueGrid(grid, finite(v1)), ValueGrid(grid, finite(v2)), report
