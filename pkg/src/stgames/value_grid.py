"""Tensor-product grids over the augmented state and value tables on them.

Axes follow the augmented layout ``[x, sigma1, theta1, sigma2, theta2]``.
Queries outside the grid are clamped to the box (never extrapolated), so
interpolation is a convex combination of node values: monotone and
non-expansive in the sup norm.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .game_model import AugmentedState, GameSpec, StateLayout

log = logging.getLogger(__name__)

DEFAULT_NODE_BUDGET = 10**7


class GridError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Axis nodes per augmented coordinate plus per-player decision candidates.

    ``dwell_candidates[i]`` is a sorted 1-D array inside the dwell bounds of
    player i+1, ``param_candidates[i]`` an array of shape (K, m_i). The
    clock axes must start at 0 (trigger boundaries on-grid) and have no
    positive node below the player's dwell lower bound.
    """

    layout: StateLayout
    axes: tuple[np.ndarray, ...]
    dwell_candidates: tuple[np.ndarray, np.ndarray]
    param_candidates: tuple[np.ndarray, np.ndarray]
    node_budget: int = DEFAULT_NODE_BUDGET
    strides: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "dwell_candidates", tuple(np.sort(np.asarray(d, dtype=float)) for d in self.dwell_candidates))
        pc = []
        for i, c in enumerate(self.param_candidates):
            m = self.layout.m1 if i == 0 else self.layout.m2
            pc.append(np.asarray(c, dtype=float).reshape(-1, m))
        object.__setattr__(self, "param_candidates", tuple(pc))
        if len(axes) != self.layout.dim:
            raise GridError(f"expected {self.layout.dim} axes, got {len(axes)}")
        for k, a in enumerate(axes):
            if a.ndim != 1 or a.size < 2:
                raise GridError(f"axis {self.names[k]} needs at least 2 nodes")
            if np.any(np.diff(a) <= 0):
                raise GridError(f"axis {self.names[k]} nodes must be strictly increasing")
        if self.size > self.node_budget:
            raise GridError(f"grid has {self.size} nodes, above the budget of {self.node_budget}")
        shape = np.array(self.shape)
        strides = np.ones(len(shape), dtype=np.int64)
        strides[:-1] = np.cumprod(shape[::-1])[::-1][1:]
        object.__setattr__(self, "strides", strides)

    @property
    def names(self) -> list[str]:
        return self.layout.axis_names()

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.size for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def lower(self) -> np.ndarray:
        return np.array([a[0] for a in self.axes])

    @property
    def upper(self) -> np.ndarray:
        return np.array([a[-1] for a in self.axes])

    def nodes(self) -> np.ndarray:
        """All nodes as (N, D) rows in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def candidates(self, player: int) -> tuple[np.ndarray, np.ndarray]:
        """Lexicographically ordered (dwell, params) pairs: dwell first, then params in axis order."""
        d = self.dwell_candidates[player - 1]
        P = self.param_candidates[player - 1]
        order = np.lexsort(P.T[::-1])
        P = P[order]
        dd = np.repeat(d, P.shape[0])
        PP = np.tile(P, (d.size, 1))
        return dd, PP

    def same_as(self, other: "GridSpec") -> bool:
        return self.layout == other.layout and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.axes, other.axes)
        )

    def check_against(self, spec: GameSpec) -> None:
        lay = self.layout
        if lay != spec.layout:
            raise GridError("grid layout does not match the game")
        for i in (1, 2):
            p = spec.player(i)
            ax = self.axes[lay.sigma(i)]
            if ax[0] != 0.0:
                raise GridError(f"sigma{i} axis must start at 0")
            if np.any((ax[1:] < p.t_under - 1e-12) | (ax[1:] > p.t_over + 1e-12)):
                raise GridError(f"sigma{i} positive nodes must lie in [{p.t_under}, {p.t_over}]")
            d = self.dwell_candidates[i - 1]
            if d.size == 0 or np.any(d < p.t_under - 1e-12) or np.any(d > p.t_over + 1e-12):
                raise GridError(f"player {i} dwell candidates must be non-empty and inside the dwell bounds")
            P = self.param_candidates[i - 1]
            if P.shape[0] == 0:
                raise GridError(f"player {i} has no parameter candidates")
            if np.any(P < p.param_lower - 1e-12) or np.any(P > p.param_upper + 1e-12):
                raise GridError(f"player {i} parameter candidates leave the parameter box")

    def to_header(self) -> dict:
        return {
            "layout": [self.layout.n, self.layout.m1, self.layout.m2],
            "names": self.names,
            "axes": [a.tolist() for a in self.axes],
            "shape": list(self.shape),
            "dwell_candidates": [d.tolist() for d in self.dwell_candidates],
            "param_candidates": [p.tolist() for p in self.param_candidates],
        }

    @classmethod
    def from_header(cls, hdr: dict) -> "GridSpec":
        return cls(
            layout=StateLayout(*hdr["layout"]),
            axes=tuple(np.asarray(a) for a in hdr["axes"]),
            dwell_candidates=tuple(np.asarray(d) for d in hdr["dwell_candidates"]),
            param_candidates=tuple(np.asarray(p) for p in hdr["param_candidates"]),
        )


def build_grid(
    spec: GameSpec,
    x_axes: Sequence[np.ndarray],
    dwell_candidates: Sequence[Sequence[float]],
    param_axes: Sequence[Sequence[np.ndarray]],
    sigma_axes: Sequence[np.ndarray] | None = None,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> GridSpec:
    """Grid whose clock axes default to {0} U dwell candidates and whose
    parameter candidates are the full product of the parameter axes."""
    lay = spec.layout
    if sigma_axes is None:
        sigma_axes = [np.concatenate([[0.0], np.sort(np.asarray(d, dtype=float))]) for d in dwell_candidates]
    pcs = [np.stack([m.ravel() for m in np.meshgrid(*pa, indexing="ij")], axis=1) for pa in param_axes]
    axes = (
        list(x_axes)
        + [sigma_axes[0]]
        + list(param_axes[0])
        + [sigma_axes[1]]
        + list(param_axes[1])
    )
    grid = GridSpec(lay, tuple(axes), tuple(np.asarray(d) for d in dwell_candidates), tuple(pcs), node_budget)
    grid.check_against(spec)
    return grid


# ----------------------------------------------------------- interpolation


def _locate(nodes: np.ndarray, q: np.ndarray):
    """Cell index, fractional position and in-range mask for queries on one axis."""
    lo, hi = nodes[0], nodes[-1]
    inside = (q >= lo) & (q <= hi)
    qc = np.clip(q, lo, hi)
    i = np.clip(np.searchsorted(nodes, qc, side="right") - 1, 0, nodes.size - 2)
    width = nodes[i + 1] - nodes[i]
    t = (qc - nodes[i]) / width
    return i, t, inside, width


def _corner_bits(d: int) -> np.ndarray:
    return np.array(list(itertools.product((0, 1), repeat=d)), dtype=np.int64)


def interpolation_weights(grid: GridSpec, points: np.ndarray, active: Sequence[int] | None = None):
    """Flat node indices and weights of the enclosing cell corners.

    ``active`` limits interpolation to the listed axes; the remaining
    coordinates are snapped to their nearest node (useful when a caller
    knows they are on-grid). Returns (idx, w) of shape (B, 2^k).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    B, D = pts.shape
    active = list(range(D)) if active is None else list(active)
    base = np.zeros(B, dtype=np.int64)
    fracs = []
    for k in range(D):
        ax = grid.axes[k]
        if k in active:
            i, t, _, _ = _locate(ax, pts[:, k])
            fracs.append((k, t))
        else:
            i = np.abs(pts[:, k][:, None] - ax[None, :]).argmin(axis=1)
        base += i * grid.strides[k]
    bits = _corner_bits(len(fracs))
    idx = np.repeat(base[:, None], bits.shape[0], axis=1)
    w = np.ones((B, bits.shape[0]))
    for j, (k, t) in enumerate(fracs):
        idx += bits[None, :, j] * grid.strides[k]
        w *= np.where(bits[None, :, j] == 1, t[:, None], 1.0 - t[:, None])
    return idx, w


def interpolation_gradient_weights(grid: GridSpec, points: np.ndarray, wrt: Sequence[int], active: Sequence[int] | None = None):
    """Weights of d(interp)/d(point[k]) for each k in ``wrt``.

    Returns idx (B, C) and a list of weight arrays (B, C), one per entry of
    ``wrt``. Derivatives are taken inside the cell used for evaluation and
    vanish along clamped coordinates.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    B, D = pts.shape
    active = list(range(D)) if active is None else list(active)
    base = np.zeros(B, dtype=np.int64)
    info = []
    for k in range(D):
        ax = grid.axes[k]
        if k in active:
            i, t, inside, width = _locate(ax, pts[:, k])
            info.append((k, t, inside, width))
        else:
            i = np.abs(pts[:, k][:, None] - ax[None, :]).argmin(axis=1)
        base += i * grid.strides[k]
    bits = _corner_bits(len(info))
    idx = np.repeat(base[:, None], bits.shape[0], axis=1)
    for j, (k, *_rest) in enumerate(info):
        idx += bits[None, :, j] * grid.strides[k]
    grads = []
    for k_wrt in wrt:
        g = np.ones((B, bits.shape[0]))
        for j, (k, t, inside, width) in enumerate(info):
            up = bits[None, :, j] == 1
            if k == k_wrt:
                dk = np.where(inside, 1.0 / width, 0.0)[:, None]
                g *= np.where(up, dk, -dk)
            else:
                g *= np.where(up, t[:, None], 1.0 - t[:, None])
        if k_wrt not in [inf[0] for inf in info]:
            g[:] = 0.0
        grads.append(g)
    return idx, grads


def weights_matrix(grid: GridSpec, idx: np.ndarray, w: np.ndarray) -> sp.csr_matrix:
    """Sparse (B, N) matrix with row b holding the interpolation weights of query b."""
    B, C = idx.shape
    rows = np.repeat(np.arange(B), C)
    M = sp.csr_matrix((w.ravel(), (rows, idx.ravel())), shape=(B, grid.size))
    M.eliminate_zeros()
    return M


def interpolation_matrix(grid: GridSpec, points: np.ndarray, active: Sequence[int] | None = None) -> sp.csr_matrix:
    idx, w = interpolation_weights(grid, points, active)
    return weights_matrix(grid, idx, w)


@dataclass(eq=False)
class ValueGrid:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.size != self.grid.size:
            raise GridError(f"value array has {self.values.size} entries, grid has {self.grid.size} nodes")
        if not np.all(np.isfinite(self.values)):
            raise GridError("value grid contains non-finite entries")

    @classmethod
    def constant(cls, grid: GridSpec, c: float) -> "ValueGrid":
        return cls(grid, np.full(grid.size, float(c)))

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "ValueGrid":
        return cls(grid, fn(grid.nodes()))

    @property
    def table(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return interpolate(self, points)


def _as_points(layout: StateLayout, chi) -> tuple[np.ndarray, bool]:
    if isinstance(chi, AugmentedState):
        return chi.to_vector()[None, :], True
    arr = np.asarray(chi, dtype=float)
    return np.atleast_2d(arr), arr.ndim == 1


def interpolate(v: ValueGrid, chi) -> np.ndarray | float:
    """Multilinear interpolation; ``chi`` is an AugmentedState, a (D,) vector or (B, D) rows."""
    pts, single = _as_points(v.grid.layout, chi)
    out_of_box = np.any((pts < v.grid.lower - 1e-12) | (pts > v.grid.upper + 1e-12), axis=1)
    if np.any(out_of_box):
        log.debug("clamping %d query point(s) to the grid box", int(out_of_box.sum()))
    idx, w = interpolation_weights(v.grid, pts)
    out = np.sum(v.values[idx] * w, axis=1)
    return float(out[0]) if single else out


def sup_norm_diff(u: ValueGrid, v: ValueGrid) -> float:
    if not u.grid.same_as(v.grid):
        raise GridError("value grids live on different grids")
    return float(np.max(np.abs(u.values - v.values)))


# --------------------------------------------------------------------- IO


def save_value_grid(v: ValueGrid, stem: str | Path, extra: dict | None = None) -> list[Path]:
    """Write ``stem.bin`` (little-endian float64, C order) and ``stem.json`` (header)."""
    stem = Path(stem)
    bin_path, hdr_path = stem.with_suffix(".bin"), stem.with_suffix(".json")
    v.values.astype("<f8").tofile(bin_path)
    hdr = {"dtype": "<f8", "order": "C", **v.grid.to_header()}
    if extra:
        hdr["extra"] = extra
    hdr_path.write_text(json.dumps(hdr, indent=1, sort_keys=True))
    return [bin_path, hdr_path]


def load_value_grid(stem: str | Path) -> ValueGrid:
    stem = Path(stem)
    hdr = json.loads(stem.with_suffix(".json").read_text())
    grid = GridSpec.from_header(hdr)
    vals = np.fromfile(stem.with_suffix(".bin"), dtype=hdr.get("dtype", "<f8"))
    return ValueGrid(grid, vals)


def export_slice_csv(v: ValueGrid, path: str | Path, free: tuple[int, int], fixed: dict[int, float] | None = None) -> Path:
    """CSV over the nodes of two free axes with every other coordinate fixed.

    Unlisted fixed coordinates default to the first node of their axis.
    """
    g = v.grid
    fixed = dict(fixed or {})
    a, b = free
    A, Bn = np.meshgrid(g.axes[a], g.axes[b], indexing="ij")
    pts = np.tile(np.array([fixed.get(k, g.axes[k][0]) for k in range(g.layout.dim)], dtype=float), (A.size, 1))
    pts[:, a], pts[:, b] = A.ravel(), Bn.ravel()
    vals = interpolate(v, pts)
    path = Path(path)
    names = g.names
    with path.open("w") as fh:
        fh.write(f"{names[a]},{names[b]},value\n")
        for p, q, val in zip(pts[:, a], pts[:, b], vals):
            fh.write(f"{p:.12g},{q:.12g},{val:.17g}\n")
    return path


def swap_permutation(layout: StateLayout) -> list[int]:
    """Axis order of the player-swapped layout in terms of the original axes."""
    n, m1, m2 = layout.n, layout.m1, layout.m2
    x = list(range(n))
    s1, t1 = [n], list(range(n + 1, n + 1 + m1))
    s2, t2 = [n + 1 + m1], list(range(n + 2 + m1, n + 2 + m1 + m2))
    return x + s2 + t2 + s1 + t1


def swap_grid(grid: GridSpec) -> GridSpec:
    lay = grid.layout
    perm = swap_permutation(lay)
    return GridSpec(
        StateLayout(lay.n, lay.m2, lay.m1),
        tuple(grid.axes[k] for k in perm),
        grid.dwell_candidates[::-1],
        grid.param_candidates[::-1],
        grid.node_budget,
    )


def swap_values(v: ValueGrid) -> ValueGrid:
    """Re-index a value table onto :func:`swap_grid` of its grid (an involution)."""
    perm = swap_permutation(v.grid.layout)
    return ValueGrid(swap_grid(v.grid), np.ascontiguousarray(v.table.transpose(perm)).ravel())
