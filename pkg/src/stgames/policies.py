"""Trigger policies: maps from augmented states on a player's boundary to
(dwell time, control parameter) decisions.

All policies are vectorized: ``decide(states)`` takes (B, D) rows and
returns ``(dwell (B,), params (B, m))``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .value_grid import GridSpec, swap_grid, swap_permutation


class TriggerPolicy:
    """Base class; subclasses set ``owner`` (1 or 2) and implement ``decide``."""

    def decide(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def __call__(self, states):
        return self.decide(np.atleast_2d(states))


@dataclass(eq=False)
class ConstantPolicy(TriggerPolicy):
    owner: int
    dwell: float
    param: np.ndarray

    def __post_init__(self):
        self.param = np.atleast_1d(np.asarray(self.param, dtype=float))

    def decide(self, states):
        B = states.shape[0]
        return np.full(B, float(self.dwell)), np.tile(self.param, (B, 1))


@dataclass(eq=False)
class CallablePolicy(TriggerPolicy):
    """Wraps ``fn(states) -> (dwell, params)``."""

    owner: int
    fn: Callable

    def decide(self, states):
        d, p = self.fn(states)
        return np.asarray(d, dtype=float).reshape(-1), np.atleast_2d(np.asarray(p, dtype=float))


@dataclass(eq=False)
class SequencePolicy(TriggerPolicy):
    """Replays a fixed list of decisions, then repeats the last one (single trajectory only)."""

    owner: int
    decisions: list

    def __post_init__(self):
        self._k = 0

    def decide(self, states):
        out_d, out_p = [], []
        for _ in range(states.shape[0]):
            d, p = self.decisions[min(self._k, len(self.decisions) - 1)]
            self._k += 1
            out_d.append(d)
            out_p.append(np.atleast_1d(p))
        return np.asarray(out_d, dtype=float), np.asarray(out_p, dtype=float)


@dataclass(eq=False)
class TablePolicy(TriggerPolicy):
    """Decision table over the owner's boundary slice (sigma_owner = 0).

    The table is indexed by every grid axis except the owner's clock; states
    are mapped to the nearest node on each axis.
    """

    owner: int
    grid: GridSpec
    dwell: np.ndarray
    params: np.ndarray

    def __post_init__(self):
        shape = self.slice_shape
        m = self.params.shape[-1]
        if np.ndim(self.dwell) > 1 and np.shape(self.dwell) != shape:
            raise ValueError(f"dwell table has shape {np.shape(self.dwell)}, the boundary slice is {shape}")
        self.dwell = np.asarray(self.dwell, dtype=float).reshape(shape)
        self.params = np.asarray(self.params, dtype=float).reshape(shape + (m,))

    @property
    def slice_axes(self) -> list[int]:
        k = self.grid.layout.sigma(self.owner)
        return [a for a in range(self.grid.layout.dim) if a != k]

    @property
    def slice_shape(self) -> tuple[int, ...]:
        return tuple(self.grid.axes[a].size for a in self.slice_axes)

    def node_index(self, states: np.ndarray) -> tuple[np.ndarray, ...]:
        out = []
        for a in self.slice_axes:
            ax = self.grid.axes[a]
            q = np.clip(states[:, a], ax[0], ax[-1])
            i = np.clip(np.searchsorted(ax, q), 1, ax.size - 1)
            left_closer = (q - ax[i - 1]) <= (ax[i] - q)
            out.append(np.where(left_closer, i - 1, i))
        return tuple(out)

    def swapped(self) -> "TablePolicy":
        """The same decisions on :func:`swap_grid` of the grid, owned by the other player index."""
        perm = swap_permutation(self.grid.layout)
        sgrid = swap_grid(self.grid)
        owner = 3 - self.owner
        k = sgrid.layout.sigma(owner)
        order = [self.slice_axes.index(perm[a]) for a in range(sgrid.layout.dim) if a != k]
        return TablePolicy(owner, sgrid, self.dwell.transpose(order),
                           self.params.transpose(order + [len(order)]))

    def decide(self, states):
        states = np.atleast_2d(states)
        idx = self.node_index(states)
        return self.dwell[idx].copy(), self.params[idx].copy()

    def save(self, stem: str | Path) -> list[Path]:
        stem = Path(stem)
        d_path, p_path, h_path = (stem.parent / (stem.name + s) for s in ("_dwell.bin", "_params.bin", ".json"))
        self.dwell.astype("<f8").tofile(d_path)
        self.params.astype("<f8").tofile(p_path)
        hdr = {
            "owner": self.owner,
            "slice_axes": self.slice_axes,
            "slice_shape": list(self.slice_shape),
            "param_dim": int(self.params.shape[-1]),
            "dtype": "<f8",
            "grid": self.grid.to_header(),
        }
        h_path.write_text(json.dumps(hdr, indent=1, sort_keys=True))
        return [d_path, p_path, h_path]

    @classmethod
    def load(cls, stem: str | Path) -> "TablePolicy":
        stem = Path(stem)
        hdr = json.loads((stem.parent / (stem.name + ".json")).read_text())
        grid = GridSpec.from_header(hdr["grid"])
        d = np.fromfile(stem.parent / (stem.name + "_dwell.bin"), dtype="<f8")
        p = np.fromfile(stem.parent / (stem.name + "_params.bin"), dtype="<f8").reshape(-1, hdr["param_dim"])
        return cls(hdr["owner"], grid, d, p)
