"""Lattice grids on implicit domains, fields on them, and control sets.

Nodes are the background-lattice points inside the domain plus one
boundary-snapped node for every outside lattice point adjacent to an inside
one (Newton-projected onto the zero level, flagged as boundary).  The
stencil couples lattice neighbors and substitutes the snapped node whenever
the lattice neighbor falls outside, so every interior node keeps a full
stencil inside the closure.

Interpolation is bilinear on the background cells, with weights renormalized
over the corners that actually carry nodes; it is monotone and exact on
constants, which the marching scheme relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from .geometry import (ImplicitDomain, ObliqueField, project_to_boundary,
                       project_to_closure)


class GridError(Exception):
    pass


class EmptyControlSet(GridError):
    pass


_OFFSETS_2D = np.array([(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)
                        if (i, j) != (0, 0)])
_OFFSETS_1D = np.array([(-1,), (1,)])


class Grid:
    """Spatial discretization of an implicit domain at spacing h."""

    def __init__(self, domain: ImplicitDomain, h: float,
                 field_: Optional[ObliqueField] = None):
        if h <= 0:
            raise ValueError("h must be positive")
        self.domain = domain
        self.h = float(h)
        self.dim = domain.dim
        self.field = field_
        self._build()
        if len(self.points) < 9:
            raise GridError(f"grid has only {len(self.points)} nodes; "
                            f"decrease h")

    # -- construction ----------------------------------------------------------

    def _build(self) -> None:
        dom, h = self.domain, self.h
        dim = dom.dim
        kmin = np.ceil(dom.bounding_box[:, 0] / h).astype(int)
        kmax = np.floor(dom.bounding_box[:, 1] / h).astype(int)
        shape = tuple(kmax - kmin + 1)
        axes = [np.arange(kmin[d], kmax[d] + 1) for d in range(dim)]
        if dim == 1:
            K = axes[0][:, None]
        else:
            A, B = np.meshgrid(axes[0], axes[1], indexing="ij")
            K = np.stack([A.ravel(), B.ravel()], axis=-1)
        pts = K * h
        inside = dom.psi(pts) <= 0.0

        offsets = _OFFSETS_1D if dim == 1 else _OFFSETS_2D
        lat = np.full(shape, -1, dtype=np.int64)
        idx_in = K[inside] - kmin
        n_in = len(idx_in)
        lat[tuple(idx_in.T)] = np.arange(n_in)

        # outside lattice points adjacent to an inside one get snapped nodes
        inside_grid = inside.reshape(shape)
        near_out = np.zeros(shape, dtype=bool)
        for off in offsets:
            shifted = np.zeros(shape, dtype=bool)
            src = tuple(slice(max(o, 0), s + min(o, 0)) for o, s in zip(off, shape))
            dst = tuple(slice(max(-o, 0), s + min(-o, 0)) for o, s in zip(off, shape))
            shifted[dst] = inside_grid[src]
            near_out |= shifted
        near_out &= ~inside_grid
        out_idx = np.argwhere(near_out)
        merged_boundary = np.zeros(n_in, dtype=bool)
        if len(out_idx):
            snapped = project_to_closure(dom, (out_idx + kmin) * h)
            # projections landing (almost) on an existing node reuse that node
            # instead of creating a near-duplicate with degenerate edges
            d_in, near_in = cKDTree(pts[inside]).query(snapped)
            dup = d_in <= 0.1 * h
            # cluster snapped points that landed within 0.1h of each other
            # (adjacent outside cells projecting to almost the same spot)
            rep = np.arange(len(snapped))
            if np.sum(~dup) > 1:
                sub = np.flatnonzero(~dup)
                for i, j in sorted(cKDTree(snapped[sub]).query_pairs(0.1 * h)):
                    a, b = sub[i], sub[j]
                    while rep[a] != a:
                        a = rep[a]
                    while rep[b] != b:
                        b = rep[b]
                    if a != b:
                        rep[max(a, b)] = min(a, b)
            for k in range(len(rep)):
                while rep[rep[k]] != rep[k]:
                    rep[k] = rep[rep[k]]
            keep_snap = (~dup) & (rep == np.arange(len(snapped)))
            new_id = np.full(len(snapped), -1, dtype=np.int64)
            new_id[keep_snap] = n_in + np.arange(int(np.sum(keep_snap)))
            ids = np.where(dup, near_in, new_id[rep])
            lat[tuple(out_idx.T)] = ids
            merged_boundary[near_in[dup]] = True
            snapped = snapped[keep_snap]
            out_idx = out_idx[keep_snap]
        else:
            snapped = np.zeros((0, dim))

        self.points = np.concatenate([pts[inside], snapped], axis=0)
        self.n_inside = n_in
        self.is_boundary = np.zeros(len(self.points), dtype=bool)
        self.is_boundary[n_in:] = True
        near = np.abs(dom.psi(pts[inside])) / dom.rho0 <= 1e-9 * dom.diameter
        self.is_boundary[:n_in][near] = True
        self.is_boundary[:n_in][merged_boundary] = True
        self._lat = lat
        self._kmin = kmin
        self._shape = shape

        # directed neighbor pairs over the stencil
        src_list, dst_list = [], []
        all_idx = np.concatenate([idx_in, out_idx], axis=0)
        node_ids = lat[tuple(all_idx.T)]
        for off in offsets:
            nb = all_idx + off
            ok = np.all((nb >= 0) & (nb < np.array(shape)), axis=1)
            nb_ids = np.full(len(all_idx), -1, dtype=np.int64)
            nb_ids[ok] = lat[tuple(nb[ok].T)]
            ok &= nb_ids >= 0
            # snapped-to-snapped edges only between adjacent outside cells;
            # snapped-to-inside and inside-to-anything always
            src_list.append(node_ids[ok])
            dst_list.append(nb_ids[ok])
        src = np.concatenate(src_list)
        dst = np.concatenate(dst_list)
        keep = src != dst
        pairs = np.unique(np.stack([src[keep], dst[keep]], axis=1), axis=0)
        self.edge_src = pairs[:, 0]
        self.edge_dst = pairs[:, 1]
        self._tree = cKDTree(self.points)
        if self.field is not None:
            b = self.is_boundary
            # gamma/g live on the zero level; merged nodes sit O(h) inside,
            # so collocate their field data at the nearest boundary point
            gpts = project_to_boundary(dom, self.points[b])
            self.boundary_gamma = self.field.gamma(gpts)
            self.boundary_g = self.field.g(gpts)

    # -- queries ----------------------------------------------------------------

    def nearest_node(self, x) -> np.ndarray:
        """Index of the nearest node (ties resolved by KD-tree order)."""
        _, i = self._tree.query(np.asarray(x, dtype=float))
        return i

    def lattice_pairs(self, offsets) -> tuple:
        """Directed node pairs (src, dst) for extra integer lattice offsets.

        Used to extend graph stencils beyond the stored edge set (e.g.
        knight moves for better directional coverage).  Pairs through
        missing cells are dropped; deduplicated like the edge list.
        """
        lat = self._lat
        shape = np.array(self._shape)
        occ = np.argwhere(lat >= 0)
        ids = lat[tuple(occ.T)]
        src_list, dst_list = [], []
        for off in offsets:
            nb = occ + np.asarray(off, dtype=int)
            ok = np.all((nb >= 0) & (nb < shape), axis=1)
            nid = np.full(len(occ), -1, dtype=np.int64)
            nid[ok] = lat[tuple(nb[ok].T)]
            ok &= nid >= 0
            src_list.append(ids[ok])
            dst_list.append(nid[ok])
        src = np.concatenate(src_list)
        dst = np.concatenate(dst_list)
        keep = src != dst
        if not np.any(keep):
            return (np.zeros(0, dtype=np.int64),) * 2
        pairs = np.unique(np.stack([src[keep], dst[keep]], axis=1), axis=0)
        return pairs[:, 0], pairs[:, 1]

    def interp_weights(self, y):
        """Bilinear corner indices/weights for query points inside the closure.

        Returns (idx, w) of shapes (..., 2^dim); missing corners carry zero
        weight and the rest are renormalized.  Falls back to the nearest
        node when an entire cell is empty.
        """
        y = np.atleast_2d(np.asarray(y, dtype=float))
        dim = self.domain.dim
        h = self.h
        f = y / h - self._kmin
        i0 = np.floor(f).astype(int)
        i0 = np.clip(i0, 0, np.array(self._shape) - 2)
        t = f - i0
        t = np.clip(t, 0.0, 1.0)
        if dim == 1:
            corners = np.stack([i0, i0 + 1], axis=1)          # (M, 2, 1)
            w = np.stack([1 - t[:, 0], t[:, 0]], axis=1)       # (M, 2)
        else:
            c00 = i0
            c10 = i0 + np.array([1, 0])
            c01 = i0 + np.array([0, 1])
            c11 = i0 + np.array([1, 1])
            corners = np.stack([c00, c10, c01, c11], axis=1)   # (M, 4, 2)
            tx, ty = t[:, 0], t[:, 1]
            w = np.stack([(1 - tx) * (1 - ty), tx * (1 - ty),
                          (1 - tx) * ty, tx * ty], axis=1)
        idx = self._lat[tuple(np.moveaxis(corners, -1, 0))]
        w = np.where(idx >= 0, w, 0.0)
        tot = w.sum(axis=1)
        empty = tot <= 1e-14
        if np.any(empty):
            near = self.nearest_node(y[empty])
            idx[empty, 0] = near
            w[empty] = 0.0
            w[empty, 0] = 1.0
            tot[empty] = 1.0
        w = w / tot[:, None]
        idx = np.where(idx >= 0, idx, 0)
        return idx, w

    def interpolate(self, values: np.ndarray, y) -> np.ndarray:
        idx, w = self.interp_weights(y)
        return np.sum(values[idx] * w, axis=-1)


@dataclass
class GridField:
    """Scalar field sampled on the grid nodes."""
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.grid.points),):
            raise ValueError("field shape does not match grid")

    def lipschitz_ratio(self) -> float:
        g = self.grid
        du = np.abs(self.values[g.edge_dst] - self.values[g.edge_src])
        dx = np.linalg.norm(g.points[g.edge_dst] - g.points[g.edge_src], axis=-1)
        return float(np.max(du / dx))

    def __call__(self, y) -> np.ndarray:
        return self.grid.interpolate(self.values, y)


@dataclass
class TimeField:
    """Space-time values of a marching run, stored every ``store_every`` steps."""
    grid: Grid
    dt: float
    level_a: float
    times: np.ndarray            # (n_stored,)
    values: np.ndarray           # (n_stored, N)
    policies: Optional[np.ndarray] = None   # (n_steps, N) int32 control ids
    diagnostics: dict = field(default_factory=dict)
    controls: Optional["ControlSet"] = None

    @property
    def n_steps(self) -> int:
        return int(round(self.times[-1] / self.dt))

    def slice_at(self, s: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - s)))
        if abs(self.times[k] - s) > 0.51 * self.dt * max(1, len(self.times)):
            raise ValueError(f"time {s} not stored")
        return self.values[k]

    def final(self) -> GridField:
        return GridField(self.grid, self.values[-1])


class ControlSet:
    """Polar menu of candidate velocities: zero, then speeds ascending.

    The ordering (zero first, speeds increasing) makes np.argmin's
    first-hit rule implement the tie-break toward smaller |xi|.
    """

    def __init__(self, vectors: np.ndarray, c_ctl: float):
        self.vectors = np.asarray(vectors, dtype=float)
        self.c_ctl = float(c_ctl)
        if len(self.vectors) == 0:
            raise EmptyControlSet("no control vectors")
        self.speeds = np.linalg.norm(self.vectors, axis=-1)

    @classmethod
    def build(cls, c_ctl: float, dim: int, n_angle: int = 32,
              n_speed: int = 16, s_min_frac: float = 0.02) -> "ControlSet":
        if c_ctl <= 0:
            raise EmptyControlSet("control speed cap must be positive")
        if n_angle < 1 or n_speed < 1:
            raise EmptyControlSet("empty control menu")
        ratio = s_min_frac ** (1.0 / max(n_speed - 1, 1))
        speeds = c_ctl * ratio ** np.arange(n_speed - 1, -1, -1)
        if dim == 1:
            dirs = np.array([[-1.0], [1.0]])
        else:
            ang = 2.0 * np.pi * np.arange(n_angle) / n_angle
            dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        vecs = (speeds[:, None, None] * dirs[None, :, :]).reshape(-1, dim)
        vecs = np.concatenate([np.zeros((1, dim)), vecs], axis=0)
        return cls(vecs, c_ctl)
