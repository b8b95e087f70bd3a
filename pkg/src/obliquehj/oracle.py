"""Brute-force certification oracle for stationary solutions.

``oracle_value_iteration`` recomputes the distance-like stationary field
u(x) = min over constrained paths from the anchor of the accumulated
running cost at the critical level, by plain value iteration on a
lattice ``refine`` times finer than the requested grid.  It is used to
certify main-path numbers, so it deliberately shares no machinery with
the time-dependent scheme or the action-graph code:

* its own lattice over the domain bounding box (no snapping),
* its own chord stencil (all primitive integer offsets up to range 3),
* per-chord cost = Simpson quadrature of the pointwise minimal running
  rate min_{s>0} (L(x, s e) + a) / s, minimized by a vectorized
  golden-section search in log-speed (clamped at zero),
* monotone Jacobi sweeps u <- min(u, cost + u[src]) from the anchor,
  run to a fixed point.

The level defaults to a = -min_x L(x, 0) (the critical value whenever
the projected Aubry set contains an equilibrium, which covers every
built-in Hamiltonian family), and the anchor to the lattice argmin.
Boundary pressing is not modeled: for g >= 0 and L increasing in |v| it
never lowers the action, which covers the normal-field test problems
this oracle certifies.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .grid import GridField
from .hamiltonian import lagrangian_batch
from .spec_file import ProblemSpec, build_domain, build_field, build_grid, \
    build_model


class NotConverged(Exception):
    """Value iteration failed to reach a fixed point within the sweep cap."""


def _primitive_offsets(dim: int, reach: int = 3) -> np.ndarray:
    """All integer offsets with max-norm <= reach and coprime entries."""
    if dim == 1:
        return np.array([[1], [-1]], dtype=int)
    rng = range(-reach, reach + 1)
    offs = []
    for i in rng:
        for j in rng:
            if (i, j) == (0, 0):
                continue
            if math.gcd(abs(i), abs(j)) == 1:
                offs.append((i, j))
    return np.array(offs, dtype=int)


def _min_rate(model, x: np.ndarray, e: np.ndarray, a: float,
              s_hi: float, n_menu: int = 16, n_golden: int = 18) -> np.ndarray:
    """min over s > 0 of (L(x, s e) + a) / s, clamped at zero.

    x, e: (m, dim).  The objective is quasiconvex in s for convex L, so
    a coarse geometric menu brackets the minimum and golden-section in
    log-speed polishes it.
    """
    s_lo = 1e-6 * s_hi

    def rate(s):
        return (lagrangian_batch(model, x, s[:, None] * e) + a) / s

    menu = np.geomspace(s_lo, s_hi, n_menu)
    best = np.full(len(x), np.inf)
    best_i = np.zeros(len(x), dtype=int)
    for i, s in enumerate(menu):
        val = rate(np.full(len(x), s))
        better = val < best
        best[better] = val[better]
        best_i[better] = i
    lo = np.log(menu[np.maximum(best_i - 1, 0)])
    hi = np.log(menu[np.minimum(best_i + 1, n_menu - 1)])
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    m1 = hi - phi * (hi - lo)
    m2 = lo + phi * (hi - lo)
    f1 = rate(np.exp(m1))
    f2 = rate(np.exp(m2))
    for _ in range(n_golden):
        take1 = f1 < f2
        hi = np.where(take1, m2, hi)
        lo = np.where(take1, lo, m1)
        m1 = hi - phi * (hi - lo)
        m2 = lo + phi * (hi - lo)
        f1 = rate(np.exp(m1))
        f2 = rate(np.exp(m2))
    out = np.minimum(np.minimum(f1, f2), best)
    return np.maximum(out, 0.0)


def _chord_costs(model, src_pts: np.ndarray, dst_pts: np.ndarray, a: float,
                 s_hi: float, block: int = 300_000) -> np.ndarray:
    """Simpson-quadrature chord costs, evaluated in blocks to bound memory."""
    n = len(src_pts)
    out = np.empty(n)
    for k0 in range(0, n, block):
        sl = slice(k0, min(k0 + block, n))
        p0 = src_pts[sl]
        p1 = dst_pts[sl]
        delta = p1 - p0
        r = np.linalg.norm(delta, axis=-1)
        r_safe = np.where(r > 0, r, 1.0)
        e = delta / r_safe[:, None]
        q0 = _min_rate(model, p0, e, a, s_hi)
        qm = _min_rate(model, 0.5 * (p0 + p1), e, a, s_hi)
        q1 = _min_rate(model, p1, e, a, s_hi)
        out[sl] = r * (q0 + 4.0 * qm + q1) / 6.0
    return out


def oracle_value_iteration(spec: ProblemSpec, refine: int = 2,
                           a: Optional[float] = None,
                           max_sweeps: Optional[int] = None) -> GridField:
    """Fixed-point stationary field at the critical level, on a fine lattice.

    Returns the field sampled back on the grid the spec asks for.  The
    sampling step relaxes each requested node once against all fine
    nodes within a small radius with the same chord-cost rule, so
    snapped boundary nodes are handled at their exact positions.
    """
    refine = int(refine)
    if refine < 2:
        raise ValueError(f"refine must be >= 2, got {refine}")
    domain = build_domain(spec)
    model = build_model(spec)
    field_ = build_field(spec, domain)
    coarse = build_grid(spec, domain, field_)

    h_f = spec.grid["h"] / refine
    box = domain.bounding_box
    pad = 2.0 * h_f
    axes = [np.arange(lo - pad, hi + pad + 0.5 * h_f, h_f)
            for lo, hi in box]
    shape = tuple(len(ax) for ax in axes)
    mesh = np.meshgrid(*axes, indexing="ij")
    lattice = np.stack([m.ravel() for m in mesh], axis=-1)
    inside = domain.psi(lattice) <= 0.0
    if not np.any(inside):
        raise NotConverged("no lattice nodes inside the domain")
    node_id = np.full(lattice.shape[0], -1, dtype=int)
    node_id[inside] = np.arange(int(np.count_nonzero(inside)))
    pts = lattice[inside]
    n = len(pts)

    # anchored level: rest is free at the anchor, so u(anchor) = 0
    rest_rate = lagrangian_batch(model, pts, np.zeros_like(pts))
    if a is None:
        a = -float(np.min(rest_rate))
    anchor = int(np.argmin(rest_rate))

    # directed chord edges between inside nodes, by primitive offset
    full_idx = np.arange(lattice.shape[0]).reshape(shape)
    grids_ix = np.meshgrid(*[np.arange(m) for m in shape], indexing="ij")
    src_list, dst_list = [], []
    for off in _primitive_offsets(domain.dim):
        sl_src = tuple(slice(max(0, -o), min(m, m - o))
                       for o, m in zip(off, shape))
        sl_dst = tuple(slice(max(0, o), min(m, m + o))
                       for o, m in zip(off, shape))
        s_flat = full_idx[sl_src].ravel()
        d_flat = full_idx[sl_dst].ravel()
        keep = inside[s_flat] & inside[d_flat]
        src_list.append(node_id[s_flat[keep]])
        dst_list.append(node_id[d_flat[keep]])
    src = np.concatenate(src_list)
    dst = np.concatenate(dst_list)

    scale = max(1.0, float(np.max(np.abs(rest_rate))) + abs(a))
    s_hi = 8.0 * (1.0 + math.sqrt(2.0 * scale))
    cost = _chord_costs(model, pts[src], pts[dst], a, s_hi)

    # group candidates by destination once; sweeps reuse the grouping
    order = np.argsort(dst, kind="stable")
    src_o = src[order]
    cost_o = cost[order]
    dst_o = dst[order]
    starts = np.flatnonzero(np.r_[True, dst_o[1:] != dst_o[:-1]])
    dst_u = dst_o[starts]

    u = np.full(n, np.inf)
    u[anchor] = 0.0
    span = max(shape)
    cap = max_sweeps if max_sweeps is not None else 8 * span + 200
    tol_fp = 1e-13 * max(1.0, scale * float(domain.diameter))
    for _ in range(cap):
        cand = cost_o + u[src_o]
        relax = np.minimum.reduceat(cand, starts)
        new_u = u.copy()
        new_u[dst_u] = np.minimum(new_u[dst_u], relax)
        changed = new_u < u - tol_fp  # inf -> finite counts as a change
        u = new_u
        if not changed.any():
            break
    else:
        raise NotConverged(
            f"no fixed point after {cap} sweeps (refine={refine})")
    if not np.all(np.isfinite(u)):
        raise NotConverged(
            f"{int(np.sum(~np.isfinite(u)))} lattice nodes unreachable "
            "from the anchor")

    # sample back onto the requested grid: one exact-position relaxation
    tree = cKDTree(pts)
    radius = 3.2 * h_f
    groups = tree.query_ball_point(coarse.points, r=radius)
    counts = np.array([len(g) for g in groups])
    if np.any(counts == 0):
        _, nearest = tree.query(coarse.points[counts == 0])
        for slot, j in zip(np.flatnonzero(counts == 0), np.atleast_1d(nearest)):
            groups[slot] = [int(j)]
        counts = np.array([len(g) for g in groups])
    flat_src = np.concatenate([np.asarray(g, dtype=int) for g in groups])
    flat_dst = np.repeat(np.arange(len(coarse.points)), counts)
    link = _chord_costs(model, pts[flat_src], coarse.points[flat_dst], a, s_hi)
    vals = link + u[flat_src]
    starts_c = np.r_[0, np.cumsum(counts)[:-1]]
    out = np.minimum.reduceat(vals, starts_c)
    return GridField(coarse, out)
