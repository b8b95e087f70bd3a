"""Critical value, minimal-action potential, Aubry set and steady states.

The stationary problem H(x, Du) = a with the oblique boundary condition
is attacked through its action side.  Grid nodes become vertices of a
directed graph whose edge weights are one-substep path costs at level a:
moving between stencil neighbors pays the (midpoint) Lagrangian of the
control plus a per-unit-time shift a, and motion between two boundary
nodes may additionally press against the boundary along the oblique
direction, paying the multiplier cost g per unit of pressing.  Resting
at a node is a zero-length loop whose rate is the stationary cost
(including the pressing option at boundary nodes).

On this graph the classical facts become finite statements:

* a is super-critical iff the graph has no negative cycle (a potential,
  i.e. a discrete subsolution, exists) -- so the critical value is found
  by bisection with Bellman-Ford negative-cycle detection;
* the minimal-action potential is the all-pairs shortest-path matrix at
  the critical level;
* the Aubry set collects nodes carrying (near) zero-cost loops;
* solutions are represented as min over Aubry nodes of trace + action,
  and the long-time Cauchy evolution relaxes onto such a solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import NegativeCycleError, bellman_ford, johnson

from . import checks
from .geometry import ImplicitDomain, ObliqueField, project_to_boundary
from .grid import ControlSet, Grid, GridField
from .hamiltonian import HamiltonianModel, control_bound, lagrangian_batch
from .scheme import solve_cauchy


class WeakKamError(Exception):
    """Errors in the critical-value / action-potential machinery."""


class BracketFailure(WeakKamError):
    """Bisection bracket could not be established within the search range."""


class NegativeCycleAtC(WeakKamError):
    """The graph still has a negative cycle at the adopted level."""


class SlopeNotConverged(WeakKamError):
    """The long-time mean-growth slope has not stabilized."""


class IncompatibleTrace(WeakKamError):
    """Prescribed Aubry values violate the action compatibility bound."""


class NotRelaxed(WeakKamError):
    """The long-time running minimum is still moving."""


# -- action graph ------------------------------------------------------------------


@dataclass
class ActionGraph:
    """Directed stencil graph with level-affine edge costs.

    Candidate decomposition: every edge carries speed candidates with
    cost alpha[e, k] + tau[e, k] * a at level a; edges joining two
    boundary nodes carry extra pressing candidates in a side block
    indexed into the edge list by press_idx.  Rest loops are stored as
    per-node rate menus rest_alpha[i, k] + a.
    """

    grid: Grid
    level_a: float
    edge_src: np.ndarray
    edge_dst: np.ndarray
    alpha: np.ndarray
    tau: np.ndarray
    press_idx: np.ndarray
    press_alpha: np.ndarray
    press_tau: np.ndarray
    rest_alpha: np.ndarray
    press_speeds: np.ndarray
    speeds: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.grid.points)

    def edge_cost(self, a: Optional[float] = None) -> np.ndarray:
        """Minimal traversal cost per directed edge at level a."""
        a = self.level_a if a is None else float(a)
        cost = np.min(self.alpha + self.tau * a, axis=1)
        if len(self.press_idx):
            side = np.min(self.press_alpha + self.press_tau * a, axis=1)
            cost[self.press_idx] = np.minimum(cost[self.press_idx], side)
        return cost

    def edge_tau(self, a: Optional[float] = None) -> np.ndarray:
        """Duration of the per-edge optimal candidate at level a."""
        a = self.level_a if a is None else float(a)
        cand = self.alpha + self.tau * a
        k = np.argmin(cand, axis=1)
        rows = np.arange(len(self.tau))
        out = self.tau[rows, k]
        if len(self.press_idx):
            cand_p = self.press_alpha + self.press_tau * a
            kp = np.argmin(cand_p, axis=1)
            rp = np.arange(len(self.press_tau))
            better = cand_p[rp, kp] < cand[rows, k][self.press_idx]
            sel = self.press_idx[better]
            out[sel] = self.press_tau[rp[better], kp[better]]
        return out

    def rest_rate(self, a: Optional[float] = None) -> np.ndarray:
        """Best stationary cost rate per node at level a."""
        a = self.level_a if a is None else float(a)
        return np.min(self.rest_alpha, axis=1) + a

    def at_level(self, a: float) -> "ActionGraph":
        return ActionGraph(self.grid, float(a), self.edge_src, self.edge_dst,
                           self.alpha, self.tau, self.press_idx,
                           self.press_alpha, self.press_tau, self.rest_alpha,
                           self.press_speeds, self.speeds)

    def cost_matrix(self, a: Optional[float] = None) -> csr_matrix:
        """Sparse node-to-node cost matrix at level a (zero-cost edges kept)."""
        w = self.edge_cost(a)
        n = self.n_nodes
        # csr drops stored zeros on construction only if asked; keep them
        # explicit by nudging exact zeros to a tiny positive epsilon
        w = np.where(w == 0.0, 1e-300, w)
        return csr_matrix((w, (self.edge_src, self.edge_dst)), shape=(n, n))


# extra chord directions: knight moves halve the worst-case angle between
# a straight segment and the nearest stencil direction (22.5 deg -> ~9 deg),
# which drops the metrication overhead of zigzag paths to about a percent
_KNIGHT_2D = ((2, 1), (1, 2), (-1, 2), (-2, 1),
              (-2, -1), (-1, -2), (1, -2), (2, -1))
_LONG_1D = ((2,), (-2,))


def build_action_graph(model: HamiltonianModel, domain: ImplicitDomain,
                       field_: Optional[ObliqueField], grid: Grid,
                       a: float = 0.0, n_speed: int = 20,
                       n_press: int = 6, c_max: Optional[float] = None,
                       s_min_frac: float = 1e-3) -> ActionGraph:
    """Assemble the level-a action graph on an extended grid stencil.

    Chords join stencil neighbors plus knight-move neighbors whose
    midpoint stays inside the domain; candidates scan a geometric speed
    menu and evaluate the Lagrangian at the chord midpoint (second-order
    along smooth paths, which radial-oracle agreement requires).  Edges
    joining two boundary nodes get extra candidates pressing along the
    oblique direction with multiplier cost g per unit press; rest loops
    at boundary nodes get the same option.
    """
    pts = grid.points
    n = len(pts)
    if c_max is None:
        sub = pts[:: max(1, n // 256)]
        c_max = control_bound(model, max(1.0, model.p_radius_hint), sub)
    speeds = np.geomspace(s_min_frac * c_max, c_max, n_speed)
    press = np.concatenate([[0.0], np.geomspace(0.05 * c_max, c_max,
                                                n_press - 1)])

    ksrc, kdst = grid.lattice_pairs(
        _LONG_1D if grid.dim == 1 else _KNIGHT_2D)
    if len(ksrc):
        kmid = 0.5 * (pts[ksrc] + pts[kdst])
        keep = grid.domain.psi(kmid) <= 0.0
        ksrc, kdst = ksrc[keep], kdst[keep]
    src = np.concatenate([grid.edge_src, ksrc])
    dst = np.concatenate([grid.edge_dst, kdst])
    # node merges near the boundary can make a knight pair coincide with a
    # stencil pair; duplicate (src, dst) rows would be summed by the csr
    # constructor, so keep one row per ordered pair
    key = src.astype(np.int64) * np.int64(n) + dst
    uniq_first = np.unique(key, return_index=True)[1]
    if len(uniq_first) < len(key):
        order = np.sort(uniq_first)
        src, dst = src[order], dst[order]
    delta = pts[dst] - pts[src]
    dist = np.linalg.norm(delta, axis=-1)
    mid = 0.5 * (pts[src] + pts[dst])

    # plain chords: tau = dist / s, velocity s along the chord
    tau = dist[:, None] / speeds[None, :]
    xi = delta[:, None, :] / tau[..., None]
    alpha = tau * lagrangian_batch(model, mid[:, None, :], -xi)

    press_idx = np.zeros(0, dtype=np.int64)
    press_alpha = np.zeros((0, 0))
    press_tau = np.zeros((0, 0))
    both_b = grid.is_boundary[src] & grid.is_boundary[dst]
    if np.any(both_b) and field_ is not None:
        press_idx = np.flatnonzero(both_b)
        bmid = project_to_boundary(domain, mid[press_idx])
        gam = field_.gamma(bmid)
        gv = np.atleast_1d(field_.g(bmid))
        sp = press[1:]
        tb = tau[press_idx]
        # control xi = chord velocity + s_p * gamma, multiplier l = s_p
        xi_b = (delta[press_idx, None, None, :] / tb[:, :, None, None]
                + sp[None, None, :, None] * gam[:, None, None, :])
        Lb = lagrangian_batch(model, bmid[:, None, None, :], -xi_b)
        cost_b = tb[:, :, None] * (Lb + sp[None, None, :]
                                   * gv[:, None, None])
        press_alpha = cost_b.reshape(len(press_idx), -1)
        press_tau = np.repeat(tb, len(sp), axis=1)

    # rest loops: interior cost rate L(x, 0); boundary adds pressing
    rest = np.full((n, len(press)), np.inf)
    rest[:, 0] = lagrangian_batch(model, pts, np.zeros_like(pts))
    if field_ is not None and np.any(grid.is_boundary):
        bi = np.flatnonzero(grid.is_boundary)
        gam = grid.boundary_gamma
        gv = np.atleast_1d(grid.boundary_g)
        sp = press[1:]
        xi_r = -sp[None, :, None] * gam[:, None, :]
        Lr = lagrangian_batch(model, pts[bi][:, None, :], xi_r)
        rest[bi, 1:] = Lr + sp[None, :] * gv[:, None]

    return ActionGraph(grid=grid, level_a=float(a), edge_src=src,
                       edge_dst=dst, alpha=alpha, tau=tau,
                       press_idx=press_idx, press_alpha=press_alpha,
                       press_tau=press_tau, rest_alpha=rest,
                       press_speeds=press, speeds=speeds)


# -- negative-cycle detection -------------------------------------------------------


def has_negative_cycle(graph: ActionGraph, a: float,
                       rate_tol: float = 1e-12) -> bool:
    """True iff some closed walk (rest loop or edge cycle) has cost < 0.

    Rest loops are scanned directly; edge cycles fall to Bellman-Ford
    from node 0 (the stencil graph is strongly connected, so every
    cycle is reachable).
    """
    scale = 1.0 + abs(a)
    rate = graph.rest_rate(a)
    if np.any(rate < -rate_tol * scale):
        return True
    try:
        bellman_ford(graph.cost_matrix(a), directed=True, indices=0)
    except NegativeCycleError:
        return True
    return False


@dataclass
class CriticalValue:
    """Critical level estimates and their agreement diagnostics."""

    c_cycle: float
    c_slope: Optional[float]
    c: float
    gap: Optional[float]
    bracket: tuple
    width: float
    n_bisect: int
    potential: np.ndarray = field(repr=False)
    potential_check: Optional[checks.CheckReport] = field(default=None,
                                                          repr=False)

    def with_slope(self, c_slope: float) -> "CriticalValue":
        return CriticalValue(self.c_cycle, float(c_slope), self.c,
                             abs(self.c_cycle - float(c_slope)), self.bracket,
                             self.width, self.n_bisect, self.potential,
                             self.potential_check)


def _graph_potential(graph: ActionGraph, a: float) -> np.ndarray:
    """Shortest-path distances from node 0: a discrete subsolution at a."""
    D = bellman_ford(graph.cost_matrix(a), directed=True, indices=0)
    return np.asarray(D, dtype=float).ravel()


def critical_value_cycle(model: HamiltonianModel, domain: ImplicitDomain,
                         field_: Optional[ObliqueField], grid: Grid,
                         bracket: Optional[tuple] = None,
                         tol: Optional[float] = None,
                         graph: Optional[ActionGraph] = None,
                         run_check: bool = True) -> CriticalValue:
    """Critical level by bisection on the negative-cycle threshold.

    The lower end must admit a negative cycle and the upper end must
    not; a supplied bracket is expanded geometrically until both hold
    (BracketFailure beyond +-10 * scale).  Returns the certified upper
    end, with the node potential there as a discrete subsolution.
    """
    if graph is None:
        graph = build_action_graph(model, domain, field_, grid)
    # every level below lo_0 makes some rest loop strictly negative,
    # every level above hi_0 makes every edge and rest rate nonnegative
    lo0 = float(np.max(-np.min(graph.rest_alpha, axis=1)))
    hi0 = max(float(np.max(-graph.alpha / graph.tau)), lo0)
    if len(graph.press_idx):
        hi0 = max(hi0, float(np.max(-graph.press_alpha / graph.press_tau)))
    scale = 1.0 + max(abs(lo0), abs(hi0))
    if tol is None:
        tol = 1e-4 * scale
    if bracket is None:
        lo, hi = lo0 - 1e-3 * scale, hi0 + 1e-9 * scale
    else:
        lo, hi = float(bracket[0]), float(bracket[1])
    step = 0.5 * scale
    while not has_negative_cycle(graph, lo):
        lo -= step
        step *= 2.0
        if lo < -10.0 * scale + min(0.0, lo0):
            raise BracketFailure(
                f"no negative cycle found down to a = {lo:.3g}")
    step = 0.5 * scale
    while has_negative_cycle(graph, hi):
        hi += step
        step *= 2.0
        if hi > 10.0 * scale + max(0.0, hi0):
            raise BracketFailure(
                f"negative cycles persist up to a = {hi:.3g}")
    n_bisect = 0
    while hi - lo > tol:
        mid_a = 0.5 * (lo + hi)
        if has_negative_cycle(graph, mid_a):
            lo = mid_a
        else:
            hi = mid_a
        n_bisect += 1
    pot = _graph_potential(graph, hi)
    report = None
    if run_check:
        report = checks.check_subsolution(model, domain, field_, grid, pot,
                                          a=hi)
    return CriticalValue(c_cycle=hi, c_slope=None, c=hi, gap=None,
                         bracket=(lo, hi), width=hi - lo, n_bisect=n_bisect,
                         potential=pot, potential_check=report)


@dataclass
class SlopeInfo:
    slope: float
    window_slopes: tuple
    residual: float
    horizon: float
    n_samples: int


def critical_value_slope(model: HamiltonianModel, domain: ImplicitDomain,
                         field_: Optional[ObliqueField], grid: Grid,
                         T: float = 4.0, dt: Optional[float] = None,
                         controls: Optional[ControlSet] = None,
                         tol_slope: float = 0.05) -> tuple:
    """Critical level from the long-time growth of the Cauchy solution.

    Runs the evolution at level 0 from zero data; the spatial mean then
    grows like -c t, and minus the least-squares slope over the last
    half of [0, T] estimates c.  The slopes fitted on the last two
    quarters must agree within tol_slope (else SlopeNotConverged).
    """
    n = len(grid.points)
    if controls is None:
        sub = grid.points[:: max(1, n // 256)]
        c_ctl = control_bound(model, max(1.0, model.p_radius_hint), sub)
        controls = ControlSet.build(c_ctl, grid.dim, n_angle=16, n_speed=10)
    if dt is None:
        dt = 1.8 * grid.h / controls.c_ctl
    tf = solve_cauchy(model, domain, field_, grid, np.zeros(n), T, dt=dt,
                      a=0.0, controls=controls, refine_speed=False,
                      store_every=1)
    times = np.asarray(tf.times)
    means = np.array([np.mean(v) for v in tf.values])
    half = times >= 0.5 * T
    q3 = (times >= 0.5 * T) & (times < 0.75 * T)
    q4 = times >= 0.75 * T
    if np.sum(q3) < 3 or np.sum(q4) < 3:
        raise SlopeNotConverged("too few samples in the fit windows")
    s_half = np.polyfit(times[half], means[half], 1)[0]
    s3 = np.polyfit(times[q3], means[q3], 1)[0]
    s4 = np.polyfit(times[q4], means[q4], 1)[0]
    if abs(s3 - s4) > tol_slope * (1.0 + abs(s_half)):
        raise SlopeNotConverged(
            f"window slopes {s3:.4g} and {s4:.4g} differ by more than "
            f"{tol_slope:.3g} (horizon too short)")
    fit = np.polyval(np.polyfit(times[half], means[half], 1), times[half])
    residual = float(np.max(np.abs(fit - means[half])))
    info = SlopeInfo(slope=float(s_half), window_slopes=(float(s3), float(s4)),
                     residual=residual, horizon=float(T),
                     n_samples=int(np.sum(half)))
    return -float(s_half), info


# -- minimal-action potential -------------------------------------------------------


@dataclass
class ManePotential:
    """All-pairs minimal action at the critical level.

    Orientation: d[i, j] is the cost of moving from node i to node j.
    The variational pairing bounding u(x) - u(y) is paper_d(x, y) =
    d[node(y), node(x)] (curves run from y to x).
    """

    level: float
    d: np.ndarray = field(repr=False)
    predecessors: Optional[np.ndarray] = field(repr=False, default=None)
    sources: Optional[np.ndarray] = None
    orientation: str = "d[i,j] = min action moving node i -> node j"

    def paper_d(self, ix: int, iy: int) -> float:
        """Potential pairing d(x, y): action from node iy to node ix."""
        if self.sources is not None:
            row = np.flatnonzero(self.sources == iy)
            if len(row) == 0:
                raise WeakKamError(f"node {iy} not among computed sources")
            return float(self.d[row[0], ix])
        return float(self.d[iy, ix])

    def path(self, i: int, j: int) -> list:
        """Node sequence of a minimizing walk i -> j (needs predecessors)."""
        if self.predecessors is None:
            raise WeakKamError("predecessors were not stored")
        if self.sources is not None:
            row = np.flatnonzero(self.sources == i)
            if len(row) == 0:
                raise WeakKamError(f"node {i} not among computed sources")
            pr = self.predecessors[row[0]]
        else:
            pr = self.predecessors[i]
        out = [int(j)]
        k = int(j)
        while k != i:
            k = int(pr[k])
            if k < 0:
                raise WeakKamError(f"node {j} unreachable from {i}")
            out.append(k)
            if len(out) > len(pr) + 1:
                raise WeakKamError("predecessor walk did not close")
        return out[::-1]

    def triangle_defect(self, block: int = 48) -> float:
        """max over (i, j) of d[i, j] - min_k (d[i, k] + d[k, j]).

        Positive values violate the triangle inequality.  Row blocks keep
        the intermediate (block, n, n) tensor small.
        """
        if self.sources is not None:
            raise WeakKamError("triangle check needs the full action matrix")
        D = self.d
        n = len(D)
        worst = -np.inf
        for i0 in range(0, n, block):
            rows = D[i0:i0 + block]
            relaxed = np.min(rows[:, :, None] + D[None, :, :], axis=1)
            worst = max(worst, float(np.max(rows - relaxed)))
        return worst


def mane_potential(graph: ActionGraph, sources=None,
                   node_cap: int = 20000) -> ManePotential:
    """All-pairs (or selected-source) shortest-path action at graph level.

    Johnson's reweighting handles the slightly negative edges left below
    the bisection tolerance; a genuine negative cycle at the adopted
    level raises NegativeCycleAtC.
    """
    n = graph.n_nodes
    mat = graph.cost_matrix()
    try:
        if sources is None:
            if n > node_cap:
                raise WeakKamError(
                    f"{n} nodes would need a dense {n}x{n} action matrix; "
                    "pass sources=... for the sparse mode")
            D, pred = johnson(mat, directed=True, return_predecessors=True)
            src_arr = None
        else:
            src_arr = np.asarray(sources, dtype=np.int64).ravel()
            D, pred = bellman_ford(mat, directed=True, indices=src_arr,
                                   return_predecessors=True)
    except NegativeCycleError as exc:
        raise NegativeCycleAtC(
            f"negative cycle at level {graph.level_a:.6g}; widen the "
            "critical-value tolerance or raise the level") from exc
    D = np.asarray(D, dtype=float)
    if sources is None:
        np.fill_diagonal(D, np.maximum(np.diag(D), 0.0))
    return ManePotential(level=graph.level_a, d=D, predecessors=pred,
                         sources=src_arr)


# -- Aubry set ----------------------------------------------------------------------


@dataclass
class AubryResult:
    """Zero-cost-loop residuals and the detected Aubry nodes."""

    r: np.ndarray
    mask: np.ndarray
    tol_A: float
    tau_min: float
    level: float
    fallback_used: bool
    grid: Grid = field(repr=False, default=None)
    level_slack: float = 0.0

    @property
    def nodes(self) -> np.ndarray:
        return np.flatnonzero(self.mask)


def aubry_detect(graph: ActionGraph, potential: ManePotential,
                 tau_min: Optional[float] = None,
                 tol_A: Optional[float] = None,
                 level_slack: Optional[float] = None) -> AubryResult:
    """Detect nodes carrying near-zero-cost loops at the critical level.

    The loop residual r(y) is the cheaper of the best round trip through
    another node and the best rest loop of duration tau_min.  Since the
    adopted level sits up to one bisection width above the true critical
    value, rest rates are deflated by level_slack before being charged
    for the full duration; otherwise genuine Aubry nodes would carry a
    spurious residual ~ tau_min * width that does not vanish with h.
    Nodes with r <= tol_A form the detected set; if empty, the argmin
    node is returned with a fallback flag (the limiting set is provably
    nonempty).
    """
    if potential.sources is not None:
        raise WeakKamError("Aubry detection needs the full action matrix")
    D = potential.d
    n = len(D)
    round_trip = D + D.T
    np.fill_diagonal(round_trip, np.inf)
    r_cycle = np.min(round_trip, axis=1)
    if tau_min is None:
        tau_med = float(np.median(graph.edge_tau()))
        tau_min = max(4.0 * tau_med, 1.0)
    if level_slack is None:
        level_slack = 2e-4 * (1.0 + abs(graph.level_a))
    rate = np.maximum(graph.rest_rate() - level_slack, 0.0)
    r = np.minimum(r_cycle, tau_min * rate)
    if tol_A is None:
        g_sup = 0.0
        if graph.grid.field is not None and np.any(graph.grid.is_boundary):
            g_sup = float(np.max(np.abs(graph.grid.boundary_g)))
        tol_A = 0.75 * graph.grid.h ** 2 * (1.0 + g_sup)
    mask = r <= tol_A
    fallback = False
    if not np.any(mask):
        mask = np.zeros(n, dtype=bool)
        mask[int(np.argmin(r))] = True
        fallback = True
    return AubryResult(r=r, mask=mask, tol_A=float(tol_A),
                       tau_min=float(tau_min), level=graph.level_a,
                       fallback_used=fallback, grid=graph.grid,
                       level_slack=float(level_slack))


# -- representation and long-time solution ------------------------------------------


def representation(u_on_A, potential: ManePotential, aubry: AubryResult,
                   tol: Optional[float] = None) -> GridField:
    """Rebuild a solution from its Aubry trace: u(x) = min_y u(y) + d(x, y).

    u_on_A holds the trace values in the node order of aubry.nodes.  The
    trace must satisfy u(y) - u(y') <= d(y, y') + tol pairwise on the
    detected set, else IncompatibleTrace.
    """
    idx = aubry.nodes
    u_a = np.asarray(u_on_A, dtype=float).ravel()
    if len(u_a) != len(idx):
        raise WeakKamError(
            f"trace has {len(u_a)} values for {len(idx)} Aubry nodes")
    if potential.sources is not None:
        raise WeakKamError("representation needs the full action matrix")
    D = potential.d
    scale = 1.0 + float(np.max(np.abs(u_a))) if len(u_a) else 1.0
    if tol is None:
        tol = 1e-8 * scale + 2.0 * aubry.tol_A
    # compatibility: u(y) - u(y') <= action from y' to y, i.e.
    # diff[m, k] = u_a[k] - u_a[m] <= D[idx[m], idx[k]] = bound[m, k]
    diff = u_a[None, :] - u_a[:, None]
    bound = D[np.ix_(idx, idx)]
    viol = diff - bound
    worst = float(np.max(viol))
    if worst > tol:
        i, j = np.unravel_index(int(np.argmax(viol)), viol.shape)
        raise IncompatibleTrace(
            f"trace violates u[{int(idx[j])}] - u[{int(idx[i])}] <= "
            f"d by {worst:.3g} (tol {tol:.3g})")
    vals = np.min(u_a[:, None] + D[idx, :], axis=0)
    return GridField(aubry.grid, vals)


def u_minus(model: HamiltonianModel, domain: ImplicitDomain,
            field_: Optional[ObliqueField], u0: GridField, T: float,
            a: float = 0.0, dt: Optional[float] = None,
            controls: Optional[ControlSet] = None,
            tol_relax: Optional[float] = None,
            keep_policies: bool = False):
    """Long-time lower limit of the evolution from u0 at level a.

    Returns the node-wise running minimum of w(., t) over t in [T/2, T]
    plus the time field itself.  If that minimum still drops by more
    than tol_relax over the last quarter of the horizon, the evolution
    has not relaxed and NotRelaxed is raised.
    """
    grid = u0.grid
    tf = solve_cauchy(model, domain, field_, grid, u0.values, T, dt=dt,
                      a=a, controls=controls, store_every=1,
                      keep_policies=keep_policies)
    times = np.asarray(tf.times)
    vals = np.asarray(tf.values)
    win = times >= 0.5 * T
    run_min = np.min(vals[win], axis=0)
    last_q = times >= 0.75 * T
    min_to_3q = np.min(vals[win & ~last_q], axis=0)
    moved = float(np.max(min_to_3q - run_min))
    used_dt = times[1] - times[0] if len(times) > 1 else grid.h
    if tol_relax is None:
        tol_relax = 5.0 * (grid.h + used_dt)
    if moved > tol_relax:
        raise NotRelaxed(
            f"running minimum still dropped by {moved:.3g} over the last "
            f"quarter (tol {tol_relax:.3g}); extend the horizon")
    return GridField(grid, run_min), tf
