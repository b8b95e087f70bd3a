"""Reflected trajectories via penalization.

The constrained dynamics  eta' + l * gamma(eta) = v,  l >= 0,  l = 0 in the
interior, is approximated by the stiff ODE

    xi' = v(t) - (1/eps) * q(xi) * gamma(xi),
    q   = clip(psi / rho0, 0, delta),

whose multiplier is read off as l = q(xi)/eps.  Dividing psi by the gradient
floor rho0 makes q behave like a one-sided distance, so the extracted
multiplier has the correct normalization independently of how steep the
defining function happens to be.  Trajectories are integrated with fixed
outer steps and automatic sub-stepping (sub-step <= eps/4), then the
penalization strength is halved until the constrained path stops moving.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import ImplicitDomain, ObliqueField, project_to_closure


class SkorokhodError(Exception):
    pass


class StiffnessFailure(SkorokhodError):
    pass


class NoConvergence(SkorokhodError):
    pass


@dataclass
class PenaltyScheme:
    """Integration parameters for one penalized solve."""
    epsilon: float
    cap_delta: float
    h_ode: float
    method: int = 2  # 1 = Euler, 2 = Heun

    def __post_init__(self):
        if self.epsilon <= 0 or self.cap_delta <= 0 or self.h_ode <= 0:
            raise ValueError("epsilon, cap_delta, h_ode must be positive")
        if self.method not in (1, 2):
            raise ValueError("method must be 1 (Euler) or 2 (Heun)")


@dataclass
class PenalizedPath:
    """Raw output of one penalized integration on a uniform grid."""
    t: np.ndarray            # (n+1,)
    xi: np.ndarray           # (n+1, d)
    v: np.ndarray            # (n, d) piecewise-constant input
    q: np.ndarray            # (n+1,) penalty values along the path
    lam_steps: np.ndarray    # (n,)   integral of l over each step
    glam_steps: np.ndarray   # (n, d) integral of l*gamma over each step
    scheme: PenaltyScheme = None


@dataclass
class SkorokhodTriple:
    """Constrained path, driving velocity and boundary multiplier."""
    t: np.ndarray            # (n+1,)
    eta: np.ndarray          # (n+1, d)
    v: np.ndarray            # (n, d)
    l: np.ndarray            # (n+1,)
    residuals: dict = field(default_factory=dict)


def _v_steps(v, t_grid: np.ndarray, dim: int) -> np.ndarray:
    """Normalize the velocity input to per-step constants (left endpoints)."""
    n = len(t_grid) - 1
    if callable(v):
        out = np.stack([np.asarray(v(float(t)), dtype=float).reshape(dim)
                        for t in t_grid[:-1]])
        return out
    a = np.asarray(v, dtype=float)
    if a.ndim == 1:
        return np.broadcast_to(a.reshape(1, dim), (n, dim)).copy()
    if a.shape == (n + 1, dim):
        a = a[:-1]
    if a.shape != (n, dim):
        raise ValueError(f"velocity array has shape {a.shape}, "
                         f"expected ({n}, {dim})")
    return a.copy()


def _scaled_penalty(domain: ImplicitDomain, cap: float, x: np.ndarray) -> np.ndarray:
    return np.clip(domain.psi(x) / domain.rho0, 0.0, cap)


def solve_penalized(domain: ImplicitDomain, field_: ObliqueField,
                    x0, v, T: float,
                    scheme: PenaltyScheme) -> PenalizedPath:
    """Integrate the penalized ODE over [0, T].

    The outer grid has step ``scheme.h_ode``; each outer step is split into
    sub-steps no longer than eps/4 (stability of the stiff relaxation).
    A sub-step that moves the penalty by more than cap_delta/2 aborts with
    StiffnessFailure rather than silently tunneling through the boundary
    layer.
    """
    eps, delta, h = scheme.epsilon, scheme.cap_delta, scheme.h_ode
    n = max(1, int(round(T / h)))
    t_grid = np.linspace(0.0, float(T), n + 1)
    h = t_grid[1] - t_grid[0]
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    dim = domain.dim
    v_arr = _v_steps(v, t_grid, dim)

    n_sub = max(1, int(np.ceil(h / (0.25 * eps))))
    dt = h / n_sub

    def rate(x):
        q = _scaled_penalty(domain, delta, x[None, :])[0]
        gam = field_.gamma(x[None, :])[0] if q > 0.0 else np.zeros(dim)
        return q, gam

    xi = np.empty((n + 1, dim))
    qs = np.empty(n + 1)
    lam = np.zeros(n)
    glam = np.zeros((n, dim))
    xi[0] = x0
    qs[0] = _scaled_penalty(domain, delta, x0[None, :])[0]

    x = x0.copy()
    for k in range(n):
        vk = v_arr[k]
        for _ in range(n_sub):
            q1, g1 = rate(x)
            f1 = vk - (q1 / eps) * g1
            if scheme.method == 1:
                x_new = x + dt * f1
                q2 = _scaled_penalty(domain, delta, x_new[None, :])[0]
                lam[k] += dt * (q1 / eps)
                glam[k] += dt * (q1 / eps) * g1
            else:
                x_mid = x + dt * f1
                q2, g2 = rate(x_mid)
                f2 = vk - (q2 / eps) * g2
                x_new = x + 0.5 * dt * (f1 + f2)
                q2 = _scaled_penalty(domain, delta, x_new[None, :])[0]
                lam[k] += 0.5 * dt * (q1 + q2) / eps
                glam[k] += 0.5 * dt * ((q1 / eps) * g1 + (q2 / eps) * g2)
            if abs(q2 - q1) > 0.5 * delta:
                raise StiffnessFailure(
                    f"penalty jumped by {abs(q2 - q1):.3e} (> delta/2) in one "
                    f"sub-step; decrease h_ode or increase epsilon")
            x = x_new
        xi[k + 1] = x
        qs[k + 1] = _scaled_penalty(domain, delta, x[None, :])[0]
    return PenalizedPath(t=t_grid, xi=xi, v=v_arr, q=qs,
                         lam_steps=lam, glam_steps=glam, scheme=scheme)


def extract_triple(domain: ImplicitDomain, field_: ObliqueField,
                   path: PenalizedPath) -> SkorokhodTriple:
    """Project the penalized path onto the closure and read off l = q/eps."""
    eps = path.scheme.epsilon
    eta = project_to_closure(domain, path.xi)
    l = path.q / eps
    triple = SkorokhodTriple(t=path.t, eta=eta, v=path.v, l=l)
    triple.residuals = _residuals(domain, field_, triple, path)
    return triple


def _residuals(domain: ImplicitDomain, field_: ObliqueField,
               triple: SkorokhodTriple,
               path: Optional[PenalizedPath] = None,
               eps_hint: Optional[float] = None) -> dict:
    t, eta, v, l = triple.t, triple.eta, triple.v, triple.l
    h_steps = np.diff(t)
    h = float(np.min(h_steps)) if len(h_steps) else 1.0
    v_norm = float(np.max(np.linalg.norm(v, axis=-1))) if len(v) else 0.0
    psi_eta = domain.psi(eta) / domain.rho0

    # complementarity: multiplier vanishes strictly inside
    depth = np.maximum(0.0, -psi_eta - domain.boundary_tol)
    comp = float(np.max(l * depth)) if len(l) else 0.0

    # Midpoint ODE residual.  Steps inside the multiplier relaxation layer
    # (width ~eps after each contact change) reflect the penalization, not
    # the limit dynamics, and are excluded from the sup.
    gam = field_.gamma(eta)
    d_eta = (eta[1:] - eta[:-1]) / h_steps[:, None]
    lg = l[:, None] * gam
    mid = d_eta + 0.5 * (lg[1:] + lg[:-1]) - v
    contact = l > 1e-12
    steady = contact[1:] == contact[:-1]
    if path is not None:
        eps_hint = path.scheme.epsilon
    if eps_hint is None and triple.residuals is not None:
        eps_hint = triple.residuals.get("eps_final", triple.residuals.get("eps"))
    if eps_hint:
        w = int(np.ceil(8.0 * eps_hint / h)) + 1
        # t = 0 is always a potential layer: the penalized multiplier
        # starts at q(x0)/eps, not at its sliding equilibrium value.
        flips = np.r_[0, np.flatnonzero(~steady)]
        for i in flips:
            steady[i:i + w] = False
    ode_mid = float(np.max(np.linalg.norm(mid[steady], axis=-1))) if np.any(steady) else 0.0

    out = {
        "max_psi_eta": float(np.max(psi_eta)),
        "min_l": float(np.min(l)),
        "complementarity": comp,
        "ode_mid": ode_mid,
        "n_contact_flips": int(np.sum(~steady)),
        "v_sup": v_norm,
        "h_t": float(h),
    }
    if v_norm > 0.0:
        speed = np.linalg.norm(d_eta, axis=-1)
        out["prop_bound_ratio"] = float(max(np.max(speed), np.max(l)) / v_norm)
    if path is not None:
        # integral form: Delta eta + int l*gamma - int v, per step
        res = eta[1:] - eta[:-1] + path.glam_steps - v * h
        out["ode_integral"] = float(np.max(np.linalg.norm(res, axis=-1)) / h)
        out["eps"] = path.scheme.epsilon
    return out


def solve_reflected(domain: ImplicitDomain, field_: ObliqueField,
                    x0, v, T: float, tol: float = 1e-3,
                    eps0: Optional[float] = None,
                    h_ode: Optional[float] = None,
                    cap_delta: Optional[float] = None,
                    method: int = 2,
                    max_halvings: int = 12) -> SkorokhodTriple:
    """Reflected trajectory by halving the penalization strength.

    Solves at eps0, eps0/2, ... until consecutive constrained paths agree
    within ``tol`` in the sup norm.  If the path-difference contraction
    ratio exceeds 0.8 for three consecutive halvings while still above
    tolerance, raises NoConvergence.
    """
    h = T / 4096.0 if h_ode is None else float(h_ode)
    eps = 10.0 * h if eps0 is None else float(eps0)
    delta = 0.5 * domain.band_width if cap_delta is None else float(cap_delta)

    scheme = PenaltyScheme(epsilon=eps, cap_delta=delta, h_ode=h, method=method)
    path = solve_penalized(domain, field_, x0, v, T, scheme)
    prev = extract_triple(domain, field_, path)
    diffs, ratios = [], []
    bad_streak = 0
    for _ in range(max_halvings):
        eps *= 0.5
        scheme = PenaltyScheme(epsilon=eps, cap_delta=delta, h_ode=h, method=method)
        path = solve_penalized(domain, field_, x0, v, T, scheme)
        cur = extract_triple(domain, field_, path)
        d = float(np.max(np.linalg.norm(cur.eta - prev.eta, axis=-1)))
        diffs.append(d)
        if len(diffs) >= 2 and diffs[-2] > 0:
            r = diffs[-1] / diffs[-2]
            ratios.append(r)
            bad_streak = bad_streak + 1 if r > 0.8 else 0
            if bad_streak >= 3:
                raise NoConvergence(
                    f"path differences not contracting: ratios {ratios[-3:]}")
        prev = cur
        if d < tol:
            break
    else:
        raise NoConvergence(
            f"still moving by {diffs[-1]:.3e} after {max_halvings} halvings")
    prev.residuals["eps_final"] = eps
    prev.residuals["diffs"] = diffs
    prev.residuals["contraction_ratios"] = ratios
    return prev


@dataclass
class TripleReport:
    ok: bool
    max_psi_eta: float
    min_l: float
    complementarity: float
    ode_mid: float
    bound_ratio: float
    bound_limit: float
    failures: list = field(default_factory=list)


def validate_triple(domain: ImplicitDomain, field_: ObliqueField,
                    triple: SkorokhodTriple,
                    tol_geo: Optional[float] = None,
                    tol_comp: Optional[float] = None,
                    tol_ode: Optional[float] = None) -> TripleReport:
    """Check the defining properties of a (possibly hand-built) triple.

    * path stays in the closure:      psi(eta)/rho0 <= tol_geo
    * multiplier sign:                l >= -1e-12
    * complementarity:                l * interior-depth <= tol_comp
    * midpoint ODE residual:          <= tol_ode away from contact flips
    * a posteriori speed/multiplier bound vs (1 + |gamma| / delta0)
    """
    res = _residuals(domain, field_, triple)
    v_sup = res["v_sup"]
    eps_hint = None
    if triple.residuals is not None:
        eps_hint = triple.residuals.get("eps_final", triple.residuals.get("eps"))
    if tol_geo is None:
        tol_geo = 10.0 * eps_hint if eps_hint else 100.0 * domain.boundary_tol
    if tol_comp is None:
        tol_comp = 0.05 * max(v_sup, 1e-12)
    if tol_ode is None:
        tol_ode = 0.04 * (1.0 + field_.gamma_sup / field_.delta0) * max(v_sup, 1e-12)
    limit = 1.1 * (1.0 + field_.gamma_sup / field_.delta0)
    ratio = res.get("prop_bound_ratio", 0.0)

    failures = []
    if res["max_psi_eta"] > tol_geo:
        failures.append(f"path leaves closure: {res['max_psi_eta']:.3e} > {tol_geo:.3e}")
    if res["min_l"] < -1e-12:
        failures.append(f"negative multiplier: {res['min_l']:.3e}")
    if res["complementarity"] > tol_comp:
        failures.append(f"complementarity defect {res['complementarity']:.3e}")
    if res["ode_mid"] > tol_ode:
        failures.append(f"ODE residual {res['ode_mid']:.3e} > {tol_ode:.3e}")
    if ratio > limit:
        failures.append(f"speed/multiplier ratio {ratio:.3f} > {limit:.3f}")
    return TripleReport(ok=not failures, max_psi_eta=res["max_psi_eta"],
                        min_l=res["min_l"], complementarity=res["complementarity"],
                        ode_mid=res["ode_mid"], bound_ratio=ratio,
                        bound_limit=limit, failures=failures)
