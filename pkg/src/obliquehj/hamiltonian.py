"""Hamiltonian models and numerical Legendre transforms.

Models are convex and coercive in the momentum variable.  The running cost
used by every solver is the Legendre transform L(x, xi) = sup_p (xi.p - H),
computed analytically for the built-in families and numerically (maximum
over growing balls) otherwise.  Values of +inf are legitimate: they encode
controls that no momentum can certify, and they propagate through min-type
reductions as absorbing elements.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

INFINITE = math.inf


class HamiltonianError(Exception):
    pass


class TruncationNotConverged(HamiltonianError):
    pass


class HamiltonianModel:
    """Convex coercive Hamiltonian H(x, p) with optional analytic data.

    Parameters
    ----------
    H : callable (x, p) -> values, broadcasting over leading axes.
    analytic_L : optional callable (x, xi) -> values (may return inf).
    p_radius_hint : initial truncation radius for the numerical transform.
    shift_a : level shift; the effective Hamiltonian is H - shift_a, so the
        effective running cost is L + shift_a.
    p_argmin : optional callable x -> momentum minimizing H(x, .); defaults
        to the origin, which is exact for all built-in families.
    """

    def __init__(self, H: Callable, analytic_L: Optional[Callable] = None,
                 p_radius_hint: float = 1.0, shift_a: float = 0.0,
                 name: str = "custom", p_argmin: Optional[Callable] = None):
        self.H_fn = H
        self.analytic_L = analytic_L
        self.p_radius_hint = float(p_radius_hint)
        self.shift_a = float(shift_a)
        self.name = name
        self._p_argmin = p_argmin

    def H(self, x, p) -> np.ndarray:
        """Effective Hamiltonian H(x, p) - shift_a."""
        out = np.asarray(self.H_fn(np.asarray(x, dtype=float),
                                   np.asarray(p, dtype=float)), dtype=float)
        if self.shift_a != 0.0:
            out = out - self.shift_a
        return out

    def p_argmin(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._p_argmin is not None:
            return np.asarray(self._p_argmin(x), dtype=float)
        return np.zeros_like(x)

    def shifted(self, a: float) -> "HamiltonianModel":
        """Same Hamiltonian at level shifted by a (H - shift_a - a)."""
        return HamiltonianModel(self.H_fn, analytic_L=self.analytic_L,
                                p_radius_hint=self.p_radius_hint,
                                shift_a=self.shift_a + float(a),
                                name=self.name, p_argmin=self._p_argmin)


# -- built-in families -----------------------------------------------------------


def kinetic() -> HamiltonianModel:
    """H = |p|^2 / 2, L = |xi|^2 / 2."""

    def H(x, p):
        return 0.5 * np.sum(p * p, axis=-1)

    def L(x, xi):
        return 0.5 * np.sum(xi * xi, axis=-1)

    return HamiltonianModel(H, analytic_L=L, p_radius_hint=1.0, name="kinetic")


def mechanical(V: Callable) -> HamiltonianModel:
    """H = |p|^2 / 2 - V(x), L = |xi|^2 / 2 + V(x)."""

    def H(x, p):
        return 0.5 * np.sum(p * p, axis=-1) - np.asarray(V(x), dtype=float)

    def L(x, xi):
        return 0.5 * np.sum(xi * xi, axis=-1) + np.asarray(V(x), dtype=float)

    return HamiltonianModel(H, analytic_L=L, p_radius_hint=1.0, name="mechanical")


def eikonal(f: Callable) -> HamiltonianModel:
    """H = |p| - f(x); L = f(x) on |xi| <= 1 and +inf outside."""

    def H(x, p):
        return np.linalg.norm(p, axis=-1) - np.asarray(f(x), dtype=float)

    def L(x, xi):
        speed = np.linalg.norm(xi, axis=-1)
        fv = np.broadcast_to(np.asarray(f(x), dtype=float), speed.shape)
        return np.where(speed <= 1.0 + 1e-12, fv, INFINITE)

    return HamiltonianModel(H, analytic_L=L, p_radius_hint=1.0, name="eikonal")


def anisotropic(M) -> HamiltonianModel:
    """H = <M(x) p, p> / 2 with M symmetric positive definite.

    M may be a constant 2x2 (or 1x1) array or a callable x -> matrix of
    shape (..., d, d).  L = <M(x)^-1 xi, xi> / 2.
    """
    if callable(M):
        M_fn = lambda x: np.asarray(M(x), dtype=float)
    else:
        M_const = np.asarray(M, dtype=float)
        M_fn = lambda x: np.broadcast_to(
            M_const, np.asarray(x).shape[:-1] + M_const.shape)

    def H(x, p):
        Mx = M_fn(x)
        return 0.5 * np.einsum("...ij,...i,...j->...", Mx, p, p)

    def L(x, xi):
        Minv = np.linalg.inv(M_fn(x))
        return 0.5 * np.einsum("...ij,...i,...j->...", Minv, xi, xi)

    return HamiltonianModel(H, analytic_L=L, p_radius_hint=1.0,
                            name="anisotropic")


# -- numerical Legendre transform --------------------------------------------------


def _p_ball_grid(dim: int, radius: float, n_angle: int, n_radius: int) -> np.ndarray:
    if dim == 1:
        return np.linspace(-radius, radius, 2 * n_radius + 1)[:, None]
    ang = np.linspace(0.0, 2.0 * np.pi, n_angle, endpoint=False)
    rad = np.linspace(0.0, radius, n_radius)
    P = rad[:, None, None] * np.stack([np.cos(ang), np.sin(ang)], axis=-1)[None]
    return P.reshape(-1, 2)


def legendre_truncated(model: HamiltonianModel, x, xi, m: float,
                       n_angle: int = 64, n_radius: int = 64,
                       ascent_steps: int = 20):
    """max over |p| <= m of xi.p - H(x, p), with the maximizer.

    Polar grid scan followed by coordinate-ascent refinement with shrinking
    steps (the objective is concave in p, so local ascent is global).
    Returns (value, p_star).
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    dim = xi.shape[-1]
    P = _p_ball_grid(dim, float(m), n_angle, n_radius)
    vals = np.tensordot(xi, P, axes=([-1], [-1])) - model.H(x[..., None, :], P)
    k = int(np.argmax(vals))
    best_p = P[k].copy()
    best_v = float(vals[..., k]) if vals.ndim else float(vals[k])

    step = float(m) / max(n_radius - 1, 1)
    for _ in range(ascent_steps):
        improved = False
        for d in range(dim):
            for sgn in (1.0, -1.0):
                cand = best_p.copy()
                cand[d] += sgn * step
                r = np.linalg.norm(cand)
                if r > m:
                    cand *= m / r
                v = float(np.dot(xi, cand) - model.H(x, cand))
                if v > best_v:
                    best_v, best_p = v, cand
                    improved = True
        if not improved:
            step *= 0.5
    return best_v, best_p


def lagrangian(model: HamiltonianModel, x, xi, tol: float = 1e-9,
               max_doublings: int = 12) -> float:
    """Running cost L(x, xi) at the model's level (analytic L + shift when
    available, truncated transform with radius doubling otherwise).

    Returns +inf when the supremum keeps growing past the doubling cap,
    i.e. when no finite momentum certifies the control.
    """
    if model.analytic_L is not None:
        v = float(np.asarray(model.analytic_L(np.asarray(x, dtype=float),
                                              np.asarray(xi, dtype=float))))
        return v + model.shift_a if math.isfinite(v) else v
    m = max(model.p_radius_hint, 1e-6)
    prev, _ = legendre_truncated(model, x, xi, m)
    for _ in range(max_doublings):
        m *= 2.0
        cur, _ = legendre_truncated(model, x, xi, m)
        if cur - prev < tol:
            return cur
        prev = cur
    return INFINITE


def lagrangian_batch(model: HamiltonianModel, x, xi, tol: float = 1e-7,
                     max_doublings: int = 12) -> np.ndarray:
    """Vectorized L over broadcast (x, xi) pairs.

    Analytic models evaluate directly; otherwise a shared radius-doubling
    grid maximum is used (no per-point ascent polish -- the solvers only
    need grid-level accuracy here).
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if model.analytic_L is not None:
        out = np.asarray(model.analytic_L(x, xi), dtype=float)
        return np.where(np.isfinite(out), out + model.shift_a, out)
    dim = xi.shape[-1]
    m = max(model.p_radius_hint, 1e-6)
    P = _p_ball_grid(dim, m, 48, 48)
    prev = np.max(np.tensordot(xi, P, axes=([-1], [-1]))
                  - model.H(x[..., None, :], P), axis=-1)
    out = np.full(prev.shape, INFINITE)
    settled = np.zeros(prev.shape, dtype=bool)
    for _ in range(max_doublings):
        m *= 2.0
        P = _p_ball_grid(dim, m, 48, 48)
        cur = np.max(np.tensordot(xi, P, axes=([-1], [-1]))
                     - model.H(x[..., None, :], P), axis=-1)
        newly = (~settled) & (cur - prev < tol)
        out[newly] = cur[newly]
        settled |= newly
        if settled.all():
            break
        prev = cur
    return out


def control_bound(model: HamiltonianModel, R: float, points) -> float:
    """A priori speed bound (2 C1 + 1) / R for minimizing controls, where
    C1 = max |H| over the sampled domain times the ball of radius 2R."""
    if R <= 0.0:
        raise ValueError("R must be positive")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dim = pts.shape[-1]
    P = _p_ball_grid(dim, 2.0 * R, 64, 65)
    vals = model.H(pts[:, None, :], P[None, :, :])
    C1 = float(np.max(np.abs(vals)))
    return (2.0 * C1 + 1.0) / float(R)


def lagrangian_lower_envelope(model: HamiltonianModel, A: float, points) -> float:
    """Constant C_A with L(x, xi) >= A |xi| - C_A, namely
    C_A = max over sampled x of max over |p| <= A of H(x, p)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dim = pts.shape[-1]
    P = _p_ball_grid(dim, float(A), 64, 65)
    vals = model.H(pts[:, None, :], P[None, :, :])
    return float(np.max(vals))


# -- validation ---------------------------------------------------------------------


def validate_model(model: HamiltonianModel, points, rng=None,
                   n_pairs: int = 200, radius: float = 4.0) -> dict:
    """Sampled convexity (midpoint inequality) and coercivity proxies.

    Returns a report dict; callers decide whether defects are fatal.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dim = pts.shape[-1]
    xs = pts[rng.integers(0, len(pts), n_pairs)]
    p1 = rng.normal(size=(n_pairs, dim)) * radius
    p2 = rng.normal(size=(n_pairs, dim)) * radius
    mid = 0.5 * (p1 + p2)
    defect = model.H(xs, mid) - 0.5 * (model.H(xs, p1) + model.H(xs, p2))
    convexity_defect = float(np.max(defect))

    dirs = _p_ball_grid(dim, 1.0, 16, 2)
    dirs = dirs[np.linalg.norm(dirs, axis=-1) > 0.5]
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    mins = []
    r = radius
    for _ in range(4):
        vals = model.H(pts[:, None, :], r * dirs[None, :, :])
        mins.append(float(np.min(vals)))
        r *= 2.0
    coercive = all(b > a for a, b in zip(mins, mins[1:]))
    return {
        "convexity_defect": convexity_defect,
        "convex_ok": convexity_defect <= 1e-8,
        "coercivity_mins": mins,
        "coercive_ok": coercive,
    }
