"""Implicit domains and oblique boundary fields.

A domain is the sublevel set {psi <= 0} of a C^1 defining function with
nonvanishing gradient near the zero level.  Everything downstream (reflected
trajectories, grids, boundary checks) talks to the domain only through
``psi``, ``grad_psi`` and the derived quantities computed here: outward
normals, closest-point projection, the clamped penalty used by the reflected
ODE, and obliqueness margins of a boundary vector field.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import ndimage


class GeometryError(Exception):
    """Base class for geometry failures."""


class NotOnBoundary(GeometryError):
    pass


class DegenerateGradient(GeometryError):
    pass


class ProjectionDiverged(GeometryError):
    pass


class ObliquenessViolated(GeometryError):
    def __init__(self, message: str, witness=None, margin=None):
        super().__init__(message)
        self.witness = witness
        self.margin = margin


class DomainValidationError(GeometryError):
    pass


def _as_points(x, dim: int) -> np.ndarray:
    """Return x as a float array of shape (..., dim)."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        if dim != 1:
            raise ValueError(f"scalar point given for dim={dim}")
        a = a.reshape(1)
    if a.shape[-1] != dim:
        raise ValueError(f"point has last axis {a.shape[-1]}, expected {dim}")
    return a


class ImplicitDomain:
    """Closure of {psi < 0} in R^dim, dim in {1, 2}.

    ``psi`` and ``grad_psi`` must accept arrays of shape (..., dim) and
    return shapes (...) and (..., dim).  ``bounding_box`` is a (dim, 2)
    array of [lo, hi] pairs that contains the domain.

    Derived quantities (sampled once at construction):

    * ``diameter``   -- diagonal of the bounding box (length scale),
    * ``rho0``       -- min |grad psi| over a band of width ``band_width``
                        around the zero level (gradient floor),
    * ``boundary_tol`` -- membership tolerance for "on the boundary",
                        default 1e-8 * diameter,
    * ``band_width`` -- geometric width of the band where the gradient
                        floor is certified, default 0.05 * diameter.
    """

    def __init__(self, psi: Callable, grad_psi: Callable, dim: int,
                 bounding_box, boundary_tol: Optional[float] = None,
                 name: str = "implicit", sample_res: int = 128):
        if dim not in (1, 2):
            raise ValueError("only dim 1 and 2 are supported")
        self.psi_fn = psi
        self.grad_fn = grad_psi
        self.dim = dim
        self.bounding_box = np.asarray(bounding_box, dtype=float).reshape(dim, 2)
        self.name = name
        widths = self.bounding_box[:, 1] - self.bounding_box[:, 0]
        if np.any(widths <= 0):
            raise ValueError("bounding box has nonpositive width")
        self.diameter = float(np.linalg.norm(widths))
        self.boundary_tol = (1e-8 * self.diameter if boundary_tol is None
                             else float(boundary_tol))
        self.band_width = 0.05 * self.diameter
        self._init_samples(sample_res)

    # -- vectorized evaluation ------------------------------------------------

    def psi(self, x) -> np.ndarray:
        x = _as_points(x, self.dim)
        return np.asarray(self.psi_fn(x), dtype=float)

    def grad_psi(self, x) -> np.ndarray:
        x = _as_points(x, self.dim)
        return np.asarray(self.grad_fn(x), dtype=float)

    def contains(self, x, tol: Optional[float] = None) -> np.ndarray:
        """Membership in the closure, with a distance-like tolerance."""
        tol = self.boundary_tol if tol is None else tol
        return self.psi(x) <= tol * self._grad_floor

    # -- construction-time sampling -------------------------------------------

    def _lattice(self, res: int) -> np.ndarray:
        axes = [np.linspace(lo, hi, res) for lo, hi in self.bounding_box]
        if self.dim == 1:
            return axes[0][:, None]
        X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=-1)

    def _init_samples(self, res: int) -> None:
        pts = self._lattice(res)
        pv = self.psi(pts)
        gv = self.grad_psi(pts)
        gn = np.linalg.norm(gv, axis=-1)
        self.psi_scale = float(np.max(np.abs(pv))) or 1.0
        # first-order distance proxy |psi|/|grad|
        dist = np.abs(pv) / np.maximum(gn, 1e-300)
        band = dist <= self.band_width
        if not np.any(band):
            band = dist <= np.quantile(dist, 0.05)
        rho0 = float(np.min(gn[band]))
        if rho0 <= 0.0:
            raise DomainValidationError(
                f"defining gradient vanishes near the zero level of {self.name}")
        self.rho0 = rho0
        self._grad_floor = rho0
        self._inside_frac = float(np.mean(pv <= 0.0))
        if self._inside_frac == 0.0:
            raise DomainValidationError(f"domain {self.name} is empty")


# -- built-in families ---------------------------------------------------------


def disk(center=(0.0, 0.0), radius: float = 1.0) -> ImplicitDomain:
    """Disk of given center/radius, psi = |x-c|^2 - r^2."""
    c = np.asarray(center, dtype=float)
    r = float(radius)

    def psi(x):
        return np.sum((x - c) ** 2, axis=-1) - r * r

    def grad(x):
        return 2.0 * (x - c)

    box = np.stack([c - 1.5 * r, c + 1.5 * r], axis=-1)
    return ImplicitDomain(psi, grad, 2, box, name=f"disk(r={r})")


def ellipse(semi_axes=(1.0, 0.5), center=(0.0, 0.0)) -> ImplicitDomain:
    """Axis-aligned ellipse, psi = sum (x_i/a_i)^2 - 1."""
    a = np.asarray(semi_axes, dtype=float)
    c = np.asarray(center, dtype=float)

    def psi(x):
        return np.sum(((x - c) / a) ** 2, axis=-1) - 1.0

    def grad(x):
        return 2.0 * (x - c) / (a * a)

    box = np.stack([c - 1.5 * a, c + 1.5 * a], axis=-1)
    return ImplicitDomain(psi, grad, 2, box, name=f"ellipse{tuple(a)}")


def rounded_box(half_widths=(1.0, 1.0), center=(0.0, 0.0),
                power: int = 4) -> ImplicitDomain:
    """Smoothed rectangle via a superellipse: sum (x_i/a_i)^(2m) - 1."""
    a = np.asarray(half_widths, dtype=float)
    c = np.asarray(center, dtype=float)
    m = int(power)
    if m < 1:
        raise ValueError("power must be >= 1")

    def psi(x):
        return np.sum(((x - c) / a) ** (2 * m), axis=-1) - 1.0

    def grad(x):
        return (2 * m) * ((x - c) / a) ** (2 * m - 1) / a

    box = np.stack([c - 1.5 * a, c + 1.5 * a], axis=-1)
    return ImplicitDomain(psi, grad, 2, box, name=f"box{tuple(a)}^~{2*m}")


def interval(lo: float = -1.0, hi: float = 1.0) -> ImplicitDomain:
    """1-D interval [lo, hi], psi = (x-lo)(x-hi)."""
    lo, hi = float(lo), float(hi)
    if hi <= lo:
        raise ValueError("need lo < hi")

    def psi(x):
        t = x[..., 0]
        return (t - lo) * (t - hi)

    def grad(x):
        t = x[..., 0]
        return (2.0 * t - lo - hi)[..., None]

    pad = 0.25 * (hi - lo)
    box = np.array([[lo - pad, hi + pad]])
    return ImplicitDomain(psi, grad, 1, box, name=f"interval[{lo},{hi}]")


def from_psi(psi: Callable, dim: int, bounding_box,
             grad_psi: Optional[Callable] = None,
             validate: bool = True, name: str = "custom") -> ImplicitDomain:
    """Wrap a user-provided defining function.

    If no analytic gradient is given, central finite differences with a
    step of 1e-6 of the box diagonal are used.
    """
    box = np.asarray(bounding_box, dtype=float).reshape(dim, 2)
    if grad_psi is None:
        h = 1e-6 * float(np.linalg.norm(box[:, 1] - box[:, 0]))

        def grad_psi(x, _psi=psi, _h=h, _dim=dim):
            x = np.asarray(x, dtype=float)
            out = np.empty_like(x)
            for k in range(_dim):
                e = np.zeros(_dim)
                e[k] = _h
                out[..., k] = (_psi(x + e) - _psi(x - e)) / (2.0 * _h)
            return out

    dom = ImplicitDomain(psi, grad_psi, dim, box, name=name)
    if validate:
        report = validate_domain(dom)
        if not report.ok:
            raise DomainValidationError(
                f"domain {name} failed validation: {report.failures}")
    return dom


# -- operations -----------------------------------------------------------------


def outward_normal(domain: ImplicitDomain, x) -> np.ndarray:
    """Unit outward normal grad psi / |grad psi| at a boundary point."""
    x = _as_points(x, domain.dim)
    g = domain.grad_psi(x)
    gn = np.linalg.norm(g, axis=-1)
    if np.any(gn <= 1e-12 * domain.rho0):
        raise DegenerateGradient(f"grad psi vanishes at {x}")
    dist = np.abs(domain.psi(x)) / gn
    if np.any(dist > domain.boundary_tol * (1.0 + 1e-6) + 1e-15):
        raise NotOnBoundary(
            f"point at estimated distance {float(np.max(dist)):.3e} from the "
            f"zero level (tol {domain.boundary_tol:.3e})")
    return g / gn[..., None]


def penalty_q(domain: ImplicitDomain, cap: float, x) -> np.ndarray:
    """Clamped positive part of psi: min(max(psi(x), 0), cap)."""
    if cap <= 0.0:
        raise ValueError("penalty cap must be positive")
    return np.clip(domain.psi(x), 0.0, cap)


def project_to_boundary(domain: ImplicitDomain, x,
                        max_iter: int = 50) -> np.ndarray:
    """Move points onto the zero level of psi from either side.

    Signed damped Newton; intended for points already within O(h) of the
    boundary (grid collocation), where it converges in a couple of steps.
    """
    x = _as_points(x, domain.dim)
    single = x.ndim == 1
    y = np.atleast_2d(x).astype(float).copy()
    p_tol = 1e-13 * domain.psi_scale
    pv = domain.psi(y)
    active = np.abs(pv) > p_tol
    it = 0
    while np.any(active):
        if it >= max_iter:
            raise ProjectionDiverged(
                f"boundary projection did not converge in {max_iter} "
                f"iterations (max residual "
                f"{float(np.max(np.abs(pv[active]))):.3e})")
        ya = y[active]
        pa = pv[active]
        g = domain.grad_psi(ya)
        gn2 = np.sum(g * g, axis=-1)
        if np.any(gn2 <= (1e-12 * domain.rho0) ** 2):
            raise ProjectionDiverged("gradient degenerate along projection path")
        step = (pa / gn2)[:, None] * g
        alpha = np.ones(len(ya))
        for _ in range(30):
            cand = ya - alpha[:, None] * step
            pc = domain.psi(cand)
            bad = np.abs(pc) > 0.5 * np.abs(pa)
            if not np.any(bad):
                break
            alpha[bad] *= 0.5
        y[active] = cand
        pv[active] = pc
        active = np.abs(pv) > p_tol
        it += 1
    return y[0] if single else y


def project_to_closure(domain: ImplicitDomain, x,
                       max_iter: int = 50) -> np.ndarray:
    """Pull points with psi > 0 back to the zero level.

    Damped Newton on psi along -grad psi.  Points already in the closure
    are returned unchanged; the result satisfies |psi| <= ~1e-13 * scale,
    so projecting twice moves the point by less than 1e-10 * diameter.
    """
    x = _as_points(x, domain.dim)
    single = x.ndim == 1
    y = np.atleast_2d(x).copy()
    p_tol = 1e-13 * domain.psi_scale
    pv = domain.psi(y)
    active = pv > p_tol
    box_lo = domain.bounding_box[:, 0] - domain.diameter
    box_hi = domain.bounding_box[:, 1] + domain.diameter
    it = 0
    while np.any(active):
        if it >= max_iter:
            raise ProjectionDiverged(
                f"projection did not converge in {max_iter} iterations "
                f"(max residual {float(np.max(np.abs(pv[active]))):.3e})")
        ya = y[active]
        pa = pv[active]
        g = domain.grad_psi(ya)
        gn2 = np.sum(g * g, axis=-1)
        if np.any(gn2 <= (1e-12 * domain.rho0) ** 2):
            raise ProjectionDiverged("gradient degenerate along projection path")
        step = (pa / gn2)[:, None] * g
        alpha = np.ones(len(ya))
        for _ in range(30):
            cand = ya - alpha[:, None] * step
            pc = domain.psi(cand)
            bad = np.abs(pc) > 0.5 * np.abs(pa)
            # keep full steps that overshoot into the interior: those are fine
            bad &= ~(pc <= p_tol)
            if not np.any(bad):
                break
            alpha[bad] *= 0.5
        y[active] = cand
        if np.any(cand < box_lo) or np.any(cand > box_hi):
            raise ProjectionDiverged("projection left the bounding box")
        pv = domain.psi(y)
        active = pv > p_tol
        it += 1
    return y[0] if single else y.reshape(x.shape)


def sample_boundary(domain: ImplicitDomain, n: int = 512) -> np.ndarray:
    """Deterministic cloud of boundary points: lattice cells near the zero
    level, Newton-projected onto it."""
    res = max(16, int(np.ceil(np.sqrt(n) * 2))) if domain.dim == 2 else 4 * n
    pts = domain._lattice(res)
    pv = domain.psi(pts)
    gn = np.linalg.norm(domain.grad_psi(pts), axis=-1)
    dist = np.abs(pv) / np.maximum(gn, 1e-300)
    cell = float(np.max((domain.bounding_box[:, 1] - domain.bounding_box[:, 0])
                        / (res - 1)))
    near = dist <= 1.5 * cell
    if not np.any(near):
        raise DomainValidationError("no lattice points near the boundary")
    cand = pts[near]
    # push slightly outside so projection lands on the zero level
    g = domain.grad_psi(cand)
    gu = g / np.maximum(np.linalg.norm(g, axis=-1, keepdims=True), 1e-300)
    cand = cand + (dist[near][:, None] + 0.1 * cell) * gu
    proj = project_to_closure(domain, cand)
    # dedup on a fine lattice
    key = np.round(proj / (1e-6 * domain.diameter)).astype(np.int64)
    _, idx = np.unique(key, axis=0, return_index=True)
    out = proj[np.sort(idx)]
    if len(out) > n:
        sel = np.linspace(0, len(out) - 1, n).round().astype(int)
        out = out[sel]
    return out


@dataclass
class DomainReport:
    ok: bool
    inside_fraction: float
    n_components: int
    min_grad_band: float
    failures: list = field(default_factory=list)


def validate_domain(domain: ImplicitDomain, resolution: int = 96) -> DomainReport:
    """Sampled sanity checks: nonempty, connected, gradient floor on the band."""
    pts = domain._lattice(resolution)
    pv = domain.psi(pts)
    inside = pv <= 0.0
    failures = []
    frac = float(np.mean(inside))
    if frac == 0.0:
        failures.append("empty")
    shape = (resolution,) * domain.dim
    labels, n_comp = ndimage.label(inside.reshape(shape))
    if n_comp > 1:
        failures.append(f"{n_comp} connected components")
    gn = np.linalg.norm(domain.grad_psi(pts), axis=-1)
    dist = np.abs(pv) / np.maximum(gn, 1e-300)
    band = dist <= domain.band_width
    min_grad = float(np.min(gn[band])) if np.any(band) else 0.0
    if min_grad <= 1e-10 * domain.psi_scale:
        failures.append("gradient degenerate on the boundary band")
    return DomainReport(ok=not failures, inside_fraction=frac,
                        n_components=int(n_comp), min_grad_band=min_grad,
                        failures=failures)


# -- oblique boundary data -------------------------------------------------------


class ObliqueField:
    """Boundary vector field gamma and flux data g.

    ``gamma`` is defined on a neighborhood of the boundary (in practice:
    wherever grad psi does not vanish) and must satisfy nu . gamma > 0 on
    the boundary; ``delta0`` stores the measured minimum of that product,
    ``gamma_sup`` the measured sup of |gamma| on the boundary.
    """

    def __init__(self, gamma: Callable, g, delta0: float,
                 gamma_sup: float = 1.0, theta_deg: float = 0.0):
        self.gamma_fn = gamma
        if callable(g):
            self.g_fn = g
        else:
            g_const = float(g)
            self.g_fn = lambda x: np.full(np.asarray(x).shape[:-1], g_const)
        self.delta0 = float(delta0)
        self.gamma_sup = float(gamma_sup)
        self.theta_deg = float(theta_deg)

    def gamma(self, x) -> np.ndarray:
        return np.asarray(self.gamma_fn(np.asarray(x, dtype=float)), dtype=float)

    def g(self, x) -> np.ndarray:
        return np.asarray(self.g_fn(np.asarray(x, dtype=float)), dtype=float)


def rotated_normal(domain: ImplicitDomain, theta_deg: float = 0.0,
                   g=0.0) -> ObliqueField:
    """Oblique field obtained by rotating the unit outward normal.

    |theta| must be < 90 degrees so that nu . gamma = cos(theta) > 0.
    In 1-D only theta = 0 is meaningful.
    """
    theta = float(theta_deg)
    if abs(theta) >= 90.0:
        raise ObliquenessViolated(
            f"rotation angle {theta} deg destroys obliqueness", margin=0.0)
    if domain.dim == 1:
        if theta != 0.0:
            raise ValueError("1-D oblique fields cannot be rotated")

        def gamma(x, _d=domain):
            gset = _d.grad_psi(x)
            gn = np.maximum(np.linalg.norm(gset, axis=-1, keepdims=True), 1e-300)
            return gset / gn
    else:
        t = np.deg2rad(theta)
        rot = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])

        def gamma(x, _d=domain, _r=rot):
            gset = _d.grad_psi(x)
            gn = np.maximum(np.linalg.norm(gset, axis=-1, keepdims=True), 1e-300)
            return (gset / gn) @ _r.T

    field = ObliqueField(gamma, g, delta0=np.cos(np.deg2rad(theta)),
                         gamma_sup=1.0, theta_deg=theta)
    report = validate_obliqueness(domain, field)
    field.delta0 = report.margin
    field.gamma_sup = report.gamma_sup
    return field


@dataclass
class ObliquenessReport:
    ok: bool
    margin: float
    gamma_sup: float
    worst_point: np.ndarray


def validate_obliqueness(domain: ImplicitDomain, field: ObliqueField,
                         n_samples: int = 512) -> ObliquenessReport:
    """Measure min nu . gamma over boundary samples; raise if <= 0."""
    pts = sample_boundary(domain, n_samples)
    nu = outward_normal(domain, pts)
    gam = field.gamma(pts)
    dots = np.sum(nu * gam, axis=-1)
    k = int(np.argmin(dots))
    margin = float(dots[k])
    gamma_sup = float(np.max(np.linalg.norm(gam, axis=-1)))
    if margin <= 0.0:
        raise ObliquenessViolated(
            f"nu.gamma = {margin:.3e} at {pts[k]}", witness=pts[k], margin=margin)
    return ObliquenessReport(ok=True, margin=margin, gamma_sup=gamma_sup,
                             worst_point=pts[k])
