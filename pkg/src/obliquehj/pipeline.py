"""Pipeline orchestration: run a named subcommand and emit artifacts.

``run_pipeline`` executes one of the named pipelines on a parsed
ProblemSpec and writes its artifacts (RFC-4180 CSV with a header row and
%.12g numbers, plus a JSON summary with a fixed key order) atomically:
each file is written to a temporary sibling and moved into place with
os.replace, so interrupted runs leave no partial outputs.

CSV contents are deterministic for a fixed spec and seed; wall time and
other nondeterministic diagnostics only appear in the JSON summary.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
import time
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from . import checks
from .expressions import Expression
from .extremals import aubry_convergence, calibrated_extremal, \
    two_sided_extremal
from .geometry import project_to_boundary, project_to_closure
from .grid import GridField
from .scheme import solve_cauchy
from .skorokhod import solve_reflected, validate_triple
from .spec_file import ProblemSpec, SpecError, build_domain, build_field, \
    build_grid, build_model
from .weak_kam import aubry_detect, build_action_graph, critical_value_cycle, \
    critical_value_slope, mane_potential, representation

SCHEMA_TAG = "obliquehj-run/1"

SUBCOMMANDS = ("solve-cauchy", "critical-value", "distance", "aubry",
               "weak-kam-solve", "extremal", "aubry-orbit", "skorokhod",
               "verify")


@dataclass
class RunSummary:
    """Everything a run reports: headline numbers and gated checks."""

    schema: str
    subcommand: str
    spec: dict
    headline: dict
    checks: list
    wall_time_s: float
    seed: int
    workers: int
    artifacts: list = dc_field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_json_dict(self) -> dict:
        return {
            "schema": self.schema,
            "subcommand": self.subcommand,
            "passed": self.passed,
            "spec": self.spec,
            "headline": self.headline,
            "checks": self.checks,
            "artifacts": self.artifacts,
            "seed": self.seed,
            "workers": self.workers,
            "wall_time_s": self.wall_time_s,
        }


def _atomic_write(path: str, data: bytes) -> None:
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def write_csv(path: str, header, rows) -> None:
    """RFC-4180 CSV: CRLF line endings, header row, %.12g numbers."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(list(header))
    for row in rows:
        writer.writerow([_fmt_cell(v) for v in row])
    _atomic_write(path, buf.getvalue().encode("utf-8"))


def write_summary(path: str, summary: RunSummary) -> None:
    data = json.dumps(summary.to_json_dict(), indent=2) + "\n"
    _atomic_write(path, data.encode("utf-8"))


def _check(name: str, passed, value=None, bound=None, detail: str = "") -> dict:
    entry = {"name": name, "passed": bool(passed)}
    if value is not None:
        entry["value"] = float(value)
    if bound is not None:
        entry["bound"] = float(bound)
    if detail:
        entry["detail"] = detail
    return entry


def _point(spec: ProblemSpec, key: str, dim: int, default=None) -> np.ndarray:
    raw = spec.run.get(key, default)
    if raw is None:
        raise SpecError(f"subcommand needs a point, e.g. "
                        f"{key} = {', '.join(['0.0'] * dim)}", f"run.{key}")
    if isinstance(raw, (int, float)):
        raw = [raw]
    pt = np.asarray([float(v) for v in raw], dtype=float)
    if pt.shape != (dim,):
        raise SpecError(f"expected {dim} coordinates, got {len(pt)}",
                        f"run.{key}")
    return pt


def _coord_names(dim: int) -> list:
    return ["x", "y", "z"][:dim]


class _Problem:
    """Built objects for one spec, with lazily shared weak-KAM stages."""

    def __init__(self, spec: ProblemSpec):
        self.spec = spec
        self.domain = build_domain(spec)
        self.model = build_model(spec)
        self.field_ = build_field(spec, self.domain)
        self.grid = build_grid(spec, self.domain, self.field_)
        self._graph = None
        self._critical = None
        self._graph_c = None
        self._potential = None
        self._aubry = None

    @property
    def graph(self):
        if self._graph is None:
            self._graph = build_action_graph(self.model, self.domain,
                                             self.field_, self.grid)
        return self._graph

    @property
    def critical(self):
        if self._critical is None:
            self._critical = critical_value_cycle(
                self.model, self.domain, self.field_, self.grid,
                graph=self.graph)
        return self._critical

    @property
    def graph_c(self):
        if self._graph_c is None:
            self._graph_c = self.graph.at_level(self.critical.c)
        return self._graph_c

    @property
    def potential(self):
        if self._potential is None:
            self._potential = mane_potential(self.graph_c)
        return self._potential

    @property
    def aubry(self):
        if self._aubry is None:
            self._aubry = aubry_detect(self.graph_c, self.potential)
        return self._aubry


def _grid_expression(prob: _Problem, text) -> np.ndarray:
    expr = Expression(str(text))
    return np.broadcast_to(np.asarray(expr(prob.grid.points), dtype=float),
                           (len(prob.grid.points),)).copy()


def _triple_rows(triple, dim: int, extra_cols=(), extra_vals=None):
    """Rows (t, coords, v, l, *extras); v is per step, repeated at the end."""
    n1 = len(triple.t)
    v = np.vstack([triple.v, triple.v[-1:]]) if len(triple.v) else \
        np.zeros((n1, dim))
    rows = []
    for k in range(n1):
        row = [triple.t[k], *triple.eta[k], *v[k], triple.l[k]]
        if extra_vals is not None:
            row.extend(np.atleast_2d(extra_vals)[:, k])
        rows.append(row)
    header = (["t"] + _coord_names(dim)
              + [f"v{c}" for c in _coord_names(dim)] + ["l"] + list(extra_cols))
    return header, rows


# -- subcommand runners ---------------------------------------------------------------


def _run_solve_cauchy(prob: _Problem, rng) -> tuple:
    spec = prob.spec
    u0 = _grid_expression(prob, spec.run.get("u0", "0"))
    a = float(spec.run.get("a", 0.0))
    tf = solve_cauchy(prob.model, prob.domain, prob.field_, prob.grid, u0,
                      T=spec.grid["T"], dt=spec.grid["dt"], a=a)
    diag = tf.diagnostics
    scale = 1.0 + float(np.max(np.abs(tf.values)))
    checks_ = [
        _check("barrier_upper", diag["barrier_upper_defect"] <= 1e-8 * scale,
               diag["barrier_upper_defect"], 1e-8 * scale,
               "growth bounded by the rest-control barrier"),
        _check("barrier_lower", diag["barrier_lower_defect"] <= 1e-8 * scale,
               diag["barrier_lower_defect"], 1e-8 * scale,
               "decay bounded by the gradient-scale barrier"),
        _check("cfl", tf.dt * tf.controls.c_ctl <= 2.0 * prob.grid.h + 1e-12,
               tf.dt * tf.controls.c_ctl, 2.0 * prob.grid.h,
               "dt * C_ctl <= 2h"),
    ]
    headline = {
        "T": spec.grid["T"], "dt": tf.dt, "n_steps": int(diag["n_steps"]),
        "level_a": a, "c_up": diag["c_up"],
        "final_min": float(np.min(tf.values[-1])),
        "final_max": float(np.max(tf.values[-1])),
    }
    final = tf.values[-1]
    rows = [[*prob.grid.points[i], u0[i], final[i]]
            for i in range(len(final))]
    header = _coord_names(prob.grid.dim) + ["u0", "u_final"]
    return headline, checks_, [("cauchy_final.csv", header, rows)]


def _run_critical_value(prob: _Problem, rng) -> tuple:
    spec = prob.spec
    cv = prob.critical
    c_slope, sinfo = critical_value_slope(
        prob.model, prob.domain, prob.field_, prob.grid,
        T=float(spec.run.get("slope_horizon", spec.grid["T"])))
    cv = cv.with_slope(c_slope)
    tol_c = float(spec.run.get("tol_c", 0.05))
    checks_ = [
        _check("cycle_slope_gap", cv.gap <= tol_c, cv.gap, tol_c,
               f"|c_cycle - c_slope| = {cv.gap:.3g} vs tol_c = {tol_c:.3g}"),
        _check("bisection_width", cv.width <= 10.0 * tol_c + 1e-3, cv.width,
               10.0 * tol_c + 1e-3, "certified bracket width"),
    ]
    headline = {
        "c": cv.c, "c_cycle": cv.c_cycle, "c_slope": cv.c_slope,
        "gap": cv.gap, "bracket_width": cv.width, "n_bisect": cv.n_bisect,
        "slope_residual": sinfo.residual,
    }
    rows = [[cv.c, cv.c_cycle, cv.c_slope, cv.gap, cv.width]]
    header = ["c", "c_cycle", "c_slope", "gap", "bracket_width"]
    return headline, checks_, [("critical_value.csv", header, rows)]


def _run_distance(prob: _Problem, rng) -> tuple:
    spec = prob.spec
    y0 = _point(spec, "from", prob.grid.dim)
    node = prob.grid.nearest_node(y0)
    pot = prob.potential
    d_from = pot.d[node]          # action from the source node to each node
    defect = pot.triangle_defect()
    scale = 1.0 + float(np.max(np.abs(d_from)))
    checks_ = [
        _check("zero_at_source", abs(d_from[node]) <= 1e-9 * scale,
               abs(d_from[node]), 1e-9 * scale),
        _check("triangle_inequality", defect <= 1e-9 * scale, defect,
               1e-9 * scale, "full-matrix min-plus relaxation"),
    ]
    headline = {
        "c": prob.critical.c, "source_node": int(node),
        "snap_distance": float(np.linalg.norm(prob.grid.points[node] - y0)),
        "d_max": float(np.max(d_from)), "triangle_defect": defect,
    }
    rows = [[*prob.grid.points[i], d_from[i]] for i in range(len(d_from))]
    header = _coord_names(prob.grid.dim) + ["d"]
    return headline, checks_, [("distance.csv", header, rows)]


def _run_aubry(prob: _Problem, rng) -> tuple:
    aub = prob.aubry
    checks_ = [
        _check("aubry_nonempty", len(aub.nodes) > 0, len(aub.nodes), 1),
        _check("no_fallback", not aub.fallback_used,
               detail="residual threshold admitted at least one node"),
    ]
    headline = {
        "c": prob.critical.c, "n_aubry": int(len(aub.nodes)),
        "tol_A": aub.tol_A, "tau_min": aub.tau_min,
        "min_residual": float(np.min(aub.r)),
    }
    rows = [[i, *prob.grid.points[i], aub.r[i], bool(aub.mask[i])]
            for i in range(len(aub.r))]
    header = ["node"] + _coord_names(prob.grid.dim) + ["residual", "in_aubry"]
    return headline, checks_, [("aubry.csv", header, rows)]


def _weak_kam_field(prob: _Problem) -> GridField:
    aub = prob.aubry
    return representation(np.zeros(len(aub.nodes)), prob.potential, aub)


def _run_weak_kam_solve(prob: _Problem, rng) -> tuple:
    u = _weak_kam_field(prob)
    c = prob.critical.c
    sub = checks.check_subsolution(prob.model, prob.domain, prob.field_,
                                   prob.grid, u.values, c)
    sup = checks.check_supersolution(prob.model, prob.domain, prob.field_,
                                     prob.grid, u.values, c,
                                     exclude=prob.aubry.mask)
    checks_ = [
        _check("subsolution", sub.passed, sub.max_excess, sub.tol,
               "H(x, Du) <= c on admissible gradients"),
        _check("supersolution_off_aubry", sup.passed, sup.max_excess, sup.tol,
               "H(x, Du) >= c away from the projected Aubry set"),
    ]
    headline = {
        "c": c, "n_aubry": int(len(prob.aubry.nodes)),
        "u_min": float(np.min(u.values)), "u_max": float(np.max(u.values)),
    }
    rows = [[*prob.grid.points[i], u.values[i]]
            for i in range(len(u.values))]
    header = _coord_names(prob.grid.dim) + ["u"]
    return headline, checks_, [("weak_kam_solution.csv", header, rows)]


def _run_extremal(prob: _Problem, rng) -> tuple:
    spec = prob.spec
    x0 = _point(spec, "from", prob.grid.dim)
    T = float(spec.run.get("horizon", spec.grid["T"]))
    phi = _weak_kam_field(prob)
    c = prob.critical.c
    curve = calibrated_extremal(prob.model, prob.domain, prob.field_, phi,
                                x0, T, a=c)
    conv = aubry_convergence(curve, prob.aubry)
    edges = curve.window_edges
    t = curve.triple.t
    win_of_t = np.clip(np.searchsorted(edges, t, side="right") - 1, 0,
                       len(curve.window_defects) - 1)
    defect_rows = curve.window_defects[win_of_t]
    header, rows = _triple_rows(curve.triple, prob.grid.dim,
                                ["calibration_defect", "dist_to_aubry"],
                                np.vstack([defect_rows, conv.dist]))
    checks_ = [
        _check("calibration", curve.max_defect <= curve.tol_cal,
               curve.max_defect, curve.tol_cal,
               "per-window action matches the potential drop"),
        _check("speed_bound", curve.v_sup <= curve.v_bound, curve.v_sup,
               curve.v_bound, "control speeds within the a priori bound"),
        _check("aubry_approach", conv.passed, conv.tail_late, conv.threshold,
               "late-tail distance to the detected Aubry set"),
    ]
    headline = {
        "c": c, "horizon": T, "max_defect": curve.max_defect,
        "tol_cal": curve.tol_cal, "v_sup": curve.v_sup,
        "v_bound": curve.v_bound, "tail_late": conv.tail_late,
        "tail_threshold": conv.threshold,
    }
    return headline, checks_, [("extremal.csv", header, rows)]


def _run_aubry_orbit(prob: _Problem, rng) -> tuple:
    spec = prob.spec
    y_pt = _point(spec, "at", prob.grid.dim)
    T = float(spec.run.get("horizon", spec.grid["T"]))
    aub = prob.aubry
    nodes = aub.nodes
    dist = np.linalg.norm(prob.grid.points[nodes] - y_pt, axis=-1)
    y = int(nodes[int(np.argmin(dist))])
    curve = two_sided_extremal(aub, prob.graph_c, prob.potential, y, T)
    report = validate_triple(prob.domain, prob.field_, curve.triple)
    per_loop = curve.loop_action / max(curve.n_loops, 1)
    checks_ = [
        _check("valid_triple", report.ok, detail="; ".join(report.failures)),
        _check("near_zero_loop_cost", per_loop <= aub.tol_A + 1e-12,
               per_loop, aub.tol_A, "level-c action of one loop"),
        _check("stays_near_aubry",
               curve.max_dist_to_aubry <= 2.0 * prob.grid.h + 1e-12,
               curve.max_dist_to_aubry, 2.0 * prob.grid.h),
    ]
    headline = {
        "c": prob.critical.c, "node": y,
        "snap_distance": float(np.min(dist)),
        "loop_action": curve.loop_action,
        "loop_duration": curve.loop_duration, "n_loops": curve.n_loops,
        "horizon": T,
    }
    ids = np.asarray(curve.node_ids, dtype=int)
    header, rows = _triple_rows(curve.triple, prob.grid.dim, ["node"],
                                ids[None, :])
    return headline, checks_, [("aubry_orbit.csv", header, rows)]


def _run_skorokhod(prob: _Problem, rng) -> tuple:
    spec = prob.spec
    dim = prob.domain.dim
    default_x0 = list(project_to_boundary(
        prob.domain, np.mean(prob.domain.bounding_box, axis=1)
        + np.eye(dim)[0] * prob.domain.diameter))
    x0 = _point(spec, "x0", dim, default=default_x0)
    v = _point(spec, "v", dim, default=[1.0] + [0.0] * (dim - 1))
    T = float(spec.run.get("horizon", spec.grid["T"]))
    tol = float(spec.run.get("path_tol", 1e-3))
    triple = solve_reflected(prob.domain, prob.field_, x0, v, T, tol=tol)
    report = validate_triple(prob.domain, prob.field_, triple)
    checks_ = [
        _check("valid_triple", report.ok, detail="; ".join(report.failures)),
        _check("speed_multiplier_bound",
               report.bound_ratio <= report.bound_limit,
               report.bound_ratio, report.bound_limit,
               "(sup|v_eff| or sup l) / sup|v| vs 1.1 (1 + |gamma|/delta0)"),
    ]
    headline = {
        "T": T, "path_tol": tol,
        "eps_final": float(triple.residuals.get("eps_final", np.nan)),
        "max_psi": report.max_psi_eta, "ode_residual": report.ode_mid,
        "bound_ratio": report.bound_ratio,
    }
    header, rows = _triple_rows(triple, dim)
    return headline, checks_, [("skorokhod.csv", header, rows)]


def _direction_fan(dim: int, n: int = 16) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    ang = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    return np.stack([np.cos(ang), np.sin(ang)], axis=-1)


def _subsolution_cones(prob: _Problem, a: float, n_fields: int, rng):
    """Seeded cone minima c_j + beta |x - z_j|: subsolutions at level a."""
    pts = prob.grid.points
    sub = pts[:: max(1, len(pts) // 128)]
    dirs = _direction_fan(prob.grid.dim)
    beta = 0.0
    for cand in np.geomspace(1e-3, 10.0, 40):
        worst = max(float(np.max(prob.model.H_fn(sub, cand * d)))
                    for d in dirs)
        if worst <= a - 1e-9:
            beta = cand
        else:
            break
    fields = []
    span = prob.domain.bounding_box
    for _ in range(n_fields):
        z = rng.uniform(span[:, 0], span[:, 1])
        offset = rng.uniform(-0.5, 0.5)
        fields.append(offset + beta * np.linalg.norm(pts - z, axis=-1))
    return fields, beta


def _run_verify(prob: _Problem, rng) -> tuple:
    spec = prob.spec
    n_cases = int(spec.run.get("n_cases", 8))
    dim = prob.domain.dim
    rows = []
    checks_ = []

    # geometry: projection idempotency on random outside points
    span = prob.domain.bounding_box
    outside = rng.uniform(span[:, 0] - 1.0, span[:, 1] + 1.0,
                          size=(n_cases, dim))
    proj = project_to_boundary(prob.domain, outside)
    double = project_to_boundary(prob.domain, proj)
    drift = float(np.max(np.linalg.norm(double - proj, axis=-1)))
    geo_tol = 1e-8 * prob.domain.diameter
    checks_.append(_check("projection_idempotent", drift <= geo_tol, drift,
                          geo_tol))
    rows.append(["geometry", "projection_idempotent", drift, geo_tol,
                 drift <= geo_tol])

    # Skorokhod: random boundary starts and pushes validate and obey bounds
    n_sk = max(2, n_cases // 2)
    ok_all = True
    worst_ratio = 0.0
    limit = 1.1 * (1.0 + prob.field_.gamma_sup / prob.field_.delta0)
    for k in range(n_sk):
        seed_pt = rng.uniform(span[:, 0], span[:, 1])
        x0 = project_to_closure(prob.domain, seed_pt +
                                0.6 * prob.domain.diameter *
                                rng.standard_normal(dim))
        v = rng.standard_normal(dim)
        v /= max(np.linalg.norm(v), 1e-9)
        triple = solve_reflected(prob.domain, prob.field_, x0, v,
                                 T=1.0, tol=2e-3)
        rep = validate_triple(prob.domain, prob.field_, triple)
        ok_all &= rep.ok
        worst_ratio = max(worst_ratio, rep.bound_ratio)
        rows.append(["skorokhod", f"case_{k}", rep.bound_ratio,
                     rep.bound_limit, rep.ok])
    checks_.append(_check("skorokhod_triples_valid", ok_all,
                          detail=f"{n_sk} random pushes"))
    checks_.append(_check("skorokhod_speed_bound", worst_ratio <= limit,
                          worst_ratio, limit))

    # viscosity checks: stability of subsolutions under min / convex combos
    a1 = float(np.max(prob.model.H_fn(
        prob.grid.points, np.zeros_like(prob.grid.points)))) + 0.1
    fields, beta = _subsolution_cones(prob, a1, max(3, n_cases // 3), rng)
    stab = checks.stability_suite(prob.model, prob.domain, prob.field_,
                                  prob.grid, fields, a1,
                                  seed=int(spec.run.get("seed", 0)))
    checks_.append(_check("stability_suite", stab.passed,
                          detail=f"{len(fields)} cones, slope {beta:.3g}"))
    for name, rep in stab.reports.items():
        rows.append(["stability", name, rep.max_excess, rep.tol, rep.passed])

    # comparison: strict sub- vs supersolution ordering diagnostics
    a2 = a1 + 1.0
    gamma_slope = None
    sub_pts = prob.grid.points[:: max(1, len(prob.grid.points) // 128)]
    fan = _direction_fan(dim)
    for cand in np.geomspace(0.1, 400.0, 60):
        low = min(float(np.min(prob.model.H_fn(sub_pts, cand * d)))
                  for d in fan)
        if low >= a2 + 1e-9:
            gamma_slope = cand
            break
    if gamma_slope is None:
        checks_.append(_check("comparison_suite", False,
                              detail="no coercive cone slope found"))
    else:
        z = np.mean(span, axis=1)
        vertex = prob.grid.nearest_node(z)
        u_super = gamma_slope * np.linalg.norm(prob.grid.points
                                               - prob.grid.points[vertex],
                                               axis=-1)
        exclude = np.zeros(len(prob.grid.points), dtype=bool)
        exclude[vertex] = True
        comp = checks.comparison_suite(prob.model, prob.domain, prob.field_,
                                       prob.grid, fields[0], a1,
                                       u_super, a2, exclude=exclude)
        checks_.append(_check("comparison_suite", comp.passed, comp.bump,
                              comp.tol,
                              "no interior bump of (sub - super)"))
        rows.append(["comparison", "bump", comp.bump, comp.tol, comp.passed])

    headline = {
        "n_cases": n_cases,
        "n_checks": len(checks_),
        "n_failed": sum(not c["passed"] for c in checks_),
    }
    header = ["suite", "case", "value", "bound", "passed"]
    return headline, checks_, [("verify.csv", header, rows)]


_RUNNERS = {
    "solve-cauchy": _run_solve_cauchy,
    "critical-value": _run_critical_value,
    "distance": _run_distance,
    "aubry": _run_aubry,
    "weak-kam-solve": _run_weak_kam_solve,
    "extremal": _run_extremal,
    "aubry-orbit": _run_aubry_orbit,
    "skorokhod": _run_skorokhod,
    "verify": _run_verify,
}


def run_pipeline(spec: ProblemSpec, subcommand: str,
                 out_dir: Optional[str] = None,
                 seed: Optional[int] = None) -> RunSummary:
    """Execute one named pipeline and write its artifacts atomically."""
    if subcommand not in _RUNNERS:
        raise SpecError(f"unknown subcommand {subcommand!r} "
                        f"(known: {', '.join(SUBCOMMANDS)})", "subcommand")
    t0 = time.time()
    seed = int(spec.run.get("seed", 0)) if seed is None else int(seed)
    workers = int(os.environ.get("OBLIQUEHJ_WORKERS", "1"))
    rng = np.random.default_rng(seed)
    prob = _Problem(spec)
    headline, checks_, artifacts = _RUNNERS[subcommand](prob, rng)

    out = spec.output["directory"] if out_dir is None else out_dir
    os.makedirs(out, exist_ok=True)
    written = []
    stem = subcommand.replace("-", "_")
    if "csv" in spec.output["formats"]:
        for fname, header, rows in artifacts:
            path = os.path.join(out, fname)
            write_csv(path, header, rows)
            written.append(fname)

    summary = RunSummary(
        schema=SCHEMA_TAG,
        subcommand=subcommand,
        spec={name: getattr(spec, name)
              for name in ("domain", "hamiltonian", "oblique", "grid",
                           "run", "output")},
        headline=headline,
        checks=checks_,
        wall_time_s=time.time() - t0,
        seed=seed,
        workers=workers,
        artifacts=written,
    )
    if "json" in spec.output["formats"]:
        sname = f"{stem}_summary.json"
        summary.artifacts = written + [sname]
        write_summary(os.path.join(out, sname), summary)
    return summary
