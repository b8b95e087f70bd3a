"""Numerical weak-KAM toolbox for convex Hamilton-Jacobi equations with
oblique (Neumann-type) boundary reflection.

The package solves H(x, Du) = a on a bounded implicit domain with the
boundary condition D_gamma u = g, and exposes the objects the theory is
built from: reflected trajectories (Skorokhod triples), the monotone
semi-Lagrangian Cauchy scheme, the critical value, the minimal-action
(Mane) potential, the projected Aubry set, representation formulas, and
calibrated extremal curves, plus a spec-driven command-line pipeline.
"""

from .geometry import (GeometryError, ImplicitDomain, ObliqueField, disk,
                       ellipse, from_psi, interval, project_to_boundary,
                       project_to_closure, rotated_normal, rounded_box)
from .hamiltonian import (HamiltonianError, HamiltonianModel, anisotropic,
                          control_bound, eikonal, kinetic, lagrangian,
                          lagrangian_batch, mechanical)
from .grid import ControlSet, Grid, GridError, GridField, TimeField
from .skorokhod import (SkorokhodError, SkorokhodTriple, extract_triple,
                        solve_penalized, solve_reflected, validate_triple)
from .scheme import (ControlBoundViolated, SchemeError, SchemePrecomp,
                     check_dpp, default_dt, reflected_substep, solve_cauchy,
                     step)
from .checks import (CheckError, CheckReport, check_subsolution,
                     check_supersolution, comparison_suite, stability_suite)
from .weak_kam import (ActionGraph, AubryResult, CriticalValue, ManePotential,
                       NegativeCycleAtC, SlopeNotConverged, WeakKamError,
                       aubry_detect, build_action_graph, critical_value_cycle,
                       critical_value_slope, has_negative_cycle,
                       mane_potential, representation, u_minus)
from .extremals import (CalibratedCurve, CalibrationLost, ExtremalError,
                        NoCheapLoop, TracedMinimizer, TwoSidedCurve,
                        attained_minimizer, aubry_convergence,
                        calibrated_extremal, two_sided_extremal)
from .expressions import Expression, ExpressionError, parse_expression
from .spec_file import ProblemSpec, SpecError, emit_spec, parse_spec
from .oracle import NotConverged, oracle_value_iteration
from .pipeline import RunSummary, run_pipeline
from .cli import main

__version__ = "0.1.0"

__all__ = [
    "GeometryError", "ImplicitDomain", "ObliqueField", "disk", "ellipse",
    "from_psi", "interval", "project_to_boundary", "project_to_closure",
    "rotated_normal", "rounded_box",
    "HamiltonianError", "HamiltonianModel", "anisotropic", "control_bound",
    "eikonal", "kinetic", "lagrangian", "lagrangian_batch", "mechanical",
    "ControlSet", "Grid", "GridError", "GridField", "TimeField",
    "SkorokhodError", "SkorokhodTriple", "extract_triple", "solve_penalized",
    "solve_reflected", "validate_triple",
    "ControlBoundViolated", "SchemeError", "SchemePrecomp", "check_dpp",
    "default_dt", "reflected_substep", "solve_cauchy", "step",
    "CheckError", "CheckReport", "check_subsolution", "check_supersolution",
    "comparison_suite", "stability_suite",
    "ActionGraph", "AubryResult", "CriticalValue", "ManePotential",
    "NegativeCycleAtC", "SlopeNotConverged", "WeakKamError", "aubry_detect",
    "build_action_graph", "critical_value_cycle", "critical_value_slope",
    "has_negative_cycle", "mane_potential", "representation", "u_minus",
    "CalibratedCurve", "CalibrationLost", "ExtremalError", "NoCheapLoop",
    "TracedMinimizer", "TwoSidedCurve", "attained_minimizer",
    "aubry_convergence", "calibrated_extremal", "two_sided_extremal",
    "Expression", "ExpressionError", "parse_expression",
    "ProblemSpec", "SpecError", "emit_spec", "parse_spec",
    "NotConverged", "oracle_value_iteration",
    "RunSummary", "run_pipeline",
    "main",
    "__version__",
]
