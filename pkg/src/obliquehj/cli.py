"""Command-line interface.

Exit codes: 0 all gated checks passed, 1 spec or usage problem,
2 numerical failure inside a pipeline stage, 3 at least one gated check
failed.  Every subcommand accepts --spec FILE (block grammar or JSON;
defaults apply when omitted), --out DIR, and --seed N.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional

from .checks import CheckError
from .expressions import ExpressionError
from .extremals import ExtremalError
from .geometry import GeometryError
from .grid import GridError
from .hamiltonian import HamiltonianError
from .oracle import NotConverged
from .pipeline import SUBCOMMANDS, run_pipeline
from .scheme import SchemeError
from .skorokhod import SkorokhodError
from .spec_file import SpecError, parse_spec
from .weak_kam import WeakKamError

_NUMERICAL_ERRORS = (WeakKamError, SchemeError, SkorokhodError,
                     ExtremalError, HamiltonianError, CheckError,
                     GeometryError, GridError, NotConverged)


def _parse_point(text: str, flag: str):
    try:
        return [float(tok) for tok in text.split(",")]
    except ValueError:
        raise SpecError(f"cannot parse coordinates {text!r}", flag)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="obliquehj",
        description="Weak-KAM pipelines for convex Hamilton-Jacobi "
                    "equations with oblique boundary reflection.")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        p.add_argument("--spec", metavar="FILE", default=None,
                       help="problem spec file (defaults apply if omitted)")
        p.add_argument("--out", metavar="DIR", default=None,
                       help="output directory (overrides the spec)")
        p.add_argument("--seed", metavar="N", type=int, default=None,
                       help="seed for randomized suites (overrides the spec)")
        if name in ("extremal", "distance"):
            p.add_argument("--from", dest="from_", metavar="X",
                           help="start point, comma-separated coordinates")
        if name in ("extremal", "aubry-orbit"):
            p.add_argument("--horizon", metavar="T", type=float,
                           help="time horizon (defaults to grid T)")
        if name == "aubry-orbit":
            p.add_argument("--at", dest="at_", metavar="Y",
                           help="Aubry point, comma-separated coordinates")
    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.spec is not None:
            with open(args.spec, "r", encoding="utf-8") as fh:
                spec = parse_spec(fh.read())
        else:
            spec = parse_spec("")
        if getattr(args, "from_", None) is not None:
            spec.run["from"] = _parse_point(args.from_, "--from")
        if getattr(args, "at_", None) is not None:
            spec.run["at"] = _parse_point(args.at_, "--at")
        if getattr(args, "horizon", None) is not None:
            spec.run["horizon"] = float(args.horizon)
        summary = run_pipeline(spec, args.subcommand, out_dir=args.out,
                               seed=args.seed)
    except OSError as exc:
        print(f"error: cannot read spec: {exc}", file=sys.stderr)
        return 1
    except (SpecError, ExpressionError) as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return 1
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure [{type(exc).__name__}]: {exc}",
              file=sys.stderr)
        return 2

    for key, val in summary.headline.items():
        if isinstance(val, float):
            print(f"{key} = {val:.6g}")
        else:
            print(f"{key} = {val}")
    for chk in summary.checks:
        status = "pass" if chk["passed"] else "FAIL"
        line = f"[{status}] {chk['name']}"
        if "value" in chk and "bound" in chk:
            line += f": {chk['value']:.6g} vs {chk['bound']:.6g}"
        if chk.get("detail"):
            line += f" ({chk['detail']})"
        print(line)
    if summary.artifacts:
        print("artifacts: " + ", ".join(summary.artifacts))
    return 0 if summary.passed else 3


if __name__ == "__main__":
    sys.exit(main())
