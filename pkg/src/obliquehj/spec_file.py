"""Problem-spec files: a block grammar with a JSON alternative encoding.

A spec is a set of named blocks of key-value pairs::

    domain {
      family = disk
      radius = 1.0
    }
    hamiltonian {
      family = mechanical
      V = x^2 + y^2
    }
    oblique {
      theta = 0          # degrees; "normal" means 0
      g = 0
    }
    grid {
      h = 0.0625
      dt = auto
      T = 4.0
    }
    run {
      seed = 0
    }
    output {
      directory = out
      formats = csv, json
    }

Lines starting with '#' (or trailing '# ...' comments) are ignored.
Values are parsed as numbers or booleans where possible, comma lists
become lists, and anything else stays a string (so Hamiltonian data such
as ``V = x^2 + y^2`` survives as an expression).  The same schema is
accepted as a JSON object with the block names as top-level keys.

``parse_spec`` fills defaults and validates totally, raising SpecError
with a ``block.key`` path; ``emit_spec`` writes the normalized spec back
out so that ``parse_spec(emit_spec(s)) == s``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from . import geometry
from . import hamiltonian as ham
from .expressions import Expression, ExpressionError
from .grid import Grid


class SpecError(Exception):
    """Structured parse/validation failure with a path to the field."""

    def __init__(self, message: str, path: str = "", line: Optional[int] = None):
        loc = path if path else "spec"
        if line is not None:
            loc += f" (line {line})"
        super().__init__(f"{loc}: {message}")
        self.path = path
        self.line = line


DOMAIN_FAMILIES = ("disk", "ellipse", "rounded_box", "interval")
HAMILTONIAN_FAMILIES = ("kinetic", "mechanical", "eikonal", "anisotropic")
BLOCKS = ("domain", "hamiltonian", "oblique", "grid", "run", "output")
FORMATS = ("csv", "json")

_DOMAIN_KEYS = {
    "disk": {"radius", "center"},
    "ellipse": {"semi_axes", "center"},
    "rounded_box": {"half_widths", "center", "power"},
    "interval": {"lo", "hi"},
}
_HAMILTONIAN_KEYS = {
    "kinetic": {"shift"},
    "mechanical": {"V", "shift"},
    "eikonal": {"f", "shift"},
    "anisotropic": {"m11", "m22", "m12", "shift"},
}


@dataclass
class ProblemSpec:
    """Validated, default-filled description of one problem setup."""

    domain: dict = dc_field(default_factory=dict)
    hamiltonian: dict = dc_field(default_factory=dict)
    oblique: dict = dc_field(default_factory=dict)
    grid: dict = dc_field(default_factory=dict)
    run: dict = dc_field(default_factory=dict)
    output: dict = dc_field(default_factory=dict)


def _parse_scalar(tok: str):
    s = tok.strip()
    low = s.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        pass
    return s


def _parse_value(raw: str):
    raw = raw.strip()
    if "," in raw:
        return [_parse_scalar(p) for p in raw.split(",")]
    return _parse_scalar(raw)


def _parse_blocks(text: str) -> dict:
    """The block grammar: name { key = value ... }."""
    blocks: dict = {}
    current = None
    cur_name = ""
    for ln, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.endswith("{"):
            if current is not None:
                raise SpecError("nested blocks are not allowed",
                                cur_name, ln)
            cur_name = line[:-1].strip()
            if not cur_name.isidentifier():
                raise SpecError(f"bad block name {cur_name!r}", "", ln)
            if cur_name in blocks:
                raise SpecError("duplicate block", cur_name, ln)
            current = {}
            blocks[cur_name] = current
            continue
        if line == "}":
            if current is None:
                raise SpecError("unmatched '}'", "", ln)
            current = None
            continue
        if "=" in line:
            if current is None:
                raise SpecError("key outside of any block", line, ln)
            key, _, val = line.partition("=")
            key = key.strip()
            if not key.isidentifier():
                raise SpecError(f"bad key {key!r}", cur_name, ln)
            if key in current:
                raise SpecError("duplicate key", f"{cur_name}.{key}", ln)
            current[key] = _parse_value(val)
            continue
        raise SpecError(f"cannot parse line {line!r}", cur_name, ln)
    if current is not None:
        raise SpecError(f"block {cur_name!r} not closed", cur_name, None)
    return blocks


def _need_number(blocks: dict, block: str, key: str, default=None,
                 positive: bool = False):
    val = blocks.get(block, {}).get(key, default)
    if val is None:
        return None
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise SpecError(f"expected a number, got {val!r}", f"{block}.{key}")
    if positive and val <= 0:
        raise SpecError(f"must be positive, got {val!r}", f"{block}.{key}")
    return float(val)


def parse_spec(text: str) -> ProblemSpec:
    """Parse and validate a spec from block text or a JSON object."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            blocks = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"invalid JSON: {exc}") from exc
        if not isinstance(blocks, dict) or not all(
                isinstance(v, dict) for v in blocks.values()):
            raise SpecError("JSON spec must be an object of blocks")
    else:
        blocks = _parse_blocks(text)

    for name in blocks:
        if name not in BLOCKS:
            raise SpecError(
                f"unknown block {name!r} (known: {', '.join(BLOCKS)})", name)

    # domain
    dom = dict(blocks.get("domain", {}))
    family = dom.pop("family", "disk")
    if family not in DOMAIN_FAMILIES:
        raise SpecError(
            f"unknown family {family!r} (known: "
            f"{', '.join(DOMAIN_FAMILIES)})", "domain.family")
    allowed = _DOMAIN_KEYS[family]
    extra = set(dom) - allowed
    if extra:
        raise SpecError(
            f"unknown keys {sorted(extra)} for family {family!r} "
            f"(known: {', '.join(sorted(allowed))})", "domain")
    domain = {"family": family, **dom}

    # hamiltonian
    hb = dict(blocks.get("hamiltonian", {}))
    hfam = hb.pop("family", "kinetic")
    if hfam not in HAMILTONIAN_FAMILIES:
        raise SpecError(
            f"unknown family {hfam!r} (known: "
            f"{', '.join(HAMILTONIAN_FAMILIES)})", "hamiltonian.family")
    if hfam == "mechanical" and "V" not in hb:
        raise SpecError("mechanical Hamiltonian needs V", "hamiltonian.V")
    if hfam == "eikonal" and "f" not in hb:
        raise SpecError("eikonal Hamiltonian needs f", "hamiltonian.f")
    allowed = _HAMILTONIAN_KEYS[hfam]
    extra = set(hb) - allowed
    if extra:
        raise SpecError(
            f"unknown keys {sorted(extra)} for family {hfam!r} "
            f"(known: {', '.join(sorted(allowed))})", "hamiltonian")
    for key in ("V", "f"):
        if key in hb:
            try:
                Expression(str(hb[key]))
            except ExpressionError as exc:
                raise SpecError(str(exc), f"hamiltonian.{key}") from exc
    hamiltonian_ = {"family": hfam, **hb}

    # oblique
    ob = dict(blocks.get("oblique", {}))
    theta = ob.pop("theta", 0.0)
    if theta == "normal":
        theta = 0.0
    if isinstance(theta, bool) or not isinstance(theta, (int, float)):
        raise SpecError(f"theta must be degrees or 'normal', got {theta!r}",
                        "oblique.theta")
    theta = float(theta)
    if not -90.0 < theta < 90.0:
        raise SpecError(
            f"theta = {theta} deg violates obliqueness (need |theta| < 90)",
            "oblique.theta")
    gval = ob.pop("g", 0.0)
    if isinstance(gval, str):
        try:
            Expression(gval)
        except ExpressionError as exc:
            raise SpecError(str(exc), "oblique.g") from exc
    elif isinstance(gval, bool) or not isinstance(gval, (int, float)):
        raise SpecError(f"g must be a number or expression, got {gval!r}",
                        "oblique.g")
    if ob:
        raise SpecError(f"unknown keys {sorted(ob)}", "oblique")
    oblique = {"theta": theta, "g": gval}

    # grid
    gb = dict(blocks.get("grid", {}))
    h = _need_number({"grid": gb}, "grid", "h", default=1.0 / 16,
                     positive=True)
    dt_raw = gb.get("dt", "auto")
    if dt_raw in ("auto", None):
        dt = None
    else:
        dt = _need_number({"grid": gb}, "grid", "dt", positive=True)
    T = _need_number({"grid": gb}, "grid", "T", default=4.0, positive=True)
    extra = set(gb) - {"h", "dt", "T"}
    if extra:
        raise SpecError(f"unknown keys {sorted(extra)}", "grid")
    grid = {"h": h, "dt": dt, "T": T}

    # run
    rb = dict(blocks.get("run", {}))
    seed = rb.pop("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise SpecError(f"seed must be a nonnegative integer, got {seed!r}",
                        "run.seed")
    for key, val in rb.items():
        if "tol" in key:
            if not isinstance(val, (int, float)) or isinstance(val, bool) \
                    or val < 0:
                raise SpecError(f"tolerance must be nonnegative, got {val!r}",
                                f"run.{key}")
    run = {"seed": seed, **rb}

    # output
    outb = dict(blocks.get("output", {}))
    directory = str(outb.pop("directory", "out"))
    formats = outb.pop("formats", list(FORMATS))
    if isinstance(formats, str):
        formats = [formats]
    for fmt in formats:
        if fmt not in FORMATS:
            raise SpecError(
                f"unknown format {fmt!r} (known: {', '.join(FORMATS)})",
                "output.formats")
    if outb:
        raise SpecError(f"unknown keys {sorted(outb)}", "output")
    output = {"directory": directory, "formats": list(formats)}

    return ProblemSpec(domain=domain, hamiltonian=hamiltonian_,
                       oblique=oblique, grid=grid, run=run, output=output)


def _emit_value(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return repr(val)
    if isinstance(val, list):
        return ", ".join(_emit_value(v) for v in val)
    return str(val)


def emit_spec(spec: ProblemSpec) -> str:
    """Write a normalized spec back to block text (parse round-trips)."""
    lines = []
    for name in BLOCKS:
        body = getattr(spec, name)
        lines.append(f"{name} {{")
        for key, val in body.items():
            if val is None:
                val = "auto"
            lines.append(f"  {key} = {_emit_value(val)}")
        lines.append("}")
    return "\n".join(lines) + "\n"


# -- object construction -------------------------------------------------------------


def build_domain(spec: ProblemSpec) -> geometry.ImplicitDomain:
    d = spec.domain
    fam = d["family"]
    if fam == "disk":
        return geometry.disk(center=tuple(d.get("center", (0.0, 0.0))),
                             radius=float(d.get("radius", 1.0)))
    if fam == "ellipse":
        return geometry.ellipse(
            semi_axes=tuple(d.get("semi_axes", (1.0, 0.5))),
            center=tuple(d.get("center", (0.0, 0.0))))
    if fam == "rounded_box":
        return geometry.rounded_box(
            half_widths=tuple(d.get("half_widths", (1.0, 1.0))),
            center=tuple(d.get("center", (0.0, 0.0))),
            power=int(d.get("power", 4)))
    if fam == "interval":
        return geometry.interval(lo=float(d.get("lo", -1.0)),
                                 hi=float(d.get("hi", 1.0)))
    raise SpecError(f"unknown family {fam!r}", "domain.family")


def build_model(spec: ProblemSpec) -> ham.HamiltonianModel:
    hb = spec.hamiltonian
    fam = hb["family"]
    if fam == "kinetic":
        model = ham.kinetic()
    elif fam == "mechanical":
        model = ham.mechanical(Expression(str(hb["V"])))
    elif fam == "eikonal":
        model = ham.eikonal(Expression(str(hb["f"])))
    elif fam == "anisotropic":
        m11 = float(hb.get("m11", 1.0))
        m22 = float(hb.get("m22", 1.0))
        m12 = float(hb.get("m12", 0.0))
        model = ham.anisotropic(np.array([[m11, m12], [m12, m22]]))
    else:
        raise SpecError(f"unknown family {fam!r}", "hamiltonian.family")
    shift = hb.get("shift", 0.0)
    if shift:
        model = model.shifted(float(shift))
    return model


def build_field(spec: ProblemSpec,
                domain: geometry.ImplicitDomain) -> geometry.ObliqueField:
    ob = spec.oblique
    gval = ob["g"]
    if isinstance(gval, str):
        gval = Expression(gval)
    return geometry.rotated_normal(domain, theta_deg=ob["theta"], g=gval)


def build_grid(spec: ProblemSpec, domain: geometry.ImplicitDomain,
               field_: geometry.ObliqueField) -> Grid:
    return Grid(domain, spec.grid["h"], field_=field_)
