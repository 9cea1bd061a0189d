"""Scenario config text format.

Grammar (one statement per line, ``#`` starts a comment)::

    [section]
    key = value

Values are numbers, words, comma-separated lists, or (in ``[geometry]``)
a nested CSG expression such as ``union(rect(0, 0, 1, 1), disc(2, 0.5, 0.2))``.
In ``[observers]`` every key except ``stride`` names an observer:
``name = kind, x, y[, group]``.  See ``dump_config`` for a complete example.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .assembly import PLANE_STRAIN, PLANE_STRESS, Material
from .basis import SPACES
from .discretization import SIDES
from .geometry import GeometryError, parse_csg
from .scenarios import (SCHEMES, ExcitationSpec, GridSpec, ObserverSpec, ScenarioConfig)
from .timeintegration import DISPLACEMENT, PRESSURE


class ConfigError(ValueError):
    """Collects every parse/validation problem of a config text."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


_SECTION = re.compile(r"^\[([A-Za-z_][\w-]*)\]$")
_KEY = re.compile(r"^([A-Za-z_][\w-]*)\s*=\s*(.*)$")

_SCHEMA = {
    "scenario": {"name", "length"},
    "geometry": {"structure"},
    "structure_grid": {"origin", "cells", "cell_size", "degree", "space"},
    "fluid_grid": {"origin", "cells", "cell_size", "degree", "space"},
    "material": {"rho_s", "E", "nu", "model", "rho_f", "kappa_f"},
    "quadrature": {"depth", "points", "alpha_min", "interface_resolution"},
    "time": {"dt", "duration", "scheme"},
    "excitation": {"signal", "t0", "amplitude", "field", "side", "value"},
    "dirichlet": {"structure", "fluid"},
    "observers": None,        # free-form names
    "output": {"observer_stride", "snapshot_stride"},
}
_REQUIRED = {
    "scenario": {"name", "length"},
    "geometry": {"structure"},
    "structure_grid": {"origin", "cells", "cell_size", "degree"},
    "fluid_grid": {"origin", "cells", "cell_size", "degree"},
    "material": {"rho_s", "E", "nu", "rho_f", "kappa_f"},
    "time": {"dt", "duration"},
    "excitation": {"field", "side", "value"},
}


@dataclass
class _Entry:
    value: str
    line: int


def _tokenize(text):
    sections, errors = {}, []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            current = m.group(1)
            if current not in _SCHEMA:
                errors.append(f"parse error at line {lineno}: unknown section [{current}]")
                current = None
                continue
            if current in sections:
                errors.append(f"parse error at line {lineno}: duplicate section [{current}]")
            sections.setdefault(current, {})
            continue
        m = _KEY.match(line)
        if not m:
            errors.append(f"parse error at line {lineno}: expected 'key = value'")
            continue
        if current is None:
            errors.append(f"parse error at line {lineno}: key outside a known section")
            continue
        key, value = m.group(1), m.group(2).strip()
        allowed = _SCHEMA[current]
        if allowed is not None and key not in allowed:
            errors.append(f"parse error at line {lineno}: unknown key '{key}' in [{current}]")
            continue
        if key in sections[current]:
            errors.append(f"parse error at line {lineno}: duplicate key '{key}'")
            continue
        sections[current][key] = _Entry(value, lineno)
    return sections, errors


class _Reader:
    def __init__(self, sections):
        self.s = sections
        self.errors = []

    def has(self, sec, key):
        return key in self.s.get(sec, {})

    def raw(self, sec, key, default=None):
        e = self.s.get(sec, {}).get(key)
        return default if e is None else e.value

    def _convert(self, sec, key, conv, default):
        e = self.s.get(sec, {}).get(key)
        if e is None:
            return default
        try:
            return conv(e.value)
        except (ValueError, GeometryError) as exc:
            self.errors.append(f"parse error at line {e.line}: {sec}.{key}: {exc}")
            return default

    def float(self, sec, key, default=None):
        return self._convert(sec, key, float, default)

    def int(self, sec, key, default=None):
        return self._convert(sec, key, int, default)

    def floats(self, sec, key, n=None, default=None):
        def conv(v):
            vals = tuple(float(x) for x in v.split(","))
            if n is not None and len(vals) != n:
                raise ValueError(f"expected {n} numbers")
            return vals
        return self._convert(sec, key, conv, default)

    def ints(self, sec, key, n=None, default=None):
        def conv(v):
            vals = tuple(int(x) for x in v.split(","))
            if n is not None and len(vals) != n:
                raise ValueError(f"expected {n} integers")
            return vals
        return self._convert(sec, key, conv, default)

    def words(self, sec, key, default=()):
        v = self.raw(sec, key)
        if v is None:
            return default
        return tuple(w.strip() for w in v.split(",") if w.strip())


def _grid(r, sec, invalid):
    origin = r.floats(sec, "origin", 2)
    cells = r.ints(sec, "cells", 2)
    size = r.floats(sec, "cell_size", 2)
    degree = r.int(sec, "degree")
    space = r.raw(sec, "space", "trunk")
    if cells is not None and min(cells) < 1:
        invalid(f"{sec}.cells must be >= 1")
    if size is not None and not all(math.isfinite(v) and v > 0 for v in size):
        invalid(f"{sec}.cell_size must be positive")
    if origin is not None and not all(math.isfinite(v) for v in origin):
        invalid(f"{sec}.origin must be finite")
    if degree is not None and degree < 1:
        invalid(f"{sec}.degree must be >= 1")
    if space not in SPACES:
        invalid(f"{sec}.space must be one of {', '.join(SPACES)}")
    if None in (origin, cells, size, degree):
        return None
    return GridSpec(origin, cells, size, degree, space)


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a config; raises ConfigError listing every problem."""
    sections, errors = _tokenize(text)
    r = _Reader(sections)
    invalid = lambda msg: errors.append(f"validation: {msg}")  # noqa: E731

    for sec, keys in _REQUIRED.items():
        for k in sorted(keys):
            if not r.has(sec, k):
                invalid(f"{sec}.{k} is required")

    name = r.raw("scenario", "name", "")
    length = r.float("scenario", "length")
    if length is not None and not (math.isfinite(length) and length > 0):
        invalid("scenario.length must be positive")

    geometry = r._convert("geometry", "structure", parse_csg, None)
    sgrid = _grid(r, "structure_grid", invalid)
    fgrid = _grid(r, "fluid_grid", invalid)

    mat_vals = {k: r.float("material", k) for k in ("rho_s", "E", "nu", "rho_f", "kappa_f")}
    model = r.raw("material", "model", PLANE_STRESS)
    material = None
    for k in ("rho_s", "E", "rho_f", "kappa_f"):
        v = mat_vals[k]
        if v is not None and not (math.isfinite(v) and v > 0):
            invalid(f"material.{k} must be positive")
    if mat_vals["nu"] is not None and not -1 < mat_vals["nu"] < 0.5:
        invalid("material.nu must lie in (-1, 0.5)")
    if model not in (PLANE_STRESS, PLANE_STRAIN):
        invalid(f"material.model must be {PLANE_STRESS} or {PLANE_STRAIN}")
    if not any(e.startswith("validation: material") for e in errors) \
            and None not in mat_vals.values():
        material = Material(mat_vals["rho_s"], mat_vals["E"], mat_vals["nu"],
                            mat_vals["rho_f"], mat_vals["kappa_f"], model)

    depth = r.int("quadrature", "depth")
    points = r.int("quadrature", "points")
    alpha_min = r.float("quadrature", "alpha_min", 1e-8)
    resolution = r.int("quadrature", "interface_resolution", 10)
    if depth is not None and depth < 0:
        invalid("quadrature.depth must be >= 0")
    if points is not None and sgrid is not None and points < max(sgrid.degree, fgrid.degree if fgrid else 1) + 1:
        invalid("quadrature.points must be >= p + 1")
    if alpha_min is not None and not (0 <= alpha_min <= 1):
        invalid("quadrature.alpha_min must lie in [0, 1]")
    if resolution is not None and resolution < 1:
        invalid("quadrature.interface_resolution must be >= 1")

    dt = r.float("time", "dt")
    duration = r.float("time", "duration")
    scheme = r.raw("time", "scheme", "central")
    if dt is not None and not (math.isfinite(dt) and dt > 0):
        invalid("time.dt must be positive")
    if duration is not None and not (math.isfinite(duration) and duration > 0):
        invalid("time.duration must be positive")
    if scheme not in SCHEMES:
        invalid(f"time.scheme must be one of {', '.join(SCHEMES)}")

    signal = r.raw("excitation", "signal", "ricker")
    t0 = r.float("excitation", "t0", 1e-4)
    amplitude = r.float("excitation", "amplitude", 1.0)
    efield = r.raw("excitation", "field")
    side = r.raw("excitation", "side")
    value = r.floats("excitation", "value")
    if signal != "ricker":
        invalid("excitation.signal must be ricker")
    if t0 is not None and not (math.isfinite(t0) and t0 > 0):
        invalid("excitation.t0 must be positive")
    if efield is not None and efield not in ("structure", "fluid"):
        invalid("excitation.field must be structure or fluid")
    if side is not None and side not in SIDES:
        invalid(f"excitation.side must be one of {', '.join(SIDES)}")
    if value is not None and efield in ("structure", "fluid"):
        if len(value) != (2 if efield == "structure" else 1):
            invalid("excitation.value needs 2 numbers (structure) or 1 (fluid)")

    dir_s = r.words("dirichlet", "structure")
    dir_f = r.words("dirichlet", "fluid")
    for sec, sides in (("structure", dir_s), ("fluid", dir_f)):
        for s in sides:
            if s not in SIDES:
                invalid(f"dirichlet.{sec} has unknown side '{s}'")

    observers = []
    stride = 1
    for key, entry in sections.get("observers", {}).items():
        if key == "stride":
            stride = r.int("observers", "stride", 1)
            continue
        parts = [p.strip() for p in entry.value.split(",")]
        if len(parts) not in (3, 4) or parts[0] not in (PRESSURE, DISPLACEMENT):
            errors.append(f"parse error at line {entry.line}: observer '{key}' must be "
                          f"'{PRESSURE}|{DISPLACEMENT}, x, y[, group]'")
            continue
        try:
            x, y = float(parts[1]), float(parts[2])
        except ValueError:
            errors.append(f"parse error at line {entry.line}: observer '{key}' coordinates")
            continue
        observers.append(ObserverSpec(key, parts[0], x, y, parts[3] if len(parts) == 4 else ""))
    if not observers:
        invalid("observers: at least one observer is required")
    obs_stride = r.int("output", "observer_stride", stride)
    snap = r.int("output", "snapshot_stride", 0)
    if obs_stride is not None and obs_stride < 1:
        invalid("output.observer_stride must be >= 1")
    if snap is not None and snap < 0:
        invalid("output.snapshot_stride must be >= 0")

    if sgrid is not None and fgrid is not None:
        for o in observers:
            grid = fgrid if o.kind == PRESSURE else sgrid
            (x0, y0) = grid.origin
            x1 = x0 + grid.cells[0] * grid.cell_size[0]
            y1 = y0 + grid.cells[1] * grid.cell_size[1]
            if not (x0 <= o.x <= x1 and y0 <= o.y <= y1):
                invalid(f"observers.{o.name} lies outside the extended domain")

    errors.extend(r.errors)
    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(
        name=name, length=length, geometry=geometry, structure_grid=sgrid, fluid_grid=fgrid,
        material=material,
        excitation=ExcitationSpec(efield, side, value, t0, amplitude, signal),
        observers=tuple(observers), dt=dt, duration=duration, scheme=scheme,
        depth=depth, n_gp=points, alpha_min=alpha_min, interface_resolution=resolution,
        dirichlet_structure=dir_s, dirichlet_fluid=dir_f,
        observer_stride=obs_stride, snapshot_stride=snap)


def _num(v):
    return repr(float(v))


def _nums(vals):
    return ", ".join(_num(v) for v in vals)


def dump_config(cfg: ScenarioConfig) -> str:
    """Serialize a config so that parse_config(dump_config(c)) == c."""
    out = []

    def section(name, items):
        out.append(f"[{name}]")
        for k, v in items:
            if v is not None:
                out.append(f"{k} = {v}")
        out.append("")

    section("scenario", [("name", cfg.name), ("length", _num(cfg.length))])
    section("geometry", [("structure", cfg.geometry.to_expr())])
    for name, g in (("structure_grid", cfg.structure_grid), ("fluid_grid", cfg.fluid_grid)):
        section(name, [("origin", _nums(g.origin)), ("cells", f"{g.cells[0]}, {g.cells[1]}"),
                       ("cell_size", _nums(g.cell_size)), ("degree", g.degree),
                       ("space", g.space)])
    m = cfg.material
    section("material", [("rho_s", _num(m.rho_s)), ("E", _num(m.E)), ("nu", _num(m.nu)),
                         ("model", m.model), ("rho_f", _num(m.rho_f)),
                         ("kappa_f", _num(m.kappa_f))])
    section("quadrature", [("depth", cfg.depth), ("points", cfg.n_gp),
                           ("alpha_min", _num(cfg.alpha_min)),
                           ("interface_resolution", cfg.interface_resolution)])
    section("time", [("dt", _num(cfg.dt)), ("duration", _num(cfg.duration)),
                     ("scheme", cfg.scheme)])
    e = cfg.excitation
    section("excitation", [("signal", e.signal), ("t0", _num(e.t0)),
                           ("amplitude", _num(e.amplitude)), ("field", e.field),
                           ("side", e.side), ("value", _nums(e.value))])
    section("dirichlet", [("structure", ", ".join(cfg.dirichlet_structure)),
                          ("fluid", ", ".join(cfg.dirichlet_fluid))])
    obs = []
    for o in cfg.observers:
        tail = f", {o.group}" if o.group else ""
        obs.append((o.name, f"{o.kind}, {_num(o.x)}, {_num(o.y)}{tail}"))
    section("observers", obs)
    section("output", [("observer_stride", cfg.observer_stride),
                       ("snapshot_stride", cfg.snapshot_stride)])
    return "\n".join(out)
