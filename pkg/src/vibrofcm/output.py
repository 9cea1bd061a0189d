"""Writers for observer CSVs, reflectance/transmittance series, legacy VTK
snapshots and the run manifest.

Every file is written to a temporary sibling first and then renamed, so a
reader never sees a half-written file.
"""
from __future__ import annotations

import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .discretization import CellGrid, field_operator
from .scenarios import compute_rt_measures
from .timeintegration import ObserverRecords


def fmt(x) -> str:
    """17 significant digits; zero (of either sign) prints as ``0``."""
    x = float(x)
    if x == 0.0:
        return "0"
    return "%.17g" % x


def atomic_write(path, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, columns) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in zip(*columns):
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def observers_csv(records: ObserverRecords) -> str:
    cols = [records.times] + [records.data[:, i] for i in range(len(records.names))]
    return csv_text(["t"] + list(records.names), cols)


def rt_measures_csv(records: ObserverRecords) -> str:
    _, _, ref, tra = compute_rt_measures(records)
    return csv_text(["t", "P_ref", "P_tra"], [records.times, ref, tra])


def write_observers(path, records: ObserverRecords):
    atomic_write(path, observers_csv(records))


def write_rt_measures(path, records: ObserverRecords):
    atomic_write(path, rt_measures_csv(records))


def read_csv(path):
    """(header, data) of a numeric CSV written by this module."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return header, data


# ---------------------------------------------------------------------------
# legacy VTK snapshots
# ---------------------------------------------------------------------------

class SnapshotSampler:
    """Evaluates the coupled state on the vertex lattice of the fluid grid.

    Displacement is sampled where the lattice point lies on the structure
    grid and set to zero elsewhere.
    """

    def __init__(self, grid_s: CellGrid, grid_f: CellGrid, rho_f: float):
        self.grid_f = grid_f
        self.rho_f = rho_f
        pts = grid_f.vertex_points()
        self.points = pts
        self.n_s = grid_s.n_dofs
        self.op_f = field_operator(grid_f, pts)
        (x0, y0), (x1, y1) = grid_s.extent
        tol = 1e-9 * min(grid_s.cell_size)
        on_s = ((pts[:, 0] >= x0 - tol) & (pts[:, 0] <= x1 + tol)
                & (pts[:, 1] >= y0 - tol) & (pts[:, 1] <= y1 + tol))
        self.on_s = np.flatnonzero(on_s)
        self.op_s = field_operator(grid_s, pts[self.on_s]) if len(self.on_s) else None

    @property
    def dimensions(self):
        return (self.grid_f.nx + 1, self.grid_f.ny + 1, 1)

    def sample(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        psi = self.op_f @ u[self.n_s:]
        pressure = self.rho_f * (self.op_f @ v[self.n_s:])
        disp = np.zeros(len(self.points))
        if self.op_s is not None:
            d = (self.op_s @ u[:self.n_s]).reshape(-1, 2)
            disp[self.on_s] = np.hypot(d[:, 0], d[:, 1])
        return {"pressure": pressure, "displacement_magnitude": disp,
                "velocity_potential": psi}


def vtk_text(title, dimensions, origin, spacing, fields) -> str:
    """Legacy ASCII VTK, DATASET STRUCTURED_POINTS, scalar POINT_DATA."""
    n = int(np.prod(dimensions))
    buf = io.StringIO()
    buf.write("# vtk DataFile Version 3.0\n")
    buf.write(title.replace("\n", " ")[:255] + "\n")
    buf.write("ASCII\n")
    buf.write("DATASET STRUCTURED_POINTS\n")
    buf.write("DIMENSIONS %d %d %d\n" % tuple(dimensions))
    buf.write("ORIGIN %s %s %s\n" % tuple(fmt(v) for v in origin))
    buf.write("SPACING %s %s %s\n" % tuple(fmt(v) for v in spacing))
    buf.write(f"POINT_DATA {n}\n")
    for name, values in fields.items():
        values = np.asarray(values, dtype=float)
        if values.shape != (n,):
            raise ValueError(f"field {name!r} has {values.size} values, expected {n}")
        buf.write(f"SCALARS {name} double 1\n")
        buf.write("LOOKUP_TABLE default\n")
        for k in range(0, n, 6):
            buf.write(" ".join(fmt(x) for x in values[k:k + 6]) + "\n")
    return buf.getvalue()


def write_snapshot(path, sampler: SnapshotSampler, step, t, u, v):
    g = sampler.grid_f
    title = f"vibrofcm step {step} t {fmt(t)}"
    text = vtk_text(title, sampler.dimensions, (g.origin[0], g.origin[1], 0.0),
                    (g.cell_size[0], g.cell_size[1], 1.0), sampler.sample(u, v))
    atomic_write(path, text)


def parse_vtk_header(text):
    """Minimal structural check of a legacy VTK file written by ``vtk_text``.

    Returns a dict with the dimensions and the scalar field names and
    raises ValueError if the layout or the point counts do not match.
    """
    lines = text.split("\n")
    if not lines[0].startswith("# vtk DataFile Version"):
        raise ValueError("missing vtk header")
    if lines[2].strip() != "ASCII":
        raise ValueError("not an ASCII file")
    if lines[3].strip() not in ("DATASET STRUCTURED_POINTS", "DATASET STRUCTURED_GRID"):
        raise ValueError("unsupported dataset")
    dims = tuple(int(v) for v in lines[4].split()[1:4])
    n_points = int(np.prod(dims))
    k = 5
    while not lines[k].startswith("POINT_DATA"):
        k += 1
    if int(lines[k].split()[1]) != n_points:
        raise ValueError("POINT_DATA count does not match DIMENSIONS")
    k += 1
    names = []
    while k < len(lines) and lines[k].strip():
        head = lines[k].split()
        if head[0] != "SCALARS" or lines[k + 1].split()[0] != "LOOKUP_TABLE":
            raise ValueError(f"unexpected line {k + 1}: {lines[k]!r}")
        k += 2
        count = 0
        while count < n_points:
            count += len(lines[k].split())
            k += 1
        if count != n_points:
            raise ValueError(f"field {head[1]} has {count} values, expected {n_points}")
        names.append(head[1])
    return {"dimensions": dims, "fields": names}


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def write_manifest(path, config_text, dofs: dict, timings: dict, extra: dict | None = None):
    doc = {"config": config_text, "dofs": dofs,
           "timings_seconds": {k: round(float(v), 6) for k, v in timings.items()}}
    if extra:
        doc.update(extra)
    atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
