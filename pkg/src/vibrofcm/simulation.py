"""Glue between a ScenarioConfig and the numerical modules."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import (BoundaryLoad, CoupledSystem, assemble_coupling, assemble_loads,
                       assemble_mass, assemble_stiffness_fluid,
                       assemble_stiffness_structure)
from .discretization import (FLUID, STRUCTURE, CellGrid, build_quadrature, dirichlet_mask,
                             side_predicate)
from .geometry import extract_interfaces
from .scenarios import CENTRAL, TRAPEZOIDAL, ScenarioConfig
from .timeintegration import (TimeGrid, central_difference_run, make_probe,
                              trapezoidal_run)

log = logging.getLogger(__name__)


@dataclass
class Model:
    config: ScenarioConfig
    grid_s: CellGrid
    grid_f: CellGrid
    system: CoupledSystem
    n_segments: int
    timings: dict = field(default_factory=dict)

    def probes(self):
        rho_f = self.config.material.rho_f
        return [make_probe(o.name, o.kind, (o.x, o.y), self.grid_s, self.grid_f, rho_f, o.group)
                for o in self.config.observers]


def make_grids(cfg: ScenarioConfig):
    s, f = cfg.structure_grid, cfg.fluid_grid
    grid_s = CellGrid(s.origin, s.cell_size, s.cells, s.degree, s.space, 2)
    grid_f = CellGrid(f.origin, f.cell_size, f.cells, f.degree, f.space, 1)
    return grid_s, grid_f


def interface_segments(cfg, grid_s, grid_f):
    """Marching squares on the fluid cells overlapping the structure grid."""
    (sx0, sy0), (sx1, sy1) = grid_s.extent
    lo, up = grid_f.cell_bounds()
    tol = 1e-9 * min(grid_f.cell_size)
    near = ((up[:, 0] > sx0 - tol) & (lo[:, 0] < sx1 + tol)
            & (up[:, 1] > sy0 - tol) & (lo[:, 1] < sy1 + tol))
    segs = extract_interfaces(cfg.geometry, lo[near], up[near], cfg.interface_resolution)
    # keep only segments that the structure grid can host
    keep = ((np.minimum(segs.a[:, 0], segs.b[:, 0]) >= sx0 - tol)
            & (np.maximum(segs.a[:, 0], segs.b[:, 0]) <= sx1 + tol)
            & (np.minimum(segs.a[:, 1], segs.b[:, 1]) >= sy0 - tol)
            & (np.maximum(segs.a[:, 1], segs.b[:, 1]) <= sy1 + tol))
    from .geometry import SegmentSet
    return SegmentSet(segs.a[keep], segs.b[keep], segs.normal[keep],
                      np.flatnonzero(near)[segs.owner[keep]])


def build_model(cfg: ScenarioConfig) -> Model:
    timings = {}
    t = time.perf_counter()
    grid_s, grid_f = make_grids(cfg)
    mat = cfg.material
    depth, n_gp = cfg.quadrature_depth, cfg.quadrature_points
    qs = build_quadrature(grid_s, cfg.geometry, STRUCTURE, depth, n_gp, cfg.alpha_min,
                          cfg.interface_resolution)
    qf = build_quadrature(grid_f, cfg.geometry, FLUID, depth, n_gp, cfg.alpha_min,
                          cfg.interface_resolution)
    segs = interface_segments(cfg, grid_s, grid_f)
    timings["quadrature"] = time.perf_counter() - t

    t = time.perf_counter()
    Ms = assemble_mass(grid_s, qs, mat.rho_s)
    Ks = assemble_stiffness_structure(grid_s, qs, mat)
    Mf = assemble_mass(grid_f, qf, 1.0)
    Kf = assemble_stiffness_fluid(grid_f, qf, mat)
    Cc = assemble_coupling(grid_s, grid_f, segs, grid_s.degree + 1)
    exc = cfg.excitation
    load = BoundaryLoad(exc.side, tuple(exc.value))
    if exc.field == STRUCTURE:
        g_s = assemble_loads(grid_s, traction_spec=load)
        g_f = np.zeros(grid_f.n_dofs)
    else:
        g_s = np.zeros(grid_s.n_dofs)
        g_f = assemble_loads(grid_f, traction_spec=load, c=mat.c)
    fixed_s = dirichlet_mask(grid_s, side_predicate(grid_s, *cfg.dirichlet_structure)) \
        if cfg.dirichlet_structure else np.zeros(0, dtype=int)
    fixed_f = dirichlet_mask(grid_f, side_predicate(grid_f, *cfg.dirichlet_fluid)) \
        if cfg.dirichlet_fluid else np.zeros(0, dtype=int)
    sys = CoupledSystem(Ms, Mf, Ks, Kf, Cc, mat.rho_f, mat.c, g_s, g_f, fixed_s, fixed_f)
    timings["assembly"] = time.perf_counter() - t
    log.info("model %s: %d structure DOFs, %d fluid DOFs, %d interface segments",
             cfg.name, grid_s.n_dofs, grid_f.n_dofs, len(segs))
    return Model(cfg, grid_s, grid_f, sys, len(segs), timings)


def run_model(model: Model, scheme=None, dt=None, duration=None, callback=None,
              snapshot_stride=None):
    cfg = model.config
    scheme = scheme or cfg.scheme
    dt = cfg.dt if dt is None else dt
    duration = cfg.duration if duration is None else duration
    tg = TimeGrid.from_duration(dt, duration)
    snap = cfg.snapshot_stride if snapshot_stride is None else snapshot_stride
    excitation = cfg.excitation.ricker
    run = {CENTRAL: central_difference_run, TRAPEZOIDAL: trapezoidal_run}[scheme]
    t = time.perf_counter()
    records = run(model.system, tg, excitation, model.probes(), stride=cfg.observer_stride,
                  callback=callback, snapshot_stride=snap)
    model.timings["time_integration"] = time.perf_counter() - t
    records.meta.update(scheme=scheme, n_steps=tg.n_steps)
    return records


def simulate(cfg: ScenarioConfig, **kw):
    return run_model(build_model(cfg), **kw)
